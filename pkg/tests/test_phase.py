import math

import numpy as np
import pytest

from rlplab.core import AllCorrect, EpisodeSpec
from rlplab.errors import (
    ConvergenceTimeout,
    CriticalPointNotFound,
    DomainError,
)
from rlplab.ode import GridSpec, IntegratorSpec, OdeConfig, integrate
from rlplab.phase import (
    EASY,
    HYBRID_HARD,
    STABLE,
    UNSTABLE,
    convergence_time,
    critical_penalty,
    find_fixed_points,
    flow_field,
    flow_outcome,
    phase_map,
)


class TestFixedPoints:
    def test_vanilla_single_stable_point(self):
        fps = find_fixed_points(13, 1.0, 0.0, 1.0)
        assert len(fps.points) == 1
        point = fps.points[0]
        assert point.stability == STABLE
        assert point.rho == pytest.approx(0.957, abs=5e-3)
        assert point.residual < 1e-9
        assert fps.label == EASY

    def test_high_penalty_low_attractor(self):
        fps = find_fixed_points(13, 1.0, 1.0, 1.0)
        assert all(p.stability == STABLE for p in fps.stable)
        assert min(p.rho for p in fps.stable) < 0.2

    def test_hybrid_structure(self):
        fps = find_fixed_points(13, 1.0, 0.3, 1.0)
        assert len(fps.points) == 3
        kinds = [p.stability for p in fps.points]
        assert kinds == [STABLE, UNSTABLE, STABLE]
        assert fps.label == HYBRID_HARD
        assert all(p.residual < 1e-9 for p in fps.points)

    def test_zero_rates_degenerate(self):
        with pytest.raises(DomainError):
            find_fixed_points(13, 0.0, 0.0, 1.0)

    def test_scan_resolution_guard(self):
        with pytest.raises(DomainError):
            find_fixed_points(13, 1.0, 0.0, 1.0, n_scan=100)

    def test_stability_consistent_with_integration(self):
        fps = find_fixed_points(13, 1.0, 0.3, 1.0)
        low, middle, high = fps.points

        def final_rho(rho0):
            config = OdeConfig(
                spec=EpisodeSpec(T=13),
                protocol=AllCorrect(eta1=1.0, eta2=0.3),
                r0=rho0,
                q0=1.0,
                alpha_max=200_000.0,
                spherical=True,
                integrator=IntegratorSpec("adaptive", atol=1e-11),
                grid=GridSpec(kind="linear", n_points=2),
            )
            return float(integrate(config).rho[-1])

        # perturbations around a stable point return to it
        assert final_rho(high.rho + 1e-4) == pytest.approx(high.rho, abs=1e-6)
        assert final_rho(high.rho - 1e-4) == pytest.approx(high.rho, abs=1e-6)
        # perturbations around the unstable point run away to the neighbours
        assert final_rho(middle.rho + 1e-4) == pytest.approx(high.rho, abs=1e-6)
        assert final_rho(middle.rho - 1e-4) == pytest.approx(low.rho, abs=1e-6)


class TestPhaseMap:
    def test_labels_and_zero_penalty_column(self):
        e1 = np.linspace(0.05, 1.0, 12)
        e2 = np.linspace(0.0, 1.0, 12)
        pm = phase_map(13, 1.0, e1, e2, n_scan=10_001)
        assert 0.0 < pm.hybrid_fraction() < 1.0
        for cell in pm.cells:
            if cell.eta2 == 0.0:
                assert cell.label == EASY

    def test_labels_invariant_under_scan_refinement(self):
        e1 = np.linspace(0.05, 1.0, 20)
        e2 = np.linspace(0.0, 1.0, 20)
        coarse = phase_map(13, 1.0, e1, e2, n_scan=10_001)
        fine = phase_map(13, 1.0, e1, e2, n_scan=100_001)
        assert [c.label for c in coarse.cells] == [c.label for c in fine.cells]

    def test_shorter_episodes_shrink_hybrid_region(self):
        e1 = np.linspace(0.05, 1.0, 15)
        e2 = np.linspace(0.0, 1.0, 15)
        assert phase_map(8, 1.0, e1, e2).hybrid_fraction() < phase_map(
            13, 1.0, e1, e2
        ).hybrid_fraction()

    def test_grid_validation(self):
        with pytest.raises(DomainError):
            phase_map(13, 1.0, [0.0, 1.0], [0.0])


class TestFlowField:
    def test_zero_rates_zero_field(self):
        field = flow_field(8, 0.0, 0.0, [0.0, 0.5], [1.0, 10.0], alpha_max=10.0)
        assert np.all(field.drho == 0.0)
        assert np.all(field.dq == 0.0)

    def test_vanilla_aligns(self):
        label, final_rho, _ = flow_outcome(8, 1.0, 0.0, alpha_max=1e4)
        assert label == "aligned"
        assert math.acos(final_rho) / math.pi < 0.05

    def test_strong_penalty_traps(self):
        label, final_rho, _ = flow_outcome(8, 1.0, 0.1, alpha_max=1e4)
        assert label == "suboptimal"
        assert final_rho < 0.3

    def test_field_shape(self):
        field = flow_field(8, 1.0, 0.05, np.linspace(0, 0.9, 4), [0.5, 1.0, 2.0], alpha_max=50.0)
        assert field.drho.shape == (4, 3)
        assert field.dq.shape == (4, 3)


class TestConvergenceTime:
    def test_vanilla_baseline(self):
        res = convergence_time(13, 1.0, 0.0)
        assert res.t > 0.0
        assert res.rho_star == pytest.approx(0.957, abs=5e-3)
        assert res.t == pytest.approx(res.alpha * 900.0, rel=1e-12)

    def test_slowing_down_towards_criticality(self):
        crit = critical_penalty(13, 1.0, 1.0, tol=1e-6)
        times = [
            convergence_time(13, 1.0, crit.eta_crit - delta).t for delta in (0.1, 0.02, 0.004)
        ]
        assert times[0] < times[1] < times[2]

    def test_timeout_carries_partial_state(self):
        with pytest.raises(ConvergenceTimeout) as info:
            convergence_time(13, 1.0, 0.0, alpha_max=5.0)
        assert info.value.alpha_reached >= 5.0
        assert 0.0 <= info.value.rho_reached < 0.1

    def test_rho0_at_fixed_point_rejected(self):
        fps = find_fixed_points(13, 1.0, 0.0, 1.0)
        with pytest.raises(DomainError):
            convergence_time(13, 1.0, 0.0, rho0=fps.points[0].rho)


class TestCriticalPenalty:
    def test_exists_for_long_episodes(self):
        cp = critical_penalty(13, 1.0, 1.0, tol=1e-6)
        assert 0.0 < cp.eta_crit < 1.0
        assert cp.bracket_hi - cp.bracket_lo <= 1e-6
        below = find_fixed_points(13, 1.0, cp.bracket_lo, 1.0)
        above = find_fixed_points(13, 1.0, cp.bracket_hi + 1e-4, 1.0)
        assert len(below.points) == 1
        assert len(above.points) == 3

    def test_absent_for_short_episodes(self):
        with pytest.raises(CriticalPointNotFound):
            critical_penalty(2, 1.0, 1.0, tol=1e-4)


class TestSpeedAccuracySignature:
    def test_penalty_fast_early_capped_late(self):
        # above the fold the penalty run starts faster yet lands on the low
        # attractor, far below the zero-penalty asymptote
        T = 13
        crit = critical_penalty(T, 1.0, 1.0, tol=1e-5)
        eta2 = crit.eta_crit + 0.1

        def rho_at(eta2_value, alphas):
            config = OdeConfig(
                spec=EpisodeSpec(T=T),
                protocol=AllCorrect(eta1=1.0, eta2=eta2_value),
                r0=0.0,
                q0=1.0,
                alpha_max=200_000.0,
                spherical=True,
                integrator=IntegratorSpec("adaptive", atol=1e-10),
                grid=GridSpec(kind="log", n_points=300, alpha_min=0.1),
            )
            traj = integrate(config)
            return np.interp(alphas, traj.alpha, traj.rho), float(traj.rho[-1])

        early = np.array([1.0, 3.0, 10.0])
        pen_early, pen_final = rho_at(eta2, early)
        van_early, van_final = rho_at(0.0, early)
        assert np.all(pen_early > van_early)
        assert van_final > pen_final
