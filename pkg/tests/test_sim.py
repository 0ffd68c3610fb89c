import math

import numpy as np
import pytest

from rlplab.core import AllCorrect, Breadcrumb, EpisodeSpec, NOrMore, OrderState, Subtask
from rlplab.errors import DomainError, NumericsError
from rlplab.ode import rhs_all_correct
from rlplab.sim import (
    InitSpec,
    SimConfig,
    _STREAM_EPISODES,
    _episode_stream,
    _make_teacher_student,
    expected_update_oracle,
    logistic_policy_check,
    run_episode,
    simulate,
)

PROTOCOLS = [
    AllCorrect(eta1=1.0, eta2=0.0),
    AllCorrect(eta1=1.0, eta2=0.5),
    NOrMore(n=3, eta1=1.0),
    Breadcrumb(eta1=1.0, beta=0.2),
    Subtask(T0=2, r_sub=0.3, eta1=1.0),
]


def _replay(config: SimConfig):
    """Pure-NumPy replay of a simulate() run on the identical variate stream."""
    w, teacher = _make_teacher_student(config)
    gen = _episode_stream(config.seed, _STREAM_EPISODES)
    stride = config.stride
    sqrtD = math.sqrt(config.D)
    Rs, Qs = [], []
    for ep in range(config.n_episodes):
        dw, _ = run_episode(
            w,
            teacher,
            config.spec,
            config.protocol,
            gen,
            policy=config.policy,
            input_mode=config.input_mode,
        )
        if np.any(dw != 0.0):
            w = w + dw
            if config.spherical:
                w = w * (sqrtD / math.sqrt(float(np.dot(w, w))))
        if (ep + 1) % stride == 0:
            Rs.append(float(np.dot(w, teacher)) / config.D)
            Qs.append(float(np.dot(w, w)) / config.D)
    return np.array(Rs), np.array(Qs), w


class TestRunEpisode:
    def test_aligned_student_always_rewarded(self):
        D = 80
        rng = np.random.default_rng(0)
        w = np.zeros(D)
        w[0] = math.sqrt(D)
        for _ in range(50):
            _, rec = run_episode(w, w, EpisodeSpec(T=6), AllCorrect(eta1=1.0), rng)
            assert rec.all_correct and rec.reward == 1.0

    def test_coin_flip_success_rate(self):
        D, T, n_ep = 60, 12, 120_000
        gen = np.random.Generator(np.random.Philox(key=7))
        w = np.zeros(D)
        w[1] = math.sqrt(D)  # orthogonal to the teacher below
        teacher = np.zeros(D)
        teacher[0] = math.sqrt(D)
        wins = 0
        spec = EpisodeSpec(T=T)
        proto = AllCorrect(eta1=1.0)
        for _ in range(n_ep):
            _, rec = run_episode(w, teacher, spec, proto, gen)
            wins += rec.all_correct
        rate = wins / n_ep
        expect = 2.0**-T
        # ~4.7 sigma window around the binomial rate
        assert abs(rate - expect) < 4.7 * math.sqrt(expect * (1 - expect) / n_ep)

    def test_breadcrumb_return_rollback(self):
        # gamma = 1, beta = 0.1, eta1 = 0, T = 2, both steps correct:
        # G1 = 0.2, G2 = 0.1 and dw = (0.2 y1 x1 + 0.1 y2 x2) / (2 sqrt(D))
        D = 40
        w = np.zeros(D)
        w[0] = math.sqrt(D)
        gen = np.random.Generator(np.random.Philox(key=3))
        for _ in range(40):
            probe = np.random.Generator(np.random.Philox(key=3))
            probe.bit_generator.state = gen.bit_generator.state
            X = probe.standard_normal((2, D))
            dw, rec = run_episode(w, w, EpisodeSpec(T=2), Breadcrumb(eta1=0.0, beta=0.1), gen)
            y = np.where(X @ w > 0.0, 1.0, -1.0)
            expected = (0.2 * y[0] * X[0] + 0.1 * y[1] * X[1]) / (2.0 * math.sqrt(D))
            assert rec.all_correct
            assert np.allclose(dw, expected, rtol=1e-12, atol=1e-18)

    def test_nonfinite_weights_error(self):
        D = 10
        w = np.full(D, np.inf)
        with pytest.raises(NumericsError, match="episode 17"):
            run_episode(
                w,
                np.ones(D) * math.sqrt(D) / math.sqrt(D),
                EpisodeSpec(T=2),
                AllCorrect(eta1=1.0),
                np.random.default_rng(0),
                episode_index=17,
            )


class TestSimulateKernel:
    @pytest.mark.parametrize("protocol", PROTOCOLS, ids=lambda p: type(p).__name__)
    def test_matches_numpy_replay(self, protocol):
        config = SimConfig(
            D=48,
            spec=EpisodeSpec(T=4),
            protocol=protocol,
            n_episodes=400,
            seed=1234,
            init=InitSpec(q0=1.5, rho0=0.25),
            record_every=40,
        )
        traj = simulate(config)
        Rs, Qs, _ = _replay(config)
        assert np.array_equal(traj.R[1:], Rs)
        assert np.array_equal(traj.Q[1:], Qs)

    @pytest.mark.parametrize("mode", ["gaussian", "half_gaussian"])
    @pytest.mark.parametrize("policy", ["deterministic", "logistic"])
    def test_modes_match_numpy_replay(self, mode, policy):
        config = SimConfig(
            D=32,
            spec=EpisodeSpec(T=3),
            protocol=AllCorrect(eta1=1.0, eta2=0.3),
            n_episodes=250,
            seed=77,
            record_every=25,
            policy=policy,
            input_mode=mode,
            spherical=True,
        )
        traj = simulate(config)
        Rs, Qs, _ = _replay(config)
        assert np.array_equal(traj.R[1:], Rs)
        assert np.array_equal(traj.Q[1:], Qs)

    def test_deterministic_reruns(self):
        config = SimConfig(
            D=64,
            spec=EpisodeSpec(T=5),
            protocol=Breadcrumb(eta1=1.0, beta=0.1),
            n_episodes=1000,
            seed=5,
            record_every=100,
        )
        a = simulate(config)
        b = simulate(config)
        for col in a.COLUMNS:
            assert np.array_equal(a.column(col), b.column(col), equal_nan=True)
        c = simulate(
            SimConfig(
                D=64,
                spec=EpisodeSpec(T=5),
                protocol=Breadcrumb(eta1=1.0, beta=0.1),
                n_episodes=1000,
                seed=6,
                record_every=100,
            )
        )
        assert not np.array_equal(a.R, c.R)

    def test_zero_rates_frozen(self):
        config = SimConfig(
            D=40,
            spec=EpisodeSpec(T=3),
            protocol=AllCorrect(eta1=0.0, eta2=0.0),
            n_episodes=300,
            seed=9,
            record_every=30,
            init=InitSpec(q0=2.0, rho0=0.5),
        )
        traj = simulate(config)
        assert np.allclose(traj.R, traj.R[0], atol=0)
        assert np.allclose(traj.Q, 2.0, atol=0)

    def test_spherical_norm_pinned(self):
        config = SimConfig(
            D=50,
            spec=EpisodeSpec(T=2),
            protocol=AllCorrect(eta1=1.0, eta2=0.5),
            n_episodes=500,
            seed=3,
            record_every=50,
            spherical=True,
        )
        traj = simulate(config)
        assert np.max(np.abs(traj.Q - 1.0)) <= 1e-12

    def test_exact_initial_overlaps(self):
        config = SimConfig(
            D=200,
            spec=EpisodeSpec(T=2),
            protocol=AllCorrect(eta1=0.0),
            n_episodes=1,
            seed=42,
            init=InitSpec(q0=1.7, rho0=0.6),
            record_every=1,
        )
        w, teacher = _make_teacher_student(config)
        assert np.dot(teacher, teacher) / config.D == pytest.approx(1.0, abs=1e-12)
        assert np.dot(w, teacher) / config.D == pytest.approx(0.6 * math.sqrt(1.7), abs=1e-12)
        assert np.dot(w, w) / config.D == pytest.approx(1.7, abs=1e-12)

    def test_single_step_alignment_drift(self):
        # with T = 1 and positive reward the overlap must grow on average
        finals = []
        for seed in range(10):
            config = SimConfig(
                D=900,
                spec=EpisodeSpec(T=1),
                protocol=AllCorrect(eta1=1.0, eta2=0.0),
                n_episodes=100_000,
                seed=1000 + seed,
                record_every=100_000,
            )
            traj = simulate(config)
            finals.append(traj.rho[-1])
        assert np.mean(finals) > 0.2  # far above the 1/sqrt(D) noise floor


class TestOracle:
    def test_single_step_alignment_rate(self):
        est = expected_update_oracle(
            OrderState(R=0.0, Q=1.0),
            EpisodeSpec(T=1),
            AllCorrect(eta1=1.0, eta2=0.0),
            D=500,
            n_samples=1_000_000,
            seed=11,
        )
        target = 1.0 / math.sqrt(2.0 * math.pi)
        assert abs(est.dR - target) <= 3.0 * est.dR_se

    def test_zero_rates_exact_zero(self):
        est = expected_update_oracle(
            OrderState(R=0.0, Q=1.0),
            EpisodeSpec(T=3),
            Breadcrumb(eta1=0.0, beta=0.0),
            D=100,
            n_samples=2000,
            seed=1,
        )
        assert est.dR == 0.0 and est.dQ == 0.0 and est.drho == 0.0

    def test_n_equals_T_matches_all_correct(self):
        state = OrderState(R=0.5, Q=1.0)
        spec = EpisodeSpec(T=13)
        a = expected_update_oracle(
            state, spec, NOrMore(n=13, eta1=1.0), D=400, n_samples=300_000, seed=21
        )
        b = expected_update_oracle(
            state, spec, AllCorrect(eta1=1.0, eta2=0.0), D=400, n_samples=300_000, seed=22
        )
        assert abs(a.dR - b.dR) <= 3.0 * math.hypot(a.dR_se, b.dR_se)
        assert abs(a.dQ - b.dQ) <= 3.0 * math.hypot(a.dQ_se, b.dQ_se)

    def test_half_gaussian_equivalence(self):
        state = OrderState(R=0.3, Q=1.0)
        spec = EpisodeSpec(T=4)
        proto = AllCorrect(eta1=1.0, eta2=0.2)
        g = expected_update_oracle(state, spec, proto, D=400, n_samples=200_000, seed=31)
        h = expected_update_oracle(
            state, spec, proto, D=400, n_samples=200_000, seed=32, input_mode="half_gaussian"
        )
        for attr in ("dR", "dQ", "drho", "reward"):
            se = math.hypot(getattr(g, attr + "_se"), getattr(h, attr + "_se"))
            assert abs(getattr(g, attr) - getattr(h, attr)) <= 4.0 * se

    def test_reward_mean_matches_closed_form(self):
        from rlplab.core import expected_reward

        state = OrderState(R=0.4, Q=1.3)
        spec = EpisodeSpec(T=5)
        proto = Subtask(T0=2, r_sub=0.3, eta1=1.0)
        est = expected_update_oracle(state, spec, proto, D=300, n_samples=200_000, seed=41)
        closed = expected_reward(proto, spec, state.rho)
        assert abs(est.reward - closed) <= 4.0 * est.reward_se

    def test_rejects_tiny_sample_budget(self):
        with pytest.raises(DomainError):
            expected_update_oracle(
                OrderState(R=0.0, Q=1.0), EpisodeSpec(T=2), AllCorrect(eta1=1.0), n_samples=10
            )

    def test_matches_flow_at_moderate_state(self):
        state = OrderState(R=0.6, Q=1.0)
        spec = EpisodeSpec(T=6)
        proto = AllCorrect(eta1=1.0, eta2=0.5)
        est = expected_update_oracle(state, spec, proto, D=1000, n_samples=300_000, seed=51)
        dR, dQ = rhs_all_correct(state, spec.T, proto.eta1, proto.eta2)
        assert abs(est.dR - dR) <= 4.0 * est.dR_se
        assert abs(est.dQ - dQ) <= 4.0 * est.dQ_se


class TestLogisticPolicy:
    def test_small_field_alignment(self):
        report = logistic_policy_check(
            OrderState(R=0.0, Q=0.01), D=100, n_samples=100_000, seed=8
        )
        assert report.cosine > 0.9
        # the deterministic-policy comparison carries a genuine 1/sqrt(2)
        # geometry at rho = 0 and is reported without a threshold
        assert 0.5 < report.cosine_sign_policy < 1.0

    def test_zero_reward_zero_updates(self):
        report = logistic_policy_check(
            OrderState(R=0.0, Q=0.01),
            D=50,
            n_samples=5000,
            seed=2,
            protocol=AllCorrect(eta1=0.0, eta2=0.0),
        )
        assert report.naive_norm == 0.0 and report.reinforce_norm == 0.0
        assert report.sign_policy_norm == 0.0
        assert report.cosine == 0.0

    def test_outside_small_field_regime_still_reports(self):
        report = logistic_policy_check(
            OrderState(R=0.99, Q=1.0), D=50, n_samples=5000, seed=3
        )
        assert math.isfinite(report.cosine)

    def test_large_q_rejected(self):
        with pytest.raises(DomainError):
            logistic_policy_check(OrderState(R=0.0, Q=4.0), D=50, n_samples=5000, seed=4)
