"""Fixed points, stability, phase maps, flow fields and convergence times
for the spherical overlap dynamics.

The 1-D flow drho/dalpha always has one or three fixed points in (-1, 1):
one stable point in the easy regime, or two stable points bracketing an
unstable one in the hybrid-hard regime, where a random initialisation is
typically captured by the low-overlap attractor.  A violation of that
structure is surfaced as an error, never truncated away, because it would
mean the flow itself is wrong.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import AllCorrect, EpisodeSpec
from .errors import (
    ConsistencyError,
    ConvergenceTimeout,
    CriticalPointNotFound,
    DomainError,
)
from .ode import (
    GridSpec,
    IntegratorSpec,
    OdeConfig,
    _rhs_all_correct,
    _rk4_between,
    adaptive_step,
    integrate,
    rhs_spherical,
    rhs_spherical_grid,
)

STABLE = "stable"
UNSTABLE = "unstable"

EASY = "easy"
HYBRID_HARD = "hybrid_hard"

# Time axes are reported as t = alpha * D_REF to match simulated runs at the
# reference dimension.
D_REF = 900.0


@dataclass(frozen=True)
class FixedPoint:
    rho: float
    stability: str
    residual: float


@dataclass(frozen=True)
class FixedPointSet:
    points: tuple[FixedPoint, ...]
    T: int
    eta1: float
    eta2: float
    Q: float

    @property
    def label(self) -> str:
        return EASY if len(self.points) == 1 else HYBRID_HARD

    @property
    def stable(self) -> tuple[FixedPoint, ...]:
        return tuple(p for p in self.points if p.stability == STABLE)


def _scan_brackets(f_grid: np.ndarray, grid: np.ndarray) -> list[tuple[float, float]]:
    """Sign-change brackets of f on the grid; exact zeros get a two-cell
    bracket around them."""
    brackets = []
    sign = np.sign(f_grid)
    zero_idx = np.flatnonzero(sign == 0.0)
    for i in zero_idx:
        lo = grid[i - 1] if i > 0 else grid[i]
        hi = grid[i + 1] if i + 1 < len(grid) else grid[i]
        brackets.append((lo, hi))
    flips = np.flatnonzero(sign[:-1] * sign[1:] < 0.0)
    for i in flips:
        brackets.append((grid[i], grid[i + 1]))
    brackets.sort()
    return brackets


def _bisect(f, lo: float, hi: float, tol: float) -> float:
    f_lo = f(lo)
    for _ in range(128):
        if hi - lo < tol:
            break
        mid = 0.5 * (lo + hi)
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_lo > 0.0) == (f_mid > 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def find_fixed_points(
    T: int,
    eta1: float,
    eta2: float,
    Q: float = 1.0,
    *,
    n_scan: int = 20001,
    delta: float = 1e-9,
    refine_tol: float = 1e-10,
) -> FixedPointSet:
    """Roots of the spherical flow on (-1, 1) with stability labels.

    A uniform scan over (-1+delta, 1-delta) brackets every sign change and
    bisection refines each root to refine_tol in rho.  More than three roots
    (or a broken stable/unstable alternation) raises ConsistencyError.
    """
    if eta1 <= 0.0:
        raise DomainError(f"eta1 must be positive, got {eta1} (zero-rate flow is degenerate)")
    if eta2 < 0.0 or Q <= 0.0 or T < 1:
        raise DomainError(f"need eta2 >= 0, Q > 0, T >= 1; got ({eta1}, {eta2}, {Q}, {T})")
    if n_scan < 10_000:
        raise DomainError(f"scan resolution must be >= 10^4 points, got {n_scan}")

    grid = np.linspace(-1.0 + delta, 1.0 - delta, n_scan)
    f_grid = rhs_spherical_grid(grid, Q, float(T), eta1, eta2)

    def f(r: float) -> float:
        return rhs_spherical(r, Q, T, eta1, eta2)

    points = []
    for lo, hi in _scan_brackets(f_grid, grid):
        root = _bisect(f, lo, hi, refine_tol)
        stability = STABLE if f(lo) > 0.0 and f(hi) < 0.0 else UNSTABLE
        points.append(FixedPoint(rho=root, stability=stability, residual=abs(f(root))))

    if len(points) not in (1, 3):
        raise ConsistencyError(
            f"expected 1 or 3 fixed points, found {len(points)} at "
            f"(T={T}, eta1={eta1}, eta2={eta2}, Q={Q})"
        )
    if len(points) == 3:
        kinds = [p.stability for p in points]
        if kinds != [STABLE, UNSTABLE, STABLE]:
            raise ConsistencyError(f"stability pattern {kinds} violates the 1-D flow structure")
    elif points[0].stability != STABLE:
        raise ConsistencyError("a solitary fixed point of the 1-D flow must be stable")
    return FixedPointSet(points=tuple(points), T=T, eta1=eta1, eta2=eta2, Q=Q)


def _root_count(T: int, eta1: float, eta2: float, Q: float, n_scan: int) -> int:
    """Sign-change count without refinement or structural checks; an exact
    tangency (2) sits on the fold boundary and is classified with 3."""
    grid = np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, n_scan)
    f_grid = rhs_spherical_grid(grid, Q, float(T), eta1, eta2)
    return len(_scan_brackets(f_grid, grid))


# ---------------------------------------------------------------------------
# Phase map
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PhaseCell:
    eta1: float
    eta2: float
    label: str
    n_fixed_points: int


@dataclass(frozen=True)
class PhaseMap:
    eta1_values: np.ndarray
    eta2_values: np.ndarray
    cells: tuple[PhaseCell, ...]
    T: int
    Q: float

    def hybrid_fraction(self) -> float:
        hard = sum(1 for c in self.cells if c.label == HYBRID_HARD)
        return hard / len(self.cells)


def phase_map(
    T: int,
    Q: float,
    eta1_values: Sequence[float],
    eta2_values: Sequence[float],
    *,
    n_scan: int = 20001,
) -> PhaseMap:
    """Fixed-point count per (eta1, eta2) cell: 1 -> easy, 3 -> hybrid-hard.

    Cells are emitted with eta1 as the outer loop.  A count of 2 can only be
    an exactly-tangent fold sitting on a grid cell; it closes with the
    hybrid-hard region.  Counts above 3 are structural violations and raise.
    """
    e1 = np.asarray(list(eta1_values), dtype=float)
    e2 = np.asarray(list(eta2_values), dtype=float)
    if np.any(e1 <= 0.0) or np.any(e2 < 0.0):
        raise DomainError("eta1 grid must be positive, eta2 grid non-negative")

    grid = np.linspace(-1.0 + 1e-9, 1.0 - 1e-9, n_scan)
    cells = []
    for a in e1:
        for b in e2:
            f_grid = rhs_spherical_grid(grid, Q, float(T), float(a), float(b))
            count = len(_scan_brackets(f_grid, grid))
            if count > 3:
                raise ConsistencyError(
                    f"{count} fixed points at (eta1={a}, eta2={b}, T={T}, Q={Q})"
                )
            cells.append(
                PhaseCell(
                    eta1=float(a),
                    eta2=float(b),
                    label=EASY if count == 1 else HYBRID_HARD,
                    n_fixed_points=count,
                )
            )
    return PhaseMap(eta1_values=e1, eta2_values=e2, cells=tuple(cells), T=T, Q=Q)


# ---------------------------------------------------------------------------
# Unconstrained flow field
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FlowField:
    rho_values: np.ndarray
    q_values: np.ndarray
    drho: np.ndarray  # shape (len(rho), len(q))
    dq: np.ndarray
    outcome: str  # "aligned" | "suboptimal" for the reference trajectory
    final_rho: float
    trajectory: object


def flow_outcome(
    T: int,
    eta1: float,
    eta2: float,
    *,
    alpha_max: float = 1e4,
    outcome_eps: float = 0.05,
    rho0: float = 0.0,
    q0: float = 1.0,
) -> tuple[str, float, object]:
    """Integrate the unconstrained flow from (rho0, q0) and classify where it
    lands: 'aligned' when the final error is below outcome_eps."""
    config = OdeConfig(
        spec=EpisodeSpec(T=T),
        protocol=AllCorrect(eta1=eta1, eta2=eta2),
        r0=rho0 * math.sqrt(q0),
        q0=q0,
        alpha_max=alpha_max,
        integrator=IntegratorSpec(method="adaptive", step=0.1, atol=1e-9),
        grid=GridSpec(kind="log", n_points=200),
    )
    traj = integrate(config)
    final_rho = float(traj.rho[-1])
    eps_final = math.acos(min(1.0, max(-1.0, final_rho))) / math.pi
    label = "aligned" if eps_final < outcome_eps else "suboptimal"
    return label, final_rho, traj


def flow_field(
    T: int,
    eta1: float,
    eta2: float,
    rho_values: Sequence[float],
    q_values: Sequence[float],
    *,
    alpha_max: float = 1e4,
    outcome_eps: float = 0.05,
    rho0: float = 0.0,
    q0: float = 1.0,
) -> FlowField:
    """(drho, dQ) over a (rho, Q) mesh for the all-correct condition, plus a
    reference trajectory from (rho0, q0) classified by its final error."""
    rv = np.asarray(list(rho_values), dtype=float)
    qv = np.asarray(list(q_values), dtype=float)
    drho = np.empty((len(rv), len(qv)))
    dq = np.empty((len(rv), len(qv)))
    for i, r in enumerate(rv):
        for j, q in enumerate(qv):
            dR, dQ = _rhs_all_correct(r * math.sqrt(q), q, float(T), eta1, eta2)
            dq[i, j] = dQ
            drho[i, j] = dR / math.sqrt(q) - (r * math.sqrt(q)) * dQ / (2.0 * q * math.sqrt(q))

    outcome, final_rho, traj = flow_outcome(
        T, eta1, eta2, alpha_max=alpha_max, outcome_eps=outcome_eps, rho0=rho0, q0=q0
    )
    return FlowField(
        rho_values=rv,
        q_values=qv,
        drho=drho,
        dq=dq,
        outcome=outcome,
        final_rho=final_rho,
        trajectory=traj,
    )


# ---------------------------------------------------------------------------
# Convergence time and critical slowing down
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConvergenceResult:
    t: float  # alpha * D_REF, episode units of the reference dimension
    alpha: float
    rho_star: float
    rho_threshold: float
    eta2: float


def convergence_time(
    T: int,
    eta1: float,
    eta2: float,
    Q: float = 1.0,
    rho0: float = 0.0,
    fraction: float = 0.99,
    *,
    alpha_max: float = 1e7,
    atol: float = 1e-10,
    d_ref: float = D_REF,
) -> ConvergenceResult:
    """Time for the spherical flow from rho0 to come within `fraction` of its
    reachable fixed point (threshold fraction*rho_star when approaching from
    below, mirrored when approaching from above).

    Times are reported as t = alpha * d_ref.  Not converging by alpha_max
    raises ConvergenceTimeout carrying the partial result.
    """
    if not (0.0 < fraction < 1.0):
        raise DomainError(f"fraction must lie in (0, 1), got {fraction}")
    fps = find_fixed_points(T, eta1, eta2, Q)
    f0 = rhs_spherical(rho0, Q, T, eta1, eta2)
    if f0 == 0.0:
        raise DomainError(f"rho0 = {rho0} is itself a fixed point")
    if f0 > 0.0:
        candidates = [p for p in fps.stable if p.rho > rho0]
    else:
        candidates = [p for p in fps.stable if p.rho < rho0]
    if not candidates:
        raise DomainError(
            f"no stable fixed point beyond rho0 = {rho0} in the flow direction; "
            "rho0 sits at or past the reachable attractor"
        )
    if f0 > 0.0:
        rho_star = min(candidates, key=lambda p: p.rho).rho
        threshold = rho_star - (1.0 - fraction) * abs(rho_star)
        crossed = lambda r: r >= threshold
    else:
        rho_star = max(candidates, key=lambda p: p.rho).rho
        threshold = rho_star + (1.0 - fraction) * abs(rho_star)
        crossed = lambda r: r <= threshold

    def f(alpha, y):
        return (rhs_spherical(y[0], Q, T, eta1, eta2),)

    alpha, y, h = 0.0, (rho0,), 0.1
    if crossed(y[0]):
        return ConvergenceResult(0.0, 0.0, rho_star, threshold, eta2)
    while alpha < alpha_max:
        alpha_prev, y_prev = alpha, y
        alpha, y, h = adaptive_step(f, alpha, y, h, atol, 0.0)
        if crossed(y[0]):
            # refine the crossing within the accepted step
            span = alpha - alpha_prev
            sub = 64
            hh = span / sub
            yy = y_prev
            aa = alpha_prev
            for _ in range(sub):
                yy_new = _rk4_between(f, aa, yy, aa + hh, hh)
                aa += hh
                if crossed(yy_new[0]):
                    frac = (threshold - yy[0]) / (yy_new[0] - yy[0])
                    alpha_cross = aa - hh + frac * hh
                    return ConvergenceResult(
                        alpha_cross * d_ref, alpha_cross, rho_star, threshold, eta2
                    )
                yy = yy_new
            return ConvergenceResult(alpha * d_ref, alpha, rho_star, threshold, eta2)
    raise ConvergenceTimeout(
        f"did not reach {threshold:.6f} by alpha = {alpha_max:g} (rho = {y[0]:.6f})",
        alpha_reached=alpha,
        rho_reached=y[0],
    )


@dataclass(frozen=True)
class CriticalPenalty:
    eta_crit: float
    bracket_lo: float
    bracket_hi: float
    tol: float


def critical_penalty(
    T: int,
    eta1: float,
    Q: float = 1.0,
    tol: float = 1e-6,
    *,
    eta2_max: float = 2.0,
    coarse: int = 65,
    n_scan: int = 40001,
) -> CriticalPenalty:
    """Bisect the penalty at which the flow folds from one to three fixed
    points.  Raises CriticalPointNotFound when the scanned range stays
    single-rooted (the fold area shrinks to nothing at small T)."""
    if eta1 <= 0.0 or tol <= 0.0:
        raise DomainError("need eta1 > 0 and tol > 0")
    etas = np.linspace(0.0, eta2_max, coarse)
    counts = [_root_count(T, eta1, float(b), Q, n_scan) for b in etas]
    if counts[0] != 1:
        raise ConsistencyError(f"zero penalty already yields {counts[0]} fixed points")
    first = next((i for i, c in enumerate(counts) if c >= 2), None)
    if first is None:
        raise CriticalPointNotFound(
            f"no 1->3 fixed-point transition for eta2 in [0, {eta2_max}] at T={T}, eta1={eta1}"
        )
    lo, hi = float(etas[first - 1]), float(etas[first])
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _root_count(T, eta1, mid, Q, n_scan) >= 2:
            hi = mid
        else:
            lo = mid
    return CriticalPenalty(eta_crit=0.5 * (lo + hi), bracket_lo=lo, bracket_hi=hi, tol=tol)
