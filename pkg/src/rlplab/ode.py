"""Closed-form order-parameter dynamics and deterministic integration.

Continuous time is alpha = episodes/D.  The unconstrained engine evolves
(R, Q); the spherical engine renormalises the student weight, which freezes
Q and reduces the dynamics to the single variable rho = R/sqrt(Q).

Two Appendix-style sums (the n-or-more condition and the per-decision
breadcrumb reward) are implemented with their per-term exponents merged
analytically so no negative power of P or (1-P) ever appears; the i = T and
i = 0 boundary terms are finite by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .core import (
    AllCorrect,
    Breadcrumb,
    EpisodeSpec,
    NOrMore,
    OrderState,
    RewardProtocol,
    Subtask,
    SQRT_2PI,
    Trajectory,
    check_protocol,
    expected_reward,
    log_comb,
    powp,
)
from .errors import DomainError, IntegrationError, InvalidStateError, ProtocolError

SQRT_PI_OVER_2 = math.sqrt(math.pi / 2.0)


def _rho_p(R: float, Q: float) -> tuple[float, float]:
    """Clamped normalised overlap and per-step success probability.

    Permissive on small excursions of |rho| past 1: Runge-Kutta stage values
    may overshoot the invariant manifold even when the solution does not.
    """
    r = R / math.sqrt(Q)
    r = min(1.0, max(-1.0, r))
    return r, 1.0 - math.acos(r) / math.pi


# ---------------------------------------------------------------------------
# Right-hand sides (scalar kernels + validated public wrappers)
# ---------------------------------------------------------------------------

def _rhs_all_correct(R: float, Q: float, T: float, eta1: float, eta2: float) -> tuple[float, float]:
    r, P = _rho_p(R, Q)
    pT1 = powp(P, T - 1.0)
    shared = (1.0 + r) * pT1
    dR = (eta1 + eta2) / SQRT_2PI * shared - eta2 * R * math.sqrt(2.0 / (math.pi * Q))
    dQ = (
        (eta1 + eta2) * math.sqrt(2.0 * Q / math.pi) * shared
        - 2.0 * eta2 * math.sqrt(2.0 * Q / math.pi)
        + (eta1 * eta1 - eta2 * eta2) / T * (pT1 * P if P > 0.0 else powp(P, T))
        + eta2 * eta2 / T
    )
    return dR, dQ


def rhs_all_correct(state: OrderState, T: int, eta1: float, eta2: float) -> tuple[float, float]:
    """(dR/dalpha, dQ/dalpha) for the all-decisions-correct condition."""
    if T < 1:
        raise DomainError(f"T must be >= 1, got {T}")
    return _rhs_all_correct(state.R, state.Q, float(T), eta1, eta2)


def _n_or_more_sums(r: float, P: float, T: int, n: int) -> tuple[float, float, float]:
    """The three binomial sums of the n-or-more condition.

    Per index i, the exponents are combined as
        i*(1 +/- r) * P^(i-1) * (1-P)^(T-i)  and  (T-i)*(1 -/+ r) * P^i * (1-P)^(T-i-1),
    evaluated in log space; the R-sum takes the difference of the two parts
    and the Q-sum their total, which is what the underlying conditional
    averages of confidently-right versus confidently-wrong steps produce.
    """
    one_m = 1.0 - P
    logP = math.log(P) if P > 0.0 else -math.inf
    log1m = math.log(one_m) if one_m > 0.0 else -math.inf

    def merged(i: int, p_exp: int, q_exp: int) -> float:
        # C(T, i) * P^p_exp * (1-P)^q_exp with zero-exponent short circuits
        acc = log_comb(T, i)
        if p_exp > 0:
            if P <= 0.0:
                return 0.0
            acc += p_exp * logP
        if q_exp > 0:
            if one_m <= 0.0:
                return 0.0
            acc += q_exp * log1m
        return math.exp(acc)

    s_R = 0.0
    s_Q = 0.0
    s_reward = 0.0
    for i in range(n, T + 1):
        gain = i * (1.0 + r) * merged(i, i - 1, T - i)
        loss = (T - i) * (1.0 - r) * merged(i, i, T - i - 1)
        s_R += gain - loss
        s_Q += gain + loss
        s_reward += merged(i, i, T - i)
    return s_R, s_Q, s_reward


def _rhs_n_or_more(R: float, Q: float, T: int, n: int, eta1: float) -> tuple[float, float]:
    r, P = _rho_p(R, Q)
    s_R, s_Q, s_reward = _n_or_more_sums(r, P, T, n)
    dR = eta1 / (T * SQRT_2PI) * s_R
    dQ = eta1 / T * math.sqrt(2.0 * Q / math.pi) * s_Q + eta1 * eta1 / T * s_reward
    return dR, dQ


def rhs_n_or_more(state: OrderState, T: int, n: int, eta1: float) -> tuple[float, float]:
    """(dR/dalpha, dQ/dalpha) when >= n of T decisions must be correct.

    Only the zero-penalty variant has closed-form dynamics.
    """
    if n > T:
        raise DomainError(f"n = {n} exceeds T = {T}")
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    return _rhs_n_or_more(state.R, state.Q, int(T), int(n), eta1)


def _rhs_breadcrumb(R: float, Q: float, T: float, eta1: float, beta: float) -> tuple[float, float]:
    r, P = _rho_p(R, Q)
    pT1 = powp(P, T - 1.0)
    pT = pT1 * P if P > 0.0 else powp(P, T)
    dR = ((1.0 + r) * (eta1 * pT1 + beta) + beta * (T - 1.0) * r * P) / SQRT_2PI
    dQ = (
        math.sqrt(2.0 * Q / math.pi) * ((1.0 + r) * (eta1 * pT1 + beta) + beta * (T - 1.0) * P)
        + (eta1 * eta1 + (T + 1.0) * eta1 * beta) * pT / T
        + beta * beta * (T + 1.0) * (0.5 + (T - 1.0) * P / 3.0) * P / T
    )
    return dR, dQ


def rhs_breadcrumb(state: OrderState, T: int, eta1: float, beta: float) -> tuple[float, float]:
    """(dR/dalpha, dQ/dalpha) for the per-decision breadcrumb reward.

    The returns of later steps roll earlier rewards out of scope: step t only
    accumulates rewards earned at t' >= t, so the linear Q term carries a
    single factor beta*(T-1)*P from the T(T-1)/2 ordered step pairs.
    """
    if beta < 0.0:
        raise DomainError(f"beta must be >= 0, got {beta}")
    return _rhs_breadcrumb(state.R, state.Q, float(T), eta1, beta)


def _rhs_spherical(rho: float, Q: float, T: float, eta1: float, eta2: float) -> float:
    r = min(1.0, max(-1.0, rho))
    P = 1.0 - math.acos(r) / math.pi
    pT1 = powp(P, T - 1.0)
    bracket = 1.0 - r * r - (eta1 - eta2) / T * SQRT_PI_OVER_2 * (r / math.sqrt(Q)) * P
    return (eta1 + eta2) / math.sqrt(2.0 * math.pi * Q) * pT1 * bracket - (
        eta2 * eta2 / (2.0 * T)
    ) * (r / Q)


def rhs_spherical(rho: float, Q: float, T: int, eta1: float, eta2: float) -> float:
    """drho/dalpha on the sphere (Q held fixed by weight renormalisation)."""
    if Q <= 0.0:
        raise InvalidStateError(f"Q must be positive, got {Q}")
    if abs(rho) > 1.0 + 1e-9:
        raise DomainError(f"rho = {rho} outside [-1, 1]")
    return _rhs_spherical(rho, Q, float(T), eta1, eta2)


def rhs_spherical_two_term(rho: float, Q: float, T: int, eta: float) -> float:
    """Zero-penalty spherical flow written as its two-term form,
    eta/sqrt(2 pi Q) (1-rho^2) P^(T-1) - eta^2/(2 T Q) rho P^T.

    Algebraically identical to ``rhs_spherical`` at eta2 = 0; kept as an
    independent expression for the reduction tests.
    """
    r = min(1.0, max(-1.0, rho))
    P = 1.0 - math.acos(r) / math.pi
    return (
        eta / math.sqrt(2.0 * math.pi * Q) * (1.0 - r * r) * powp(P, T - 1.0)
        - eta * eta / (2.0 * T * Q) * r * powp(P, float(T))
    )


def rhs_spherical_grid(
    rho: np.ndarray, Q: float, T: float, eta1: float, eta2: float
) -> np.ndarray:
    """Vectorised spherical RHS on a rho grid (used by the phase scanners)."""
    r = np.clip(np.asarray(rho, dtype=float), -1.0, 1.0)
    P = 1.0 - np.arccos(r) / np.pi
    with np.errstate(divide="ignore"):
        pT1 = np.where(P > 0.0, np.exp((T - 1.0) * np.log(np.where(P > 0.0, P, 1.0))), 0.0)
    if T == 1.0:
        pT1 = np.ones_like(P)
    bracket = 1.0 - r * r - (eta1 - eta2) / T * SQRT_PI_OVER_2 * (r / math.sqrt(Q)) * P
    return (eta1 + eta2) / math.sqrt(2.0 * math.pi * Q) * pT1 * bracket - (
        eta2 * eta2 / (2.0 * T)
    ) * (r / Q)


def chain_rule_rho(state: OrderState, dR: float, dQ: float) -> float:
    """drho/dalpha induced by (dR, dQ): dR/sqrt(Q) - R dQ / (2 Q^(3/2))."""
    if state.Q <= 0.0:
        raise InvalidStateError(f"Q must be positive, got {state.Q}")
    sq = math.sqrt(state.Q)
    return dR / sq - state.R * dQ / (2.0 * state.Q * sq)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IntegratorSpec:
    """Fixed-step classical 4th order, or an adaptive embedded 5(4) pair."""

    method: str = "rk4"
    step: float = 0.1
    atol: float = 1e-9
    rtol: float = 0.0

    def __post_init__(self):
        if self.method not in ("rk4", "adaptive"):
            raise DomainError(f"integrator method must be 'rk4' or 'adaptive', got {self.method!r}")
        if self.step <= 0.0 or self.atol <= 0.0 or self.rtol < 0.0:
            raise DomainError("integrator step/atol must be positive, rtol >= 0")


@dataclass(frozen=True)
class GridSpec:
    """Output grid in alpha.  Log spacing matches the usual log-time plots;
    a leading alpha = 0 row is always emitted."""

    kind: str = "log"
    n_points: int = 400
    alpha_min: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("log", "linear"):
            raise DomainError(f"grid kind must be 'log' or 'linear', got {self.kind!r}")
        if self.n_points < 1:
            raise DomainError("grid needs at least one point")

    def points(self, alpha_max: float) -> np.ndarray:
        if self.kind == "linear":
            pts = np.linspace(0.0, alpha_max, self.n_points + 1)
            return pts
        lo = self.alpha_min if self.alpha_min is not None else min(1.0, alpha_max * 1e-4)
        lo = min(lo, alpha_max)
        pts = np.geomspace(lo, alpha_max, self.n_points)
        return np.concatenate(([0.0], pts))


@dataclass(frozen=True)
class OdeConfig:
    spec: EpisodeSpec
    protocol: RewardProtocol
    r0: float = 0.0
    q0: float = 1.0
    alpha_max: float = 100.0
    spherical: bool = False
    d_ref: float = 900.0
    integrator: IntegratorSpec = field(default_factory=IntegratorSpec)
    grid: GridSpec = field(default_factory=GridSpec)
    schedule: object = None

    def __post_init__(self):
        if self.spec.gamma != 1.0:
            raise ProtocolError(
                f"order-parameter dynamics are derived at gamma = 1, got {self.spec.gamma}"
            )
        if isinstance(self.protocol, Subtask):
            raise ProtocolError(
                "no closed-form order-parameter dynamics exist for the subtask protocol; "
                "use the simulation engine"
            )
        check_protocol(self.protocol, self.spec)
        if self.alpha_max <= 0.0:
            raise DomainError(f"alpha_max must be positive, got {self.alpha_max}")
        if self.q0 <= 0.0:
            raise InvalidStateError(f"q0 must be positive, got {self.q0}")
        if abs(self.r0) > math.sqrt(self.q0) * (1.0 + 1e-12):
            raise InvalidStateError(f"|r0| = {abs(self.r0)} exceeds sqrt(q0)")
        if self.schedule is not None:
            ok = isinstance(self.protocol, AllCorrect) and self.protocol.eta2 == 0.0
            if not ok:
                raise ProtocolError(
                    "hyper-parameter schedules are only defined for the zero-penalty "
                    "all-correct condition"
                )


# ---------------------------------------------------------------------------
# Integrators
# ---------------------------------------------------------------------------

def _rk4_between(f, alpha0: float, y0: tuple, alpha1: float, h_nominal: float) -> tuple:
    span = alpha1 - alpha0
    if span <= 0.0:
        return y0
    n_sub = max(1, math.ceil(span / h_nominal))
    h = span / n_sub
    y = y0
    a = alpha0
    dim = len(y)
    for _ in range(n_sub):
        k1 = f(a, y)
        k2 = f(a + 0.5 * h, tuple(y[i] + 0.5 * h * k1[i] for i in range(dim)))
        k3 = f(a + 0.5 * h, tuple(y[i] + 0.5 * h * k2[i] for i in range(dim)))
        k4 = f(a + h, tuple(y[i] + h * k3[i] for i in range(dim)))
        y = tuple(
            y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(dim)
        )
        a += h
    return y


# Dormand-Prince 5(4) tableau; the fifth-order solution is propagated and the
# fourth-order difference provides the local error estimate (FSAL unused for
# simplicity; the RHS here is cheap).
_DP_C = (0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0)
_DP_A = (
    (),
    (1.0 / 5.0,),
    (3.0 / 40.0, 9.0 / 40.0),
    (44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0),
    (19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0),
    (9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0),
    (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0),
)
_DP_B5 = (35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0)
_DP_B4 = (
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
)


def adaptive_step(
    f, alpha: float, y: tuple, h: float, atol: float, rtol: float
) -> tuple[float, tuple, float]:
    """One accepted embedded-pair step from (alpha, y); rejected trials shrink
    h internally.  Returns (alpha_new, y_new, suggested_next_h)."""
    dim = len(y)
    while True:
        if h < 1e-13 * max(1.0, abs(alpha)):
            raise IntegrationError(
                f"step size underflow at alpha = {alpha:.6g} (stiff region)",
                alpha_reached=alpha,
            )
        ks = []
        for s in range(7):
            ys = tuple(
                y[i] + h * sum(_DP_A[s][j] * ks[j][i] for j in range(s)) for i in range(dim)
            )
            ks.append(f(alpha + _DP_C[s] * h, ys))
        y5 = tuple(y[i] + h * sum(_DP_B5[s] * ks[s][i] for s in range(7)) for i in range(dim))
        y4 = tuple(y[i] + h * sum(_DP_B4[s] * ks[s][i] for s in range(7)) for i in range(dim))
        err = 0.0
        for i in range(dim):
            scale = atol + rtol * max(abs(y[i]), abs(y5[i]))
            err = max(err, abs(y5[i] - y4[i]) / scale)
        if err <= 1.0:
            grow = 5.0 if err == 0.0 else min(5.0, 0.9 * err ** -0.2)
            return alpha + h, y5, h * max(0.2, grow)
        h *= max(0.2, 0.9 * err ** -0.2)


def _adaptive_between(
    f,
    alpha0: float,
    y0: tuple,
    alpha1: float,
    h_init: float,
    atol: float,
    rtol: float,
) -> tuple[tuple, float]:
    """Advance y from alpha0 to alpha1; returns (y, suggested next step)."""
    y = y0
    a = alpha0
    h = min(h_init, alpha1 - alpha0)
    while a < alpha1:
        a, y, h_next = adaptive_step(f, a, y, min(h, alpha1 - a), atol, rtol)
        h = h_next
    return y, h


# ---------------------------------------------------------------------------
# Trajectory integration
# ---------------------------------------------------------------------------

def _make_rhs(config: OdeConfig) -> Callable[[float, tuple], tuple]:
    proto = config.protocol
    T = float(config.spec.T)
    schedule = config.schedule

    if config.spherical:
        Qfix = config.q0

        def f_sph(alpha: float, y: tuple) -> tuple:
            r = y[0]
            if schedule is not None:
                T_eff, eta_eff = schedule.resolve(alpha, min(1.0, max(-1.0, r)), Qfix)
                return (_rhs_spherical(r, Qfix, float(T_eff), eta_eff, 0.0),)
            if isinstance(proto, AllCorrect):
                return (_rhs_spherical(r, Qfix, T, proto.eta1, proto.eta2),)
            R = min(1.0, max(-1.0, r)) * math.sqrt(Qfix)
            if isinstance(proto, NOrMore):
                dR, dQ = _rhs_n_or_more(R, Qfix, config.spec.T, proto.n, proto.eta1)
            else:
                dR, dQ = _rhs_breadcrumb(R, Qfix, T, proto.eta1, proto.beta)
            return (dR / math.sqrt(Qfix) - R * dQ / (2.0 * Qfix * math.sqrt(Qfix)),)

        return f_sph

    def f_full(alpha: float, y: tuple) -> tuple:
        R, Q = y
        if Q <= 0.0:
            raise IntegrationError(
                f"student norm collapsed (Q = {Q:.3g}) at alpha = {alpha:.6g}", alpha_reached=alpha
            )
        if schedule is not None:
            r = min(1.0, max(-1.0, R / math.sqrt(Q)))
            T_eff, eta_eff = schedule.resolve(alpha, r, Q)
            return _rhs_all_correct(R, Q, float(T_eff), eta_eff, 0.0)
        if isinstance(proto, AllCorrect):
            return _rhs_all_correct(R, Q, T, proto.eta1, proto.eta2)
        if isinstance(proto, NOrMore):
            return _rhs_n_or_more(R, Q, config.spec.T, proto.n, proto.eta1)
        return _rhs_breadcrumb(R, Q, T, proto.eta1, proto.beta)

    return f_full


def integrate(config: OdeConfig) -> Trajectory:
    """Integrate the configured dynamics and sample them on the output grid.

    Returns a Trajectory whose t column is alpha * d_ref so curves can be
    overlaid on simulated runs at dimension d_ref.
    """
    f = _make_rhs(config)
    grid = config.grid.points(config.alpha_max)
    spherical = config.spherical

    if spherical:
        y = (config.r0 / math.sqrt(config.q0),)
    else:
        y = (config.r0, config.q0)

    rows_R = np.empty(len(grid))
    rows_Q = np.empty(len(grid))
    alpha = 0.0
    h_next = config.integrator.step if config.integrator.method == "adaptive" else 0.0

    for k, target in enumerate(grid):
        if target > alpha:
            if config.integrator.method == "rk4":
                y = _rk4_between(f, alpha, y, target, config.integrator.step)
            else:
                y, h_next = _adaptive_between(
                    f, alpha, y, target, h_next, config.integrator.atol, config.integrator.rtol
                )
            alpha = target
        if spherical:
            r = y[0]
            if abs(r) > 1.0 + 1e-9:
                raise IntegrationError(
                    f"normalised overlap left [-1, 1] at alpha = {alpha:.6g}", alpha_reached=alpha
                )
            r = min(1.0, max(-1.0, r))
            y = (r,)
            rows_R[k] = r * math.sqrt(config.q0)
            rows_Q[k] = config.q0
        else:
            rows_R[k] = y[0]
            rows_Q[k] = y[1]

    rho_col = rows_R / np.sqrt(rows_Q)
    np.clip(rho_col, -1.0, 1.0, out=rho_col)
    eps_col = np.arccos(rho_col) / np.pi

    reward_col = np.empty(len(grid))
    for k in range(len(grid)):
        if config.schedule is not None:
            T_eff, eta_eff = config.schedule.resolve(grid[k], float(rho_col[k]), float(rows_Q[k]))
            proto_k = AllCorrect(eta1=eta_eff, eta2=0.0)
            spec_k = EpisodeSpec(T=max(1, int(round(T_eff))), gamma=1.0)
            reward_col[k] = expected_reward(proto_k, spec_k, float(rho_col[k]))
        else:
            reward_col[k] = expected_reward(config.protocol, config.spec, float(rho_col[k]))

    return Trajectory(
        alpha=grid,
        t=grid * config.d_ref,
        R=rows_R,
        Q=rows_Q,
        rho=rho_col,
        eps_g=eps_col,
        expected_reward=reward_col,
        empirical_reward=np.full(len(grid), np.nan),
        meta={"engine": "ode", "spherical": spherical},
    )
