"""Domain types and closed-form scalar functions shared by all engines.

The macroscopic state of a learner is the overlap triple (R, Q, S): the
teacher-student overlap R = w.w*/D, the student self-overlap Q = w.w/D and
the teacher self-overlap S = w*.w*/D, which is fixed to 1 throughout.  All
single-decision statistics follow from the normalised overlap rho = R/sqrt(Q):
the probability of disagreeing with the teacher on a fresh Gaussian input is
arccos(rho)/pi.

Everything in this module is a pure function of value types and is safe to
call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import DomainError, InvalidStateError, ProtocolError

# Tolerated floating-point excursion of |rho| above 1; anything larger is a
# hard error rather than a silent clamp, to distinguish drift from bugs.
RHO_TOL = 1e-12

SQRT_2PI = math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OrderState:
    """Macroscopic state (R, Q) of a student; S is frozen at 1.

    Invariants: Q > 0 and |R| <= sqrt(Q*S) up to RHO_TOL.
    """

    R: float
    Q: float
    S: float = 1.0

    def __post_init__(self):
        if not (math.isfinite(self.R) and math.isfinite(self.Q)):
            raise InvalidStateError(f"non-finite order parameters (R={self.R}, Q={self.Q})")
        if self.Q <= 0.0:
            raise InvalidStateError(f"Q must be positive, got {self.Q}")
        if self.S != 1.0:
            raise InvalidStateError(f"teacher self-overlap is fixed to 1, got {self.S}")
        if abs(self.R) > math.sqrt(self.Q * self.S) * (1.0 + RHO_TOL):
            raise InvalidStateError(
                f"|R| = {abs(self.R)} exceeds sqrt(Q*S) = {math.sqrt(self.Q * self.S)}"
            )

    @property
    def rho(self) -> float:
        return rho(self)


@dataclass(frozen=True)
class EpisodeSpec:
    """Episode length T and discount factor gamma in (0, 1]."""

    T: int
    gamma: float = 1.0

    def __post_init__(self):
        if not isinstance(self.T, int) or self.T < 1:
            raise DomainError(f"episode length T must be an integer >= 1, got {self.T}")
        if not (0.0 < self.gamma <= 1.0):
            raise DomainError(f"gamma must lie in (0, 1], got {self.gamma}")


def _require_rate(value: float, name: str) -> None:
    if not math.isfinite(value) or value < 0.0:
        raise ProtocolError(f"{name} must be finite and >= 0, got {value}")


@dataclass(frozen=True)
class AllCorrect:
    """Reward eta1 when every decision of the episode is correct, penalty
    eta2 otherwise.  Rates are effective learning rates (learning rate times
    reward magnitude); zero rates are legal and mean no update.
    """

    eta1: float
    eta2: float = 0.0

    def __post_init__(self):
        _require_rate(self.eta1, "eta1")
        _require_rate(self.eta2, "eta2")


@dataclass(frozen=True)
class NOrMore:
    """Reward eta1 when at least n of the T decisions are correct.

    No penalty variant exists for this condition; the cross-check against T
    happens where an EpisodeSpec is available (see check_protocol).
    """

    n: int
    eta1: float

    def __post_init__(self):
        if not isinstance(self.n, int) or self.n < 1:
            raise ProtocolError(f"n must be an integer >= 1, got {self.n}")
        _require_rate(self.eta1, "eta1")


@dataclass(frozen=True)
class Breadcrumb:
    """Full-episode reward eta1 plus a per-decision reward beta for every
    correct decision."""

    eta1: float
    beta: float = 0.0

    def __post_init__(self):
        _require_rate(self.eta1, "eta1")
        _require_rate(self.beta, "beta")


@dataclass(frozen=True)
class Subtask:
    """Reward eta1 for a fully correct episode plus a sub-reward r_sub paid
    at step T0 when the first T0 decisions are all correct.  Simulation only:
    no closed-form order-parameter dynamics are implemented for it.
    """

    T0: int
    r_sub: float
    eta1: float

    def __post_init__(self):
        if not isinstance(self.T0, int) or self.T0 < 1:
            raise ProtocolError(f"T0 must be an integer >= 1, got {self.T0}")
        _require_rate(self.r_sub, "r_sub")
        _require_rate(self.eta1, "eta1")


RewardProtocol = Union[AllCorrect, NOrMore, Breadcrumb, Subtask]


def check_protocol(protocol: RewardProtocol, spec: EpisodeSpec) -> None:
    """Cross-validate a protocol against the episode it will run in."""
    if isinstance(protocol, NOrMore) and protocol.n > spec.T:
        raise ProtocolError(f"n = {protocol.n} exceeds episode length T = {spec.T}")
    if isinstance(protocol, Subtask) and protocol.T0 >= spec.T:
        raise ProtocolError(f"T0 = {protocol.T0} must be < episode length T = {spec.T}")


@dataclass
class Trajectory:
    """Time series of order parameters from either engine.

    ``alpha`` is episodes / D (continuous time), ``t`` the episode count.
    ``empirical_reward`` is NaN for rows where no simulated reward window
    exists (all ODE rows, and the initial row of simulated runs).
    """

    alpha: np.ndarray
    t: np.ndarray
    R: np.ndarray
    Q: np.ndarray
    rho: np.ndarray
    eps_g: np.ndarray
    expected_reward: np.ndarray
    empirical_reward: np.ndarray
    meta: dict = field(default_factory=dict)

    COLUMNS = ("alpha", "t", "R", "Q", "rho", "eps_g", "expected_reward", "empirical_reward")

    def __post_init__(self):
        n = len(self.alpha)
        for name in self.COLUMNS:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (n,):
                raise InvalidStateError(f"column {name} has shape {arr.shape}, expected ({n},)")
            setattr(self, name, arr)
        if n > 1 and not np.all(np.diff(self.alpha) > 0.0):
            raise InvalidStateError("alpha must be strictly increasing")

    def __len__(self) -> int:
        return len(self.alpha)

    def column(self, name: str) -> np.ndarray:
        if name not in self.COLUMNS:
            raise KeyError(name)
        return getattr(self, name)


# ---------------------------------------------------------------------------
# Scalar kinematics
# ---------------------------------------------------------------------------

def rho(state: OrderState) -> float:
    """Normalised overlap R/sqrt(Q), clamped into [-1, 1] within RHO_TOL."""
    if state.Q <= 0.0:
        raise InvalidStateError(f"Q must be positive, got {state.Q}")
    return _clamp_rho(state.R / math.sqrt(state.Q))


def _clamp_rho(value: float) -> float:
    if abs(value) > 1.0 + RHO_TOL:
        raise DomainError(f"normalised overlap {value} outside [-1, 1]")
    return min(1.0, max(-1.0, value))


def generalisation_error(rho_value: float) -> float:
    """Probability of disagreeing with the teacher: arccos(rho)/pi."""
    return math.acos(_clamp_rho(rho_value)) / math.pi


def p_correct(rho_value: float) -> float:
    """Probability of a single correct decision, 1 - arccos(rho)/pi."""
    return 1.0 - generalisation_error(rho_value)


def powp(base: float, exponent: float) -> float:
    """base**exponent for base in [0, 1] with exact handling of the 0 and 1
    branches, evaluated through exp(exponent*log(base)) so large exponents
    stay finite.  exponent == 0 returns 1 even at base == 0."""
    if exponent == 0.0:
        return 1.0
    if base <= 0.0:
        return 0.0
    if base >= 1.0:
        return 1.0
    return math.exp(exponent * math.log(base))


def log_comb(total: int, chosen: int) -> float:
    """log of the binomial coefficient, via lgamma (finite up to huge T)."""
    return (
        math.lgamma(total + 1.0) - math.lgamma(chosen + 1.0) - math.lgamma(total - chosen + 1.0)
    )


def binom_weight(T: int, i: int, p: float) -> float:
    """C(T, i) * p^i * (1-p)^(T-i) in log space, with zero-exponent branches
    taken before any log so the boundary terms stay finite."""
    log_term = log_comb(T, i)
    if i > 0:
        if p <= 0.0:
            return 0.0
        log_term += i * math.log(p)
    if T - i > 0:
        q = 1.0 - p
        if q <= 0.0:
            return 0.0
        log_term += (T - i) * math.log(q)
    return math.exp(log_term)


def binom_tail(T: int, n: int, p: float) -> float:
    """P(Binomial(T, p) >= n)."""
    if n <= 0:
        return 1.0
    if n > T:
        return 0.0
    return math.fsum(binom_weight(T, i, p) for i in range(n, T + 1))


# ---------------------------------------------------------------------------
# Expected per-episode return
# ---------------------------------------------------------------------------

def expected_reward(protocol: RewardProtocol, spec: EpisodeSpec, rho_value: float) -> float:
    """Expected total episode return at normalised overlap rho.

    Decisions within an episode are independent with per-step success
    probability P, so every condition reduces to binomial algebra:
    all-correct pays eta1*P^T - eta2*(1-P^T); the n-or-more condition pays
    eta1 times a binomial tail; breadcrumb adds beta per correct step
    (beta*T*P on average); the subtask variant adds r_sub*P^T0.
    """
    check_protocol(protocol, spec)
    P = p_correct(rho_value)
    T = spec.T
    if isinstance(protocol, AllCorrect):
        pT = powp(P, T)
        return protocol.eta1 * pT - protocol.eta2 * (1.0 - pT)
    if isinstance(protocol, NOrMore):
        return protocol.eta1 * binom_tail(T, protocol.n, P)
    if isinstance(protocol, Breadcrumb):
        return protocol.eta1 * powp(P, T) + protocol.beta * T * P
    if isinstance(protocol, Subtask):
        return protocol.eta1 * powp(P, T) + protocol.r_sub * powp(P, protocol.T0)
    raise ProtocolError(f"unknown protocol {protocol!r}")
