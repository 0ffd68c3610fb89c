"""Greedy-optimal hyper-parameter schedules and comparison runs.

Maximising the one-step change of the normalised overlap on the sphere over
the episode length or the learning rate gives closed forms for both: the
flow is quadratic in eta, so

    eta_opt = sqrt(Q / 2 pi) * T (1 - rho^2) / (rho P),

and stationarity in (continuous) T gives a quadratic whose positive root is

    T* = (sqrt(pi)/2) * eta rho P / ((1-rho^2) sqrt(2Q))
         * [1 + sqrt(1 - (sqrt(2Q)/(eta rho)) * 4 (1-rho^2) / (sqrt(pi) P ln P))].

The integer schedule uses floor(T*).  Both formulas blow up as rho -> 0; the
documented fallbacks (T = 1, eta = eta_max) cover the exploration phase where
no alignment exists yet.  The same expressions remain valid without the
spherical constraint because they extremise the rho-update from any point of
the (rho, Q) plane; unconstrained runs re-read Q from the live state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Union

import numpy as np

from .core import AllCorrect, Trajectory, p_correct
from .errors import DomainError, ProtocolError
from .ode import OdeConfig, integrate

_RHO_CEILING = 1.0 - 1e-12


def optimal_T_continuous(rho: float, Q: float, eta: float) -> float:
    """Unfloored greedy-optimal episode length; the stationary point of the
    spherical flow in continuous T.  Requires rho in (0, 1)."""
    if not (0.0 < rho < 1.0):
        raise DomainError(f"rho must lie in (0, 1), got {rho}")
    if Q <= 0.0 or eta <= 0.0:
        raise DomainError(f"Q and eta must be positive, got Q={Q}, eta={eta}")
    P = p_correct(rho)
    log_p = math.log(P)
    one_m_r2 = 1.0 - rho * rho
    prefactor = math.sqrt(math.pi) / 2.0 * eta * rho * P / (one_m_r2 * math.sqrt(2.0 * Q))
    inner = 1.0 - (math.sqrt(2.0 * Q) / (eta * rho)) * 4.0 * one_m_r2 / (
        math.sqrt(math.pi) * P * log_p
    )
    return prefactor * (1.0 + math.sqrt(inner))


def optimal_T(
    rho: float,
    Q: float,
    eta: float,
    *,
    rho_floor: float = 1e-3,
    t_max: Optional[int] = None,
    t_min: int = 1,
) -> int:
    """Greedy-optimal integer episode length, floor(T*), clamped to
    [t_min, t_max].

    rho <= rho_floor returns t_min (the shortest episode maximises the reward
    probability while no alignment exists); rho at the ceiling returns t_max,
    which must then be provided since T* diverges.
    """
    if rho <= rho_floor:
        return t_min
    if rho >= _RHO_CEILING:
        if t_max is None:
            raise DomainError("T_opt diverges as rho -> 1; provide t_max")
        return t_max
    t_star = optimal_T_continuous(rho, Q, eta)
    value = max(t_min, math.floor(t_star))
    if t_max is not None:
        value = min(value, t_max)
    return value


def optimal_eta(
    rho: float,
    Q: float,
    T: float,
    *,
    rho_floor: float = 1e-3,
    eta_max: float = math.inf,
) -> float:
    """Greedy-optimal learning rate sqrt(Q/2pi) T (1-rho^2)/(rho P), capped
    at eta_max; rho <= rho_floor falls back to eta_max."""
    if Q <= 0.0 or T < 1:
        raise DomainError(f"need Q > 0 and T >= 1, got Q={Q}, T={T}")
    if rho <= rho_floor:
        return eta_max
    r = min(rho, _RHO_CEILING)
    P = p_correct(r)
    return min(eta_max, math.sqrt(Q / (2.0 * math.pi)) * T * (1.0 - r * r) / (r * P))


# ---------------------------------------------------------------------------
# Schedule specifications
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConstantT:
    """Fixed episode length; eta is bound from the base config if omitted."""

    T: int
    eta: Optional[float] = None

    def resolve(self, alpha: float, rho: float, Q: float) -> tuple[float, float]:
        return float(self.T), float(self.eta)


@dataclass(frozen=True)
class ConstantEta:
    """Fixed learning rate; T is bound from the base config if omitted."""

    eta: float
    T: Optional[int] = None

    def resolve(self, alpha: float, rho: float, Q: float) -> tuple[float, float]:
        return float(self.T), float(self.eta)


@dataclass(frozen=True)
class OptimalT:
    """Episode-length curriculum at fixed eta."""

    eta: float
    t_max: int
    t_min: int = 1
    rho_floor: float = 1e-3

    def __post_init__(self):
        if self.t_max < self.t_min or self.t_min < 1:
            raise DomainError(f"need 1 <= t_min <= t_max, got [{self.t_min}, {self.t_max}]")
        if self.eta <= 0.0:
            raise DomainError(f"eta must be positive, got {self.eta}")

    def resolve(self, alpha: float, rho: float, Q: float) -> tuple[float, float]:
        T = optimal_T(
            rho, Q, self.eta, rho_floor=self.rho_floor, t_max=self.t_max, t_min=self.t_min
        )
        return float(T), self.eta


@dataclass(frozen=True)
class OptimalEta:
    """Learning-rate annealing at fixed T."""

    T: int
    eta_max: float
    rho_floor: float = 1e-3

    def __post_init__(self):
        if self.T < 1:
            raise DomainError(f"T must be >= 1, got {self.T}")
        if not (0.0 < self.eta_max < math.inf):
            raise DomainError(f"eta_max must be a positive finite cap, got {self.eta_max}")

    def resolve(self, alpha: float, rho: float, Q: float) -> tuple[float, float]:
        eta = optimal_eta(rho, Q, self.T, rho_floor=self.rho_floor, eta_max=self.eta_max)
        return float(self.T), eta


@dataclass(frozen=True)
class Tabulated:
    """Piecewise-constant (alpha, T, eta) table, left-continuous lookup."""

    points: tuple[tuple[float, int, float], ...]

    def __post_init__(self):
        if not self.points:
            raise DomainError("tabulated schedule needs at least one row")
        alphas = [p[0] for p in self.points]
        if any(b <= a for a, b in zip(alphas, alphas[1:])):
            raise DomainError("tabulated alphas must be strictly increasing")

    def resolve(self, alpha: float, rho: float, Q: float) -> tuple[float, float]:
        row = self.points[0]
        for candidate in self.points:
            if candidate[0] <= alpha:
                row = candidate
            else:
                break
        return float(row[1]), float(row[2])


ScheduleSpec = Union[ConstantT, ConstantEta, OptimalT, OptimalEta, Tabulated]


# ---------------------------------------------------------------------------
# Comparison runs
# ---------------------------------------------------------------------------

@dataclass
class ScheduleRun:
    schedule: ScheduleSpec
    trajectory: Trajectory
    trace: dict  # alpha, T, eta, rho, Q arrays sampled on the output grid


def _bind(schedule: ScheduleSpec, base: OdeConfig) -> ScheduleSpec:
    if isinstance(schedule, ConstantT) and schedule.eta is None:
        return replace(schedule, eta=base.protocol.eta1)
    if isinstance(schedule, ConstantEta) and schedule.T is None:
        return replace(schedule, T=base.spec.T)
    return schedule


def run_schedule_comparison(
    base: OdeConfig, schedules: Sequence[ScheduleSpec]
) -> list[ScheduleRun]:
    """One trajectory per schedule on the shared output grid of `base`,
    together with the realised (alpha, T, eta) series of each schedule.

    Schedules are defined for the zero-penalty all-correct condition, in the
    spherical setting or the unconstrained one.
    """
    if not (isinstance(base.protocol, AllCorrect) and base.protocol.eta2 == 0.0):
        raise ProtocolError(
            "schedule comparisons require the zero-penalty all-correct condition"
        )
    runs = []
    for schedule in schedules:
        bound = _bind(schedule, base)
        config = replace(base, schedule=bound)
        traj = integrate(config)
        T_trace = np.empty(len(traj))
        eta_trace = np.empty(len(traj))
        for k in range(len(traj)):
            T_k, eta_k = bound.resolve(float(traj.alpha[k]), float(traj.rho[k]), float(traj.Q[k]))
            T_trace[k] = T_k
            eta_trace[k] = eta_k
        runs.append(
            ScheduleRun(
                schedule=bound,
                trajectory=traj,
                trace={
                    "alpha": traj.alpha.copy(),
                    "T": T_trace,
                    "eta": eta_trace,
                    "rho": traj.rho.copy(),
                    "Q": traj.Q.copy(),
                },
            )
        )
    return runs
