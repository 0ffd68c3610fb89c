"""Numerical laboratory for episodic teacher-student perceptron learning.

A finite-dimension Monte Carlo simulator, an exact order-parameter ODE
engine, optimal hyper-parameter schedules, and fixed-point/phase analysis,
validated against each other and exported as reproducible CSV/JSON
artifacts through the ``rlp`` command line runner.
"""

from .core import (
    AllCorrect,
    Breadcrumb,
    EpisodeSpec,
    NOrMore,
    OrderState,
    RewardProtocol,
    Subtask,
    Trajectory,
    expected_reward,
    generalisation_error,
    p_correct,
    rho,
)
from .errors import (
    ConfigError,
    ConsistencyError,
    ConvergenceTimeout,
    CriticalPointNotFound,
    DomainError,
    IntegrationError,
    InvalidStateError,
    LabError,
    NumericsError,
    ProtocolError,
)
from .ode import (
    GridSpec,
    IntegratorSpec,
    OdeConfig,
    chain_rule_rho,
    integrate,
    rhs_all_correct,
    rhs_breadcrumb,
    rhs_n_or_more,
    rhs_spherical,
)

__version__ = "0.1.0"

__all__ = [
    "AllCorrect",
    "Breadcrumb",
    "ConfigError",
    "ConsistencyError",
    "ConvergenceTimeout",
    "CriticalPointNotFound",
    "DomainError",
    "EpisodeSpec",
    "GridSpec",
    "IntegrationError",
    "IntegratorSpec",
    "InvalidStateError",
    "LabError",
    "NOrMore",
    "NumericsError",
    "OdeConfig",
    "OrderState",
    "ProtocolError",
    "RewardProtocol",
    "Subtask",
    "Trajectory",
    "chain_rule_rho",
    "expected_reward",
    "generalisation_error",
    "integrate",
    "p_correct",
    "rho",
    "rhs_all_correct",
    "rhs_breadcrumb",
    "rhs_n_or_more",
    "rhs_spherical",
    "__version__",
]
