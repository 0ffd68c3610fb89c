"""Semantic exception hierarchy shared by all engines."""

from __future__ import annotations


class LabError(Exception):
    """Base class for every error raised by this package."""


class InvalidStateError(LabError, ValueError):
    """Order-parameter state violates its invariants (Q <= 0, |rho| > 1)."""


class DomainError(LabError, ValueError):
    """Scalar argument outside its mathematical domain."""


class ProtocolError(LabError, ValueError):
    """Reward protocol is malformed or unsupported by the requested engine."""


class NumericsError(LabError, RuntimeError):
    """Non-finite values appeared during a stochastic run."""


class IntegrationError(LabError, RuntimeError):
    """Adaptive step-size underflow; carries the time reached."""

    def __init__(self, message: str, alpha_reached: float):
        super().__init__(message)
        self.alpha_reached = alpha_reached


class ConvergenceTimeout(LabError, RuntimeError):
    """Trajectory did not reach its target; carries the partial result."""

    def __init__(self, message: str, alpha_reached: float, rho_reached: float):
        super().__init__(message)
        self.alpha_reached = alpha_reached
        self.rho_reached = rho_reached


class ConsistencyError(LabError, RuntimeError):
    """An internal structural assumption was violated (surfaced, not hidden)."""


class CriticalPointNotFound(LabError, RuntimeError):
    """No 1-root/3-root transition exists in the scanned penalty range."""


class ConfigError(LabError, ValueError):
    """Experiment configuration failed validation; carries the field path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path
