"""Exception hierarchy shared across the package."""


class PowerSchedError(Exception):
    """Base class for all package errors."""


class DimensionError(PowerSchedError, ValueError):
    """Matrix/vector shapes are inconsistent or unsupported."""


class DomainError(PowerSchedError, ValueError):
    """An argument falls outside the mathematical domain of an operation."""


class NumericError(PowerSchedError, ArithmeticError):
    """A linear solve hit a singular or ill-conditioned system."""


class InfeasibleError(PowerSchedError):
    """A requested policy or series cannot be realized (e.g. divergent cost)."""


class ConvergenceError(PowerSchedError):
    """An iterative solver stopped at its iteration cap."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual={residual:.3e}, iterations={iterations})")
        self.residual = residual
        self.iterations = iterations


class UsageError(PowerSchedError, ValueError):
    """A scheduler variant received a context it cannot use."""


class ConfigError(PowerSchedError, ValueError):
    """A configuration document failed to parse or validate."""
