"""Exception hierarchy shared by every module."""


class CapacityError(Exception):
    """Base class for all library errors."""


class ConfigError(CapacityError, ValueError):
    """Invalid parameters, shapes or experiment configuration."""


class DomainError(CapacityError, ValueError):
    """A kernel or capacity was requested outside its domain (dimension, alpha)."""


class NumericalError(CapacityError, ArithmeticError):
    """A solver, quadrature or optimizer failed to reach its accuracy target."""

    def __init__(self, message, best=None, condition=None):
        super().__init__(message)
        self.best = best
        self.condition = condition


class BudgetError(CapacityError, RuntimeError):
    """Monte Carlo samples kept exhausting their node budget."""
