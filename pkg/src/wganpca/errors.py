"""Exception hierarchy shared by every module."""


class LabError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(LabError, ValueError):
    """Shapes of the operands do not agree."""


class DomainError(LabError, ValueError):
    """An argument lies outside the domain of the operation."""


class UnsupportedError(LabError, ValueError):
    """The configuration is valid in principle but deliberately refused."""


class ConfigError(LabError, ValueError):
    """An experiment specification is malformed."""


class TapeError(LabError, RuntimeError):
    """Misuse of an autodiff tape (sealed writes, foreign variables, ...)."""


class ConvergenceError(LabError, RuntimeError):
    """An iterative solver stopped at ``max_iter`` without meeting ``tol``."""

    def __init__(self, message: str, last_distance: float, iterations: int):
        super().__init__(message)
        self.last_distance = last_distance
        self.iterations = iterations


class NumericalError(LabError, FloatingPointError):
    """A loss or parameter became non-finite during training."""
