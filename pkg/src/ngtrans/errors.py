"""Exception hierarchy shared across the package."""


class NgtransError(Exception):
    """Base class for all package errors."""


class DomainError(NgtransError, ValueError):
    """An argument lies outside the domain of the operation."""


class InsufficientDataError(DomainError):
    """Too few samples for the requested estimator."""


class InfiniteQuantileError(DomainError):
    """Quantile requested at probability 0 or 1."""


class InfiniteVarianceError(DomainError):
    """Distribution parameters imply a nonexistent variance."""


class NonDifferentiableError(DomainError):
    """Derivative requested at a point where the density has a kink."""


class ConvergenceError(NgtransError, ArithmeticError):
    """An iterative numerical method failed to converge."""


class TailSaturationError(NgtransError, ArithmeticError):
    """The normal score is so extreme that Phi rounds to 0 or 1."""


class AbortedPathError(NgtransError, ArithmeticError):
    """A path produced a non-finite state.

    ``step`` is the grid index at which the state stopped being finite and
    ``path_index`` identifies the path inside an ensemble when known.
    """

    def __init__(self, message, step, path_index=None):
        super().__init__(message)
        self.step = step
        self.path_index = path_index


class ConfigError(NgtransError, ValueError):
    """Invalid simulation configuration. ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field
