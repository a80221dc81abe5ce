"""Exception types shared across the package."""


class NehariLabError(Exception):
    """Base class for all package errors."""


class FieldShapeError(NehariLabError, ValueError):
    """A field does not conform to the grid it is used with."""


class GeometryError(NehariLabError, ValueError):
    """A grid or half-space is unsuitable for the requested operation."""


class NormNotEquivalentError(NehariLabError, ValueError):
    """A shift lambda makes the quadratic form indefinite (norm not equivalent)."""


class ConvergenceError(NehariLabError, RuntimeError):
    """An iterative method hit its iteration cap."""


class NonConvergenceError(ConvergenceError):
    """The minimizer hit ``max_iter``; ``result`` holds the best iterate."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class ProjectionError(NehariLabError, ArithmeticError):
    """Group scaling onto the Nehari set leaves the positive orthant."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class PreconditionError(NehariLabError, ValueError):
    """Input violates an operation's hypotheses."""


class TruncationError(NehariLabError, ValueError):
    """An embedded profile reaches the edge of the computational box."""


class ConfigError(NehariLabError, ValueError):
    """Malformed or inconsistent run configuration."""
