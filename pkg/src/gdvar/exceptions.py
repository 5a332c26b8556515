class GdVarError(Exception):
    """Base class for errors raised by gdvar."""


class ParameterError(GdVarError, ValueError):
    """Distribution or model parameters outside their domain."""


class DomainError(GdVarError, ValueError):
    """Argument outside the support of a function."""


class FilterError(GdVarError, ArithmeticError):
    """The score recursion produced a non-finite value.

    Attributes
    ----------
    day : int
        Zero-based index of the observation at which the recursion failed.
    """

    def __init__(self, message: str, day: int):
        super().__init__(message)
        self.day = day


class NotFittableError(GdVarError, RuntimeError):
    """Every optimizer start was rejected by the likelihood."""


class IngestionError(GdVarError, ValueError):
    """Malformed or incomplete input data."""
