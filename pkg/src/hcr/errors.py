"""Exception hierarchy shared by the library and the command line."""


class HCRError(Exception):
    """Base class for all errors raised by :mod:`hcr`."""

    exit_code = 2


class InvalidInputError(HCRError, ValueError):
    """Malformed or insufficient input data."""


class DegenerateScaleError(HCRError, ValueError):
    """A fitted scale parameter would be zero."""

    exit_code = 3


class DomainError(HCRError, ValueError):
    """Argument outside the domain of a function (e.g. quantile of 1.0)."""

    exit_code = 3


class BasisTooLargeError(HCRError, MemoryError):
    """The requested dense basis exceeds the configured size cap."""

    exit_code = 3


class NonPositiveContextDensityError(HCRError, ArithmeticError):
    """Conditioning requested at a context whose marginal density is <= 0."""

    exit_code = 3

    def __init__(self, message, density=None):
        super().__init__(message)
        self.density = density
