class NPMLEError(Exception):
    """Base class for errors raised by this package."""


class ContractViolation(NPMLEError, ValueError):
    """Inputs break a documented precondition (shapes, lengths, dimensions)."""


class ConfigurationError(NPMLEError, ValueError):
    """An option or parameter combination is invalid or unsupported."""


class NumericalError(NPMLEError, ArithmeticError):
    """A computation lost all precision, e.g. a density underflowed to zero."""
