"""Exception types shared across the package."""


class NohgnnError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(NohgnnError, ValueError):
    """Operands have incompatible or malformed dimensions."""


class ParameterError(NohgnnError, ValueError):
    """An argument or configuration value violates its contract."""


class ParseError(NohgnnError, ValueError):
    """An input file could not be parsed."""


class SamplingError(NohgnnError, RuntimeError):
    """Negative sampling cannot produce the requested pairs."""


class NumericError(NohgnnError, ArithmeticError):
    """A computation produced non-finite values or is ill-conditioned."""


class CheckpointError(NohgnnError, RuntimeError):
    """A checkpoint container is invalid or incompatible."""
