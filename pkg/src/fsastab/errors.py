"""Exception types shared across the package."""


class FsaError(Exception):
    """Base class for computation errors raised by fsastab."""


class StateSpaceTooLarge(FsaError):
    """The requested exact computation exceeds its configured size cap."""


class NumericalOverflowError(FsaError, ArithmeticError):
    """A floating-point evaluation produced a non-finite value."""


class TruncationError(FsaError):
    """Truncated probability mass is too large for the requested quantity."""
