"""Exception and warning types shared across the package."""


class QNDError(Exception):
    """Base class for all errors raised by qndmetro."""


class OutOfRangeError(QNDError, ValueError):
    pass


class DimensionMismatchError(QNDError, ValueError):
    pass


class TruncationError(QNDError):
    """Raised when more norm than allowed leaks past the Fock truncation."""

    def __init__(self, message, tail_mass=None):
        super().__init__(message)
        self.tail_mass = tail_mass


class ImpossibleOutcomeError(QNDError):
    pass


class DegenerateRecordError(QNDError):
    pass


class NoCrossingError(QNDError):
    pass


class ConfigError(QNDError, ValueError):
    pass


class FringeAmbiguityWarning(UserWarning):
    """The outcome record cannot localise the phase inside one fringe."""
