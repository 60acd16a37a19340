"""Exception types raised across the package."""


class ErgotreeError(Exception):
    """Base class for all package errors."""


class InvalidAlphabet(ErgotreeError, ValueError):
    pass


class AmbiguousStationary(ErgotreeError):
    """The matrix has more than one closed class, so its stationary vector is not unique."""


class NoReturnObserved(ErgotreeError):
    pass


class NotMeasurePreserving(ErgotreeError):
    pass


class NotBoundarySupported(ErgotreeError):
    pass


class DomainError(ErgotreeError, ValueError):
    pass


class InsufficientDepth(ErgotreeError):
    """A symbolic point does not carry enough prefix symbols for the requested computation."""

    def __init__(self, message, required=None, available=None):
        super().__init__(message)
        self.required = required
        self.available = available


class EmptyTreeAtPoint(ErgotreeError):
    pass


class ConfigError(ErgotreeError):
    pass
