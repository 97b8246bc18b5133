"""Exception and warning types raised across the package."""


class IonMemError(Exception):
    """Base class for all package errors."""


class InvalidConstantsError(IonMemError, ValueError):
    pass


class LabelError(IonMemError, KeyError):
    pass


class NoRootError(IonMemError, ValueError):
    pass


class TraceRangeError(IonMemError, ValueError):
    pass


class SubspaceError(IonMemError, ValueError):
    pass


class FitError(IonMemError, RuntimeError):
    """A fit did not converge. ``best`` holds the last parameter vector."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FitDomainError(IonMemError, ValueError):
    pass


class NoOscillationError(IonMemError, ValueError):
    pass


class ConfigError(IonMemError, ValueError):
    """Bad configuration. ``where`` names the file/section/key at fault."""

    def __init__(self, message, where=None):
        super().__init__(f"{where}: {message}" if where else message)
        self.where = where


class PrecisionWarning(UserWarning):
    """Finite-difference or root-finding result limited by round-off."""


class FitWarning(UserWarning):
    pass


class DetectionWarning(UserWarning):
    pass
