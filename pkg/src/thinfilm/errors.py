"""Exception hierarchy shared by every thinfilm module."""


class ThinFilmError(Exception):
    """Base class for all errors raised by the package."""


class NonFiniteField(ThinFilmError, ValueError):
    pass


class GridMismatch(ThinFilmError, ValueError):
    pass


class InvalidExponent(ThinFilmError, ValueError):
    pass


class NegativeTime(ThinFilmError, ValueError):
    pass


class SingularAtZero(ThinFilmError, ValueError):
    pass


class NoCheckpoint(ThinFilmError, KeyError):
    pass


class SaturatedRegime(ThinFilmError, RuntimeError):
    pass


class InsufficientData(ThinFilmError, RuntimeError):
    pass


class DegenerateEstimate(ThinFilmError, RuntimeError):
    pass


class BracketError(ThinFilmError, RuntimeError):
    def __init__(self, message, interval=None):
        super().__init__(message)
        self.interval = interval


class StiffnessFailure(ThinFilmError, RuntimeError):
    """Step size fell below the floor. ``trajectory`` holds what was computed."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class NoContraction(ThinFilmError, RuntimeError):
    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class HorizonTooLong(ThinFilmError, ValueError):
    pass


class NoBlowupSignal(ThinFilmError, RuntimeError):
    pass


class SmallDataViolation(ThinFilmError, ValueError):
    pass


class ConfigError(ThinFilmError, ValueError):
    pass


class UnderResolvedAudit(UserWarning):
    """Time sampling too coarse for the trapezoid energy audit."""


class PersistenceError(ThinFilmError, OSError):
    """Reading or writing an artifact failed; the message names the path."""
