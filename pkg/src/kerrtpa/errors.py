"""Exception hierarchy shared by every kerrtpa module."""


class KerrTpaError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(KerrTpaError, ValueError):
    pass


class PreconditionError(InvalidArgumentError):
    """An input violates a documented precondition (e.g. pulse does not fit the window)."""


class OutOfRangeError(InvalidArgumentError):
    pass


class ChannelClosedError(KerrTpaError, ValueError):
    """Two-photon absorption channel closed: 2*hw < E_gap + E_ph."""


class AliasingError(KerrTpaError, ValueError):
    """Spectral support exceeds the Nyquist band of the time grid."""


class ConvergenceError(KerrTpaError, RuntimeError):
    """Step halving did not reach the requested tolerance.

    ``estimate`` holds the last relative transmission change.
    """

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class InstabilityError(KerrTpaError, RuntimeError):
    """Negative or non-finite power produced by a too-large step."""


class DegenerateFitError(KerrTpaError, ValueError):
    pass


class FitError(KerrTpaError, RuntimeError):
    pass


class DataInconsistentError(KerrTpaError, ValueError):
    pass


class DataError(KerrTpaError, ValueError):
    pass


class ParseError(KerrTpaError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ConfigError(KerrTpaError, ValueError):
    pass


class NothingToFitError(KerrTpaError, ValueError):
    pass
