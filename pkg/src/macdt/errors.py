"""Exception types raised across the package."""


class MacdtError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(MacdtError, ValueError):
    pass


class UnreachableError(MacdtError):
    """No path exists between two vertices inside the allowed set."""


class NumericalError(MacdtError):
    """A covariance system could not be factorized even with jitter."""


class SizeLimitError(MacdtError):
    """An exhaustive search was requested beyond its enumeration budget."""


class NoSafeDestinationError(MacdtError):
    pass


class SampleSizeError(MacdtError):
    pass


class ConfigError(MacdtError):
    """Configuration failed to parse or validate.

    ``path`` is the dotted field path (or ``line N`` for parse errors).
    """

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)
