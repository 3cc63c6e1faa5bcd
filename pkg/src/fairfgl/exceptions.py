class FairFGLError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(FairFGLError, ValueError):
    """Invalid configuration, raised before any computation starts."""


class GraphFormatError(FairFGLError, ValueError):
    """Malformed canonical graph file.  ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class PartitionError(FairFGLError, RuntimeError):
    pass
