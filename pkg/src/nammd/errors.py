"""Exception types raised across the package."""


class InputError(ValueError):
    """Malformed samples, probability vectors or parameters."""


class DegenerateInputError(InputError):
    """Input is well formed but carries no usable spread (e.g. all points equal)."""


class ConfigError(ValueError):
    """Invalid test, optimizer or experiment configuration."""


class InfeasibleTargetError(ValueError):
    """A requested target value cannot be reached under the given constraints."""


class CSVParseError(ValueError):
    """A dataset file could not be parsed; the message carries the line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
