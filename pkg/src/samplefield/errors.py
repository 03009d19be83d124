"""Exception types shared across the package."""


class SampleFieldError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(SampleFieldError, ValueError):
    """Operand shapes are incompatible for the requested operation."""


class ConfigError(SampleFieldError, ValueError):
    """A configuration value is invalid or inconsistent."""


class UsageError(SampleFieldError, RuntimeError):
    """An API was called in a state it does not support."""


class InputError(SampleFieldError, ValueError):
    """A runtime input (position, value, observation) is invalid."""


class FormatError(SampleFieldError, ValueError):
    """A binary or text artifact does not match its declared format."""


class TrainingAbort(SampleFieldError, RuntimeError):
    """Training hit a non-recoverable numeric state; carries a step report."""
