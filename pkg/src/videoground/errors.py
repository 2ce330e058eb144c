"""Exception taxonomy shared across the package.

Each class maps to one CLI exit code (see cli.EXIT_CODES) so scripted
callers can distinguish failure categories.
"""


class VideogroundError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(VideogroundError):
    """Invalid or inconsistent configuration values."""


class InputError(VideogroundError):
    """Malformed runtime input (tokens, segments, datasets, queries)."""


class DimensionError(VideogroundError):
    """Tensor shape mismatch in a primitive or layer."""


class NumericError(VideogroundError):
    """Non-finite value where a finite one is required."""


class CheckpointError(VideogroundError):
    """Unreadable, corrupt, or incompatible checkpoint file."""


class UnsupportedModeError(VideogroundError):
    """Operation not available for the model's conditioning mode."""
