"""Exception types raised by spectrapan.

All of them derive from `SpectrapanError` so callers (and the CLI) can tell
toolkit failures apart from programming errors.
"""


class SpectrapanError(Exception):
    pass


class FormatError(SpectrapanError, ValueError):
    """Malformed PNG, field container or JSON table."""


class RangeError(SpectrapanError, ValueError):
    """A value lies outside the representable or admissible range."""


class ShapeError(SpectrapanError, ValueError):
    """Dimension or channel mismatch between inputs."""


class DegenerateInputError(SpectrapanError, ValueError):
    """The requested quantity is undefined for this input."""


class SceneError(SpectrapanError, ValueError):
    """Synthetic scene shapes are out of bounds or collide."""


class DivergenceError(SpectrapanError, RuntimeError):
    """Training produced a non-finite loss."""
