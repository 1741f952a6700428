"""Exception hierarchy shared by every module."""


class RedNetError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(RedNetError, ValueError):
    """Operand shapes disagree or a buffer has the wrong length."""


class GeometryError(RedNetError, ValueError):
    """A convolution geometry yields a non-positive spatial size."""


class ConfigError(RedNetError, ValueError):
    """An architecture, training or run configuration is invalid."""


class FormatError(RedNetError, ValueError):
    """A checkpoint or image file is corrupt, truncated or unsupported."""


class DataError(RedNetError, ValueError):
    """Training or evaluation data cannot be used as requested."""
