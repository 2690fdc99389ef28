"""Exception hierarchy shared across the engine."""


class HosoError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(HosoError):
    """Feature-bank directory violates the on-disk format."""


class DataError(HosoError):
    """Payload values are invalid (non-finite, denormalized prototypes, missing views)."""


class ConfigError(HosoError):
    """Inconsistent or impossible configuration."""


class InsufficientShotsError(HosoError):
    """A class has fewer train items than the requested number of shots."""


class ShapeError(HosoError):
    """Operands have incompatible shapes."""


class DegenerateVectorError(HosoError):
    """A vector with (near-)zero norm reached an L2 normalization."""


class LabelError(HosoError):
    """Class label outside [0, num_classes)."""


class NumericsError(HosoError):
    """Non-finite values produced where finite ones are required."""


class TapeError(HosoError):
    """Gradient tape used more than once."""
