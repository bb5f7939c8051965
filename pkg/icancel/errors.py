"""icancel.errors"""
__docformat__ = "restructuredtext en"


class IcancelError(Exception):
    def __init__(self, msg):
        self.msg = msg

    def __str__(self):
        return self.msg


class InvalidConfigError(IcancelError):
    """Raised when a config, manifest or scheme fails validation."""


class ConstellationNotFoundError(InvalidConfigError):
    """Raised when an unknown constellation name is requested."""


class ShapeMismatchError(IcancelError, ValueError):
    """Raised when tensor, grid or sequence dimensions do not agree."""


class SymbolRangeError(IcancelError, ValueError):
    """Raised for symbol indices outside [0, M) or non-finite points."""


class EmptyDatasetError(IcancelError):
    """Raised when an operation needs at least one symbol, block or frame."""


class BackwardBeforeForwardError(IcancelError):
    """Raised when backward is called without a recorded forward pass."""


class NumericalFaultError(IcancelError):
    """Raised when NaN or Inf shows up in a tensor, loss or gradient."""


class RunningStatsError(IcancelError):
    """Raised when batch normalization is asked for inference without
    running statistics.
    """


class CalibrationError(IcancelError):
    """Raised when a target SER cannot be bracketed by the SIR search."""


class UncalibratedError(IcancelError):
    """Raised when quantized inference runs before activation scales are
    calibrated.
    """


class DatasetFormatError(IcancelError):
    """Raised when a DIC1 dataset file cannot be read."""


class VersionMismatchError(DatasetFormatError):
    """Raised when a file declares a format version we do not read."""


class CorruptPayloadError(DatasetFormatError):
    """Raised for truncated files, bad magic or checksum mismatch."""


class CheckpointFormatError(CorruptPayloadError):
    """Raised when a DICM checkpoint file cannot be read."""
