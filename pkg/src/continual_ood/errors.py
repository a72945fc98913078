"""Exception hierarchy shared across the package.

Grouping matters for the CLI: configuration problems, data problems and
numeric divergence map to distinct process exit codes.
"""


class ContinualOODError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ContinualOODError, ValueError):
    """Bad configuration value, unknown key or unknown variant name."""


class DataError(ContinualOODError, ValueError):
    """Base class for problems with input data or data files."""


class InvalidDataError(DataError):
    """Input contains NaN/Inf or otherwise unusable values."""


class EmptyDatasetError(DataError):
    """An operation that needs at least one sample received none."""


class InsufficientDataError(DataError):
    """Too few samples for the requested estimate (e.g. N < 2)."""


class InvalidMatrixError(DataError):
    """A matrix argument violates its contract (asymmetric, non-PSD, ...)."""


class ShapeError(DataError):
    """Dimension or layer-count mismatch between arguments."""


class UndefinedMetricError(DataError):
    """A metric was requested on inputs where it is undefined."""


class FormatError(DataError):
    """A data file has the wrong magic or an unsupported version."""


class CorruptionError(DataError):
    """A data file ends or breaks mid-payload.

    Attributes:
        offset: byte offset at which the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class InsufficientPoolError(DataError):
    """A sample pool is too small to build the requested stream."""


class DivergenceError(ContinualOODError, RuntimeError):
    """Training produced a non-finite loss.

    Attributes:
        epoch: epoch index (0-based) at which the loss became non-finite.
    """

    def __init__(self, message: str, epoch: int):
        super().__init__(message)
        self.epoch = epoch
