"""Exception types shared across the package."""


class MVSBoostError(Exception):
    """Base class for all errors raised by this package."""


class DataError(MVSBoostError):
    """Malformed or inconsistent input data."""


class ModelFormatError(MVSBoostError):
    """A model document could not be parsed or fails validation."""


class UnsupportedModelVersion(ModelFormatError):
    """The model document declares a format version this reader does not know."""


class MetricError(MVSBoostError):
    """A requested metric is undefined for the given inputs."""
