"""Exception hierarchy shared across the toolkit."""


class CartoonForgeError(Exception):
    """Base class for all library errors."""


class DimensionError(CartoonForgeError):
    """Tensor has the wrong shape (channels, squareness, vector length...)."""


class RangeError(CartoonForgeError):
    """Value outside its declared range, or non-finite."""


class ScaleError(CartoonForgeError):
    """Image too small for the requested multi-scale similarity levels."""


class BackendError(CartoonForgeError):
    """A pretrained backbone could not be loaded or executed."""


class NumericalError(CartoonForgeError):
    """Non-finite loss or probability encountered during optimization."""


class ConfigError(CartoonForgeError):
    """Invalid, unknown, or missing configuration key/value."""


class IoError(CartoonForgeError):
    """Filesystem read/write failure for datasets, checkpoints, or reports."""


class EmptyDatasetError(CartoonForgeError):
    """Sampling was requested from a dataset with no entries."""


class LengthError(CartoonForgeError):
    """Paired lists have mismatched or zero length."""


class ParameterError(CartoonForgeError):
    """Invalid analysis parameter (e.g. t-SNE perplexity vs sample count)."""
