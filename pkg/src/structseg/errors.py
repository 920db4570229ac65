"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class ConfigError(ValueError):
    """A configuration value violates an invariant."""


class GraphError(RuntimeError):
    """Autograd misuse: non-scalar loss, or backward through a consumed graph."""


class FileFormatError(ValueError):
    """Base class for errors in the binary file formats."""


class BadMagicError(FileFormatError):
    """File does not start with the expected magic bytes."""


class BadVersionError(FileFormatError):
    """File version is not supported."""


class TruncatedFileError(FileFormatError):
    """File ended before the declared payload was read."""


class CheckpointMismatchError(FileFormatError):
    """Checkpoint tensors do not match the model (missing name or wrong shape)."""


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite during training."""
