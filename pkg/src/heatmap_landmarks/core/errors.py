"""Structured errors raised across the landmark pipeline.

Input problems derive from ``ValueError`` and training failures from
``RuntimeError``, so callers that only know the builtin types still catch them.
"""


class ShapeError(ValueError):
    """Raised when tensor dimensions do not agree."""

    def __init__(self, message: str, expected=None, got=None):
        if expected is not None or got is not None:
            message = f"{message} (expected {expected}, got {got})"
        super().__init__(message)
        self.expected = expected
        self.got = got


class LandmarkOutOfGridError(ValueError):
    """Raised when a landmark lies outside its declared grid."""

    def __init__(self, index: int, point: tuple[int, int], grid_size: int):
        super().__init__(
            f"Landmark {index} at {point} lies outside the {grid_size}x{grid_size} grid"
        )
        self.index = index
        self.point = point
        self.grid_size = grid_size


class DegenerateIndicatorError(ValueError):
    """Raised when an indicator mask is all zeros or all ones."""

    def __init__(self, index: int, ones: int, total: int):
        super().__init__(
            f"Indicator for landmark {index} is degenerate: {ones} of {total} pixels set; "
            "the weighted loss needs both disk and background pixels"
        )
        self.index = index


class ModelFormatError(ValueError):
    """Base class for unreadable model files."""


class BadMagicError(ModelFormatError):
    """The file does not start with the model magic bytes."""


class UnsupportedVersionError(ModelFormatError):
    """The file format version is not understood."""


class TruncatedModelError(ModelFormatError):
    """The file ends before all declared tensors were read."""


class CorruptHeaderError(ModelFormatError):
    """The JSON header is missing or malformed."""


class ManifestError(ValueError):
    """Raised when a dataset manifest or one of its entries is invalid."""

    def __init__(self, message: str, entry_id: str | None = None):
        if entry_id is not None:
            message = f"entry '{entry_id}': {message}"
        super().__init__(message)
        self.entry_id = entry_id


class MissingImageError(ManifestError):
    """An entry references an image file that does not exist."""


class LandmarkCountError(ManifestError):
    """An entry has a different number of landmarks than the manifest declares."""


class LandmarkBoundsError(ManifestError):
    """An entry has a landmark outside its image."""


class NonFiniteLossError(RuntimeError):
    """Raised when training produces a NaN or infinite loss."""

    def __init__(self, epoch: int, batch: int, value: float):
        super().__init__(f"Non-finite loss {value} at epoch {epoch}, batch {batch}")
        self.epoch = epoch
        self.batch = batch
        self.value = value
