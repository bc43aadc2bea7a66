"""Tensors, autodiff primitives, the optimizer and the shared data types."""

from .errors import (
    BadMagicError,
    CorruptHeaderError,
    DegenerateIndicatorError,
    LandmarkBoundsError,
    LandmarkCountError,
    LandmarkOutOfGridError,
    ManifestError,
    MissingImageError,
    ModelFormatError,
    NonFiniteLossError,
    ShapeError,
    TruncatedModelError,
    UnsupportedVersionError,
)
from .optim import AdamState, adam_step
from .tensor import Function, Tensor, as_tensor
from .types import CodecConfig, HeatmapStack, IndicatorMask, LandmarkSet

__all__ = [
    "Tensor",
    "Function",
    "as_tensor",
    "AdamState",
    "adam_step",
    "LandmarkSet",
    "HeatmapStack",
    "IndicatorMask",
    "CodecConfig",
    "ShapeError",
    "LandmarkOutOfGridError",
    "DegenerateIndicatorError",
    "ModelFormatError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedModelError",
    "CorruptHeaderError",
    "ManifestError",
    "MissingImageError",
    "LandmarkCountError",
    "LandmarkBoundsError",
    "NonFiniteLossError",
]
