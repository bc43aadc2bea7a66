"""
Heatmap Landmarks

Landmark detection by heatmap regression, built on a small numpy autodiff engine:
- Linear-falloff cone encoding and argmax decoding of landmark coordinates
- A residual U-Net trained with a disk/background-weighted L1 loss
- On-the-fly rotation and shear augmentation
- Synthetic quadrilateral datasets, overlays and double-attention diagnostics

Example:
    >>> from heatmap_landmarks import CodecConfig, LandmarkSet, decode, encode
    >>>
    >>> landmarks = LandmarkSet(((10, 20), (64, 64)), grid_size=128)
    >>> decode(encode(landmarks, CodecConfig(radius=10, grid_size=128))) == landmarks
    True
"""

__version__ = "0.1.0"

# Analysis tools
from .analysis.diagnostics import DiagnosticReport, diagnose_dataset

# Core types
from .core.errors import (
    DegenerateIndicatorError,
    LandmarkOutOfGridError,
    ManifestError,
    ModelFormatError,
    NonFiniteLossError,
    ShapeError,
)
from .core.optim import AdamState, adam_step
from .core.tensor import Tensor
from .core.types import CodecConfig, HeatmapStack, IndicatorMask, LandmarkSet

# Data
from .data import (
    AffineParams,
    AugmentConfig,
    Sample,
    load_manifest,
    render_overlay,
    sample_params,
    save_dataset,
    synth_generate,
    warp_image,
    warp_landmarks,
)

# Heatmaps
from .heatmaps import (
    decode,
    decode_with_peaks,
    detect_double_attention,
    encode,
    indicator,
    plain_l1_loss,
    rescale,
    weighted_loss,
)

# Models
from .models import ModelConfig, UNetModel, build, forward, load, predict_heatmaps, save

# Training
from .training import EvaluationMetrics, TrainConfig, TrainHistory, evaluate, split, train

__all__ = [
    # Version
    "__version__",
    # Core types
    "Tensor",
    "LandmarkSet",
    "HeatmapStack",
    "IndicatorMask",
    "CodecConfig",
    "AdamState",
    "adam_step",
    # Errors
    "ShapeError",
    "LandmarkOutOfGridError",
    "DegenerateIndicatorError",
    "ModelFormatError",
    "ManifestError",
    "NonFiniteLossError",
    # Heatmaps
    "encode",
    "indicator",
    "decode",
    "decode_with_peaks",
    "rescale",
    "detect_double_attention",
    "weighted_loss",
    "plain_l1_loss",
    # Models
    "ModelConfig",
    "UNetModel",
    "build",
    "forward",
    "predict_heatmaps",
    "save",
    "load",
    # Data
    "AugmentConfig",
    "AffineParams",
    "sample_params",
    "warp_image",
    "warp_landmarks",
    "Sample",
    "load_manifest",
    "save_dataset",
    "synth_generate",
    "render_overlay",
    # Training
    "TrainConfig",
    "TrainHistory",
    "EvaluationMetrics",
    "split",
    "train",
    "evaluate",
    # Analysis
    "DiagnosticReport",
    "diagnose_dataset",
]
