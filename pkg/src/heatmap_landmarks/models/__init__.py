"""
Landmark detection models.

Model API:
    build(config) -> UNetModel
        Deterministically initialized residual U-Net.

    forward(model, batch) -> Tensor
        (B, 3, S, S) images to (B, n, S/4, S/4) sigmoid heatmaps, differentiable.

    predict_heatmaps(model, images) -> np.ndarray
        Evaluation-mode inference.

    save(model, path) / load(path) -> UNetModel
        Binary model files (magic "GMRK", version 1).

Example:
    >>> import numpy as np
    >>> from heatmap_landmarks.models import ModelConfig, build
    >>> model = build(ModelConfig(input_size=64, num_landmarks=4))
    >>> model(np.zeros((2, 3, 64, 64))).shape
    (2, 4, 16, 16)
"""

from .layers import BatchNorm2d, Conv2d, DecoderBlock, Module, ResidualBlock
from .serialization import deserialize, load, save, serialize
from .unet import ModelConfig, UNetModel, build, forward, predict_heatmaps

__all__ = [
    "ModelConfig",
    "UNetModel",
    "build",
    "forward",
    "predict_heatmaps",
    "save",
    "load",
    "serialize",
    "deserialize",
    "Module",
    "Conv2d",
    "BatchNorm2d",
    "ResidualBlock",
    "DecoderBlock",
]
