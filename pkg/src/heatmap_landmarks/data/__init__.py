"""Augmentation, dataset IO, synthetic data and visualization."""

from .augment import (
    AffineParams,
    AugmentConfig,
    sample_params,
    transform_landmarks,
    warp_image,
    warp_landmarks,
)
from .dataset import (
    Manifest,
    ManifestEntry,
    Sample,
    load_manifest,
    read_image,
    read_manifest,
    save_dataset,
    to_model_image,
    write_image,
)
from .synthetic import CORNER_NAMES, signed_area, synth_generate
from .visualization import colorize_heatmap, plot_loss_curves, render_overlay

__all__ = [
    "AugmentConfig",
    "AffineParams",
    "sample_params",
    "warp_image",
    "warp_landmarks",
    "transform_landmarks",
    "Sample",
    "Manifest",
    "ManifestEntry",
    "load_manifest",
    "read_manifest",
    "read_image",
    "to_model_image",
    "write_image",
    "save_dataset",
    "synth_generate",
    "signed_area",
    "CORNER_NAMES",
    "colorize_heatmap",
    "render_overlay",
    "plot_loss_curves",
]
