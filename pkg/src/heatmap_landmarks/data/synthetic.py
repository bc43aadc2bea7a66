"""
Synthetic quadrilateral datasets.

Each sample is a filled rectangle, rotated, scaled and translated at random,
on a plain background. The four landmarks are its corners in the rectangle's
own frame: top-left, top-right, bottom-right, bottom-left. In image coordinates
(y down) that order is always clockwise, i.e. the shoelace sum is positive.
"""

import logging
import math
import os
from pathlib import Path

import numpy as np
from matplotlib.path import Path as PolygonPath

from ..core.types import LandmarkSet
from .dataset import Sample, save_dataset

logger = logging.getLogger(__name__)

CORNER_NAMES = ["top_left", "top_right", "bottom_right", "bottom_left"]
MIN_CONTRAST = 0.3
MIN_IMAGE_SIZE = 16
MAX_ROTATION_DEG = 30.0
SIDE_RANGE = (0.3, 0.6)
# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


def margin_for(image_size: int) -> int:
    """Minimum distance kept between every corner and the canvas border."""
    return math.ceil(image_size / 8)


def signed_area(points: np.ndarray) -> float:
    """Shoelace area of a polygon given as (n, 2) rows of (x, y); positive is clockwise with y down."""
    x, y = np.asarray(points, dtype=np.float64).T
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def _colors(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    while True:
        fill = rng.uniform(0.0, 1.0, size=3)
        background = rng.uniform(0.0, 1.0, size=3)
        if abs(float(_LUMA @ fill) - float(_LUMA @ background)) >= MIN_CONTRAST:
            return fill, background


def _corners(rng: np.random.Generator, image_size: int) -> np.ndarray:
    margin = margin_for(image_size)
    span = image_size - 1 - 2 * margin
    width, height = rng.uniform(*SIDE_RANGE, size=2) * span
    theta = math.radians(rng.uniform(-MAX_ROTATION_DEG, MAX_ROTATION_DEG))
    local = np.array(
        [[-width / 2, -height / 2], [width / 2, -height / 2], [width / 2, height / 2], [-width / 2, height / 2]]
    )
    rotation = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    offsets = local @ rotation.T
    extent = np.abs(offsets).max(axis=0) + 0.5
    low = margin + extent
    high = image_size - 1 - margin - extent
    center = np.where(low <= high, rng.uniform(np.minimum(low, high), np.maximum(low, high)), (image_size - 1) / 2)
    corners = np.floor(center + offsets + 0.5).astype(np.int64)
    return np.clip(corners, margin, image_size - 1 - margin)


def synth_sample(rng: np.random.Generator, image_size: int, sample_id: str) -> Sample:
    """Draw one quadrilateral sample; the image is quantized to 8 bits so it survives a PNG round trip."""
    corners = _corners(rng, image_size)
    fill, background = _colors(rng)
    rows, cols = np.mgrid[0:image_size, 0:image_size]
    centres = np.column_stack([cols.ravel(), rows.ravel()]).astype(np.float64)
    inside = PolygonPath(corners.astype(np.float64)).contains_points(centres).reshape(image_size, image_size)
    image = np.where(inside[None], fill[:, None, None], background[:, None, None])
    image = (np.round(image * 255.0) / 255.0).astype(np.float32)
    return Sample(image=image, landmarks=LandmarkSet.from_array(corners, image_size), id=sample_id)


def synth_generate(
    count: int,
    image_size: int,
    seed: int,
    out_dir: str | os.PathLike | None = None,
) -> tuple[list[Sample], Path | None]:
    """
    Generate a deterministic quadrilateral dataset.

    Args:
        count: Number of samples, at least 1
        image_size: Canvas side length S, at least 16
        seed: Seed of the single generator stream
        out_dir: If given, PNGs and ``manifest.json`` are written there

    Returns:
        Tuple of (samples, manifest path or None)

    Example:
        >>> samples, _ = synth_generate(2, 64, seed=7)
        >>> [len(s.landmarks) for s in samples]
        [4, 4]
    """
    if count < 1:
        raise ValueError(f"count must be at least 1, got {count}")
    if image_size < MIN_IMAGE_SIZE:
        raise ValueError(f"image_size must be at least {MIN_IMAGE_SIZE}, got {image_size}")
    rng = np.random.default_rng(seed)
    width = max(4, len(str(count - 1)))
    samples = [synth_sample(rng, image_size, f"synth_{i:0{width}d}") for i in range(count)]
    logger.info("Generated %d synthetic samples at %dx%d (seed %d)", count, image_size, image_size, seed)
    manifest_path = None
    if out_dir is not None:
        manifest_path = save_dataset(samples, CORNER_NAMES, out_dir)
    return samples, manifest_path
