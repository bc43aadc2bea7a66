"""
Conversion between landmark coordinates and heatmaps.

Ground-truth heatmaps are linear cones: map_i(p) = max(0, 1 - d(p, a_i) / r)
with d the Euclidean distance between pixel centres, so each map is exactly 1
at its landmark and exactly 0 from distance r outwards. Cones near the border
are clipped by the grid, never shifted or renormalized.
"""

import numpy as np
from scipy.ndimage import maximum_filter

from ..core.ops import max_with_index
from ..core.types import CodecConfig, HeatmapStack, IndicatorMask, LandmarkSet


def _cone(x: int, y: int, radius: float, grid_size: int) -> np.ndarray:
    rows, cols = np.mgrid[0:grid_size, 0:grid_size]
    squared = (cols - x) ** 2 + (rows - y) ** 2
    inside = squared < radius * radius
    # Squared lattice distances are exact integers, so sqrt is correctly rounded.
    values = 1.0 - np.sqrt(squared.astype(np.float64)) / radius
    return np.where(inside, values, 0.0)


def encode(landmarks: LandmarkSet, config: CodecConfig) -> HeatmapStack:
    """
    Encode landmarks as a stack of linear-falloff cones.

    Args:
        landmarks: Integral landmarks on the codec grid
        config: Cone radius and grid size

    Returns:
        HeatmapStack of shape (n, G, G) in float64

    Raises:
        ValueError: If the landmark grid differs from the codec grid
        LandmarkOutOfGridError: Naming the first landmark outside the grid

    Example:
        >>> stack = encode(LandmarkSet(((64, 64),), 128), CodecConfig(radius=10, grid_size=128))
        >>> float(stack.maps[0, 64, 69])
        0.5
    """
    if landmarks.grid_size != config.grid_size:
        raise ValueError(
            f"Landmarks are on a {landmarks.grid_size} grid but the codec encodes on {config.grid_size}; "
            "rescale them first"
        )
    landmarks.check_bounds()
    maps = np.stack([_cone(x, y, config.radius, config.grid_size) for x, y in landmarks.points])
    return HeatmapStack(maps)


def indicator(gt: HeatmapStack) -> IndicatorMask:
    """Binary mask per map: 1 where the ground truth is strictly positive, else 0."""
    return IndicatorMask((gt.maps > 0).astype(gt.maps.dtype))


def decode_with_peaks(pred: HeatmapStack | np.ndarray) -> tuple[LandmarkSet, list[float]]:
    """
    Decode each map to the position of its maximum pixel.

    Ties go to the first occurrence in row-major order (smaller y, then smaller x).

    Returns:
        Tuple of (landmarks on the prediction grid, peak value per landmark)
    """
    maps = pred.maps if isinstance(pred, HeatmapStack) else np.asarray(pred)
    if maps.ndim != 3 or maps.shape[0] == 0:
        raise ValueError(f"Expected a non-empty (n, G, G) stack, got shape {maps.shape}")
    grid_size = maps.shape[-1]
    points = []
    peaks = []
    for heatmap in maps:
        value, index = max_with_index(heatmap)
        y, x = divmod(index, grid_size)
        points.append((x, y))
        peaks.append(value)
    return LandmarkSet(tuple(points), grid_size), peaks


def decode(pred: HeatmapStack | np.ndarray) -> LandmarkSet:
    """Argmax decoding; see ``decode_with_peaks``."""
    landmarks, _ = decode_with_peaks(pred)
    return landmarks


def _round_ratio(numerator: int, denominator: int) -> int:
    """Round numerator / denominator half away from zero using exact integer arithmetic."""
    if numerator >= 0:
        return (2 * numerator + denominator) // (2 * denominator)
    return -((-2 * numerator + denominator) // (2 * denominator))


def rescale_coordinate(value: int, from_size: int, to_size: int) -> int:
    """Map one coordinate with the endpoint-preserving rule round(c * (to-1) / (from-1)), clamped."""
    if from_size < 2 or to_size < 2:
        raise ValueError(f"Grid sizes must be at least 2, got {from_size} -> {to_size}")
    mapped = _round_ratio(int(value) * (to_size - 1), from_size - 1)
    return min(max(mapped, 0), to_size - 1)


def rescale(landmarks: LandmarkSet, from_size: int, to_size: int) -> LandmarkSet:
    """
    Move landmarks between grid sizes, preserving the endpoints 0 and size-1.

    Example:
        >>> rescale(LandmarkSet(((255, 255),), 512), 512, 128).points
        ((63, 63),)
    """
    points = tuple(
        (rescale_coordinate(x, from_size, to_size), rescale_coordinate(y, from_size, to_size))
        for x, y in landmarks.points
    )
    return LandmarkSet(points, to_size)


def detect_double_attention(
    heatmap: np.ndarray,
    threshold: float = 0.5,
    min_separation: float = 10.0,
) -> list[tuple[int, int]]:
    """
    Find the separated strong peaks of a single heatmap.

    A peak is a pixel that is >= all of its 8 neighbours and >= threshold.
    Peaks are then kept greedily from strongest to weakest (row-major order among
    equal values) while they stay at least ``min_separation`` pixels from every
    peak already kept. More than one surviving peak signals double attention.

    Args:
        heatmap: A single (G, G) map
        threshold: Minimum peak value, in (0, 1)
        min_separation: Minimum Euclidean distance between kept peaks, >= 1

    Returns:
        List of (x, y) peak coordinates, strongest first
    """
    if not 0 < threshold < 1:
        raise ValueError(f"Threshold must lie in (0, 1), got {threshold}")
    if min_separation < 1:
        raise ValueError(f"Minimum separation must be at least 1 pixel, got {min_separation}")
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.ndim != 2:
        raise ValueError(f"Expected a single (G, G) heatmap, got shape {heatmap.shape}")

    neighbourhood_max = maximum_filter(heatmap, size=3, mode="constant", cval=-np.inf)
    candidates = np.flatnonzero((heatmap >= neighbourhood_max) & (heatmap >= threshold))
    if candidates.size == 0:
        return []

    values = heatmap.ravel()[candidates]
    order = np.argsort(-values, kind="stable")
    width = heatmap.shape[1]
    kept: list[tuple[int, int]] = []
    for flat_index in candidates[order]:
        y, x = divmod(int(flat_index), width)
        if all((x - kx) ** 2 + (y - ky) ** 2 >= min_separation**2 for kx, ky in kept):
            kept.append((x, y))
    return kept
