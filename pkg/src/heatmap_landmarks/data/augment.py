"""
On-the-fly rotation and shear applied consistently to images and landmarks.

The forward map of a point p about the centre c is

    p' = c + Sh @ R @ (p - c),   R = [[cos t, -sin t], [sin t, cos t]],   Sh = [[1, sx], [sy, 1]]

i.e. rotate first, then shear. Coordinates are (x, y) with y pointing down, so a
positive angle turns the image clockwise on screen; a 90 degree rotation of a
G x G grid sends (x, y) to (G - 1 - y, x).

Images are warped by inverse mapping with bilinear sampling and zero fill;
landmarks are pushed through the forward map and rounded.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from ..core.types import LandmarkSet

_SNAP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class AugmentConfig:
    """
    Ranges for the uniform augmentation draws.

    Attributes:
        rotation_range_deg: (lo, hi) rotation in degrees
        shear_range: (lo, hi) shear factor (tangent units), used for both axes
        seed: Base seed of the augmentation streams
    """

    rotation_range_deg: tuple[float, float] = (-15.0, 15.0)
    shear_range: tuple[float, float] = (-0.15, 0.15)
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("rotation_range_deg", "shear_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name} must satisfy lo <= hi, got ({lo}, {hi})")
            object.__setattr__(self, name, (float(lo), float(hi)))
        lo, hi = self.shear_range
        if max(abs(lo), abs(hi)) >= 1:
            raise ValueError(f"Shear magnitudes must stay below 1 to keep the map invertible, got {self.shear_range}")

    @classmethod
    def disabled(cls, seed: int = 0) -> "AugmentConfig":
        return cls(rotation_range_deg=(0.0, 0.0), shear_range=(0.0, 0.0), seed=seed)


@dataclass(frozen=True)
class AffineParams:
    """
    One sampled augmentation.

    Attributes:
        rotation_deg: Rotation angle in degrees
        shear_x: Horizontal shear factor
        shear_y: Vertical shear factor
        center: (x, y) pivot of both rotation and shear
    """

    rotation_deg: float = 0.0
    shear_x: float = 0.0
    shear_y: float = 0.0
    center: tuple[float, float] = (0.0, 0.0)

    def linear_part(self) -> np.ndarray:
        theta = math.radians(self.rotation_deg)
        rotation = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        shear = np.array([[1.0, self.shear_x], [self.shear_y, 1.0]])
        linear = shear @ rotation
        if abs(np.linalg.det(linear)) < 1e-12:
            raise ValueError(f"Shear ({self.shear_x}, {self.shear_y}) makes the transform singular")
        return linear

    def forward_matrix(self) -> np.ndarray:
        """2x3 matrix mapping source (x, y, 1) to warped (x', y')."""
        return _about_center(self.linear_part(), self.center)

    def inverse_matrix(self) -> np.ndarray:
        """2x3 matrix mapping warped (x', y', 1) back to the source."""
        return _about_center(np.linalg.inv(self.linear_part()), self.center)


def _about_center(linear: np.ndarray, center: tuple[float, float]) -> np.ndarray:
    c = np.asarray(center, dtype=np.float64)
    return np.hstack([linear, (c - linear @ c)[:, None]])


def sample_params(config: AugmentConfig, rng: np.random.Generator, image_size: int) -> AffineParams:
    """
    Draw rotation, then horizontal shear, then vertical shear uniformly from their ranges.

    Args:
        config: Augmentation ranges
        rng: Random stream; the result is a pure function of its state
        image_size: Side length of the square image, used for the centre
    """
    rotation = rng.uniform(*config.rotation_range_deg)
    shear_x = rng.uniform(*config.shear_range)
    shear_y = rng.uniform(*config.shear_range)
    center = ((image_size - 1) / 2.0, (image_size - 1) / 2.0)
    return AffineParams(float(rotation), float(shear_x), float(shear_y), center)


def _snap(coords: np.ndarray) -> np.ndarray:
    rounded = np.round(coords)
    return np.where(np.abs(coords - rounded) < _SNAP_TOLERANCE, rounded, coords)


def warp_image(image: np.ndarray, params: AffineParams) -> np.ndarray:
    """
    Warp a (C, H, W) image by inverse mapping with bilinear sampling.

    Samples falling outside the source are filled with 0, so every output value
    lies within [min(input, 0), max(input)].
    """
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[1] < 2 or image.shape[2] < 2:
        raise ValueError(f"Expected a (C, H, W) image with H, W >= 2, got shape {image.shape}")
    _, height, width = image.shape
    inverse = params.inverse_matrix()
    rows, cols = np.mgrid[0:height, 0:width].astype(np.float64)
    src_x = inverse[0, 0] * cols + inverse[0, 1] * rows + inverse[0, 2]
    src_y = inverse[1, 0] * cols + inverse[1, 1] * rows + inverse[1, 2]
    coords = np.stack([_snap(src_y), _snap(src_x)])
    warped = np.stack(
        [map_coordinates(channel, coords, order=1, mode="constant", cval=0.0) for channel in image.astype(np.float64)]
    )
    return warped.astype(image.dtype)


def _round_half_away(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def transform_landmarks(landmarks: LandmarkSet, matrix: np.ndarray) -> tuple[LandmarkSet, list[bool]]:
    """
    Apply a 2x3 affine matrix to landmarks, round, and clamp to the grid.

    Returns:
        Tuple of (transformed landmarks, visibility flags); a point is invisible
        when its rounded position fell outside the grid before clamping
    """
    points = landmarks.as_array().astype(np.float64)
    moved = points @ matrix[:, :2].T + matrix[:, 2]
    rounded = _round_half_away(_snap(moved)).astype(np.int64)
    limit = landmarks.grid_size - 1
    visible = np.all((rounded >= 0) & (rounded <= limit), axis=1)
    clamped = np.clip(rounded, 0, limit)
    return LandmarkSet.from_array(clamped, landmarks.grid_size), [bool(v) for v in visible]


def warp_landmarks(landmarks: LandmarkSet, params: AffineParams) -> tuple[LandmarkSet, list[bool]]:
    """Push landmarks through the forward map of ``params``; see ``transform_landmarks``."""
    return transform_landmarks(landmarks, params.forward_matrix())
