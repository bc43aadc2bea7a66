"""Landmark and heatmap data types shared across the pipeline."""

import logging
from dataclasses import dataclass

import numpy as np

from .errors import LandmarkOutOfGridError, ShapeError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LandmarkSet:
    """
    An ordered set of integral landmark coordinates on a square pixel grid.

    Attributes:
        points: n pairs (x, y); x is the column from the left, y the row from the top.
            Index i is the identity of landmark i.
        grid_size: Side length of the grid the coordinates refer to
    """

    points: tuple[tuple[int, int], ...]
    grid_size: int

    def __post_init__(self) -> None:
        if self.grid_size < 1:
            raise ValueError(f"Grid size must be positive, got {self.grid_size}")
        if len(self.points) < 1:
            raise ValueError("A landmark set needs at least one point")
        normalized = []
        for i, point in enumerate(self.points):
            if len(point) != 2:
                raise ValueError(f"Landmark {i} must be an (x, y) pair, got {point}")
            coords = []
            for value in point:
                if float(value) != int(round(float(value))):
                    raise ValueError(f"Landmark {i} has a non-integral coordinate {value}")
                coords.append(int(round(float(value))))
            normalized.append((coords[0], coords[1]))
        object.__setattr__(self, "points", tuple(normalized))
        object.__setattr__(self, "grid_size", int(self.grid_size))

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        """Return the points as an (n, 2) integer array of (x, y) rows."""
        return np.array(self.points, dtype=np.int64).reshape(-1, 2)

    @classmethod
    def from_array(cls, array: np.ndarray, grid_size: int) -> "LandmarkSet":
        return cls(tuple((int(x), int(y)) for x, y in np.asarray(array).reshape(-1, 2)), grid_size)

    def check_bounds(self) -> None:
        """
        Verify every point lies inside the grid.

        Raises:
            LandmarkOutOfGridError: Naming the first landmark outside the grid
        """
        for i, (x, y) in enumerate(self.points):
            if not (0 <= x < self.grid_size and 0 <= y < self.grid_size):
                raise LandmarkOutOfGridError(i, (x, y), self.grid_size)


@dataclass
class HeatmapStack:
    """
    n square heatmaps with values in [0, 1].

    Attributes:
        maps: Array of shape (n, G, G)
    """

    maps: np.ndarray

    def __post_init__(self) -> None:
        self.maps = np.asarray(self.maps)
        if self.maps.ndim != 3 or self.maps.shape[1] != self.maps.shape[2]:
            raise ShapeError("A heatmap stack must have shape (n, G, G)", expected="(n, G, G)", got=self.maps.shape)
        if self.maps.shape[0] < 1:
            raise ValueError("A heatmap stack needs at least one map")
        if not (np.all(self.maps >= 0) and np.all(self.maps <= 1)):
            raise ValueError("Heatmap entries must lie in [0, 1]")

    @property
    def grid_size(self) -> int:
        return self.maps.shape[1]

    @property
    def num_landmarks(self) -> int:
        return self.maps.shape[0]

    def __len__(self) -> int:
        return self.num_landmarks


@dataclass
class IndicatorMask:
    """
    Binary masks of shape (n, G, G), 1 exactly where the ground-truth map is positive.

    Attributes:
        masks: Array of zeros and ones
    """

    masks: np.ndarray

    def __post_init__(self) -> None:
        self.masks = np.asarray(self.masks)
        if self.masks.ndim != 3 or self.masks.shape[1] != self.masks.shape[2]:
            raise ShapeError("An indicator mask must have shape (n, G, G)", expected="(n, G, G)", got=self.masks.shape)
        if not np.all((self.masks == 0) | (self.masks == 1)):
            raise ValueError("Indicator entries must be 0 or 1")

    def __len__(self) -> int:
        return self.masks.shape[0]


@dataclass(frozen=True)
class CodecConfig:
    """
    Heatmap encoding parameters.

    Attributes:
        radius: Cone radius r in grid pixels; values are 0 at distance >= r
        grid_size: Side length G of each heatmap
    """

    radius: float = 10.0
    grid_size: int = 128

    def __post_init__(self) -> None:
        if self.radius < 1:
            raise ValueError(f"Radius must be at least 1 pixel, got {self.radius}")
        if self.grid_size < 2:
            raise ValueError(f"Grid size must be at least 2, got {self.grid_size}")
        if self.grid_size < 2 * self.radius:
            logger.warning(
                "Heatmap grid %d is smaller than twice the cone radius %s; cones will cover most of the grid",
                self.grid_size,
                self.radius,
            )

    def with_grid(self, grid_size: int) -> "CodecConfig":
        return CodecConfig(radius=self.radius, grid_size=grid_size)
