"""Heatmap overlays and loss-curve plots."""

import logging
import os
from pathlib import Path

import numpy as np
from matplotlib.colors import LinearSegmentedColormap
from matplotlib.figure import Figure
from PIL import Image

from ..core.types import HeatmapStack

logger = logging.getLogger(__name__)

# 0 -> black, 0.5 -> red, 1 -> yellow, linear in between
HEATMAP_CMAP = LinearSegmentedColormap.from_list(
    "landmark_heat", [(0.0, (0.0, 0.0, 0.0)), (0.5, (1.0, 0.0, 0.0)), (1.0, (1.0, 1.0, 0.0))], N=256
)
OVERLAY_ALPHA = 0.6


def colorize_heatmap(heatmap: np.ndarray) -> np.ndarray:
    """Map a (H, W) array in [0, 1] to (H, W, 3) RGB floats with the black-red-yellow colormap."""
    values = np.clip(np.asarray(heatmap, dtype=np.float64), 0.0, 1.0)
    return HEATMAP_CMAP(values)[..., :3]


def _upscale(heatmap: np.ndarray, height: int, width: int) -> np.ndarray:
    if heatmap.shape == (height, width):
        return heatmap
    img = Image.fromarray(heatmap.astype(np.float32))
    return np.asarray(img.resize((width, height), Image.NEAREST), dtype=np.float64)


def render_overlay(
    image: np.ndarray,
    heatmaps: HeatmapStack | np.ndarray,
    grid_layout: tuple[int, int],
    path: str | os.PathLike | None = None,
) -> np.ndarray:
    """
    Tile one overlay per heatmap in a rows x cols grid.

    Each tile is 0.4 * image + 0.6 * colormap(heatmap upscaled to the image size).
    Tiles beyond the number of heatmaps stay black.

    Args:
        image: RGB image (3, S, S) in [0, 1]
        heatmaps: Stack (n, G, G)
        grid_layout: (rows, cols) with rows * cols >= n
        path: PNG to write, or None to only return the canvas

    Returns:
        The canvas as (rows * S, cols * S, 3) uint8
    """
    maps = heatmaps.maps if isinstance(heatmaps, HeatmapStack) else np.asarray(heatmaps)
    rows, cols = grid_layout
    if rows < 1 or cols < 1 or rows * cols < maps.shape[0]:
        raise ValueError(f"A {rows}x{cols} grid cannot hold {maps.shape[0]} heatmaps")
    base = np.asarray(image, dtype=np.float64).transpose(1, 2, 0)
    height, width = base.shape[:2]

    canvas = np.zeros((rows * height, cols * width, 3))
    for i, heatmap in enumerate(maps):
        r, c = divmod(i, cols)
        color = colorize_heatmap(_upscale(heatmap, height, width))
        tile = (1.0 - OVERLAY_ALPHA) * base + OVERLAY_ALPHA * color
        canvas[r * height : (r + 1) * height, c * width : (c + 1) * width] = tile
    out = np.clip(np.round(canvas * 255.0), 0, 255).astype(np.uint8)
    if path is not None:
        Image.fromarray(out).save(path, format="PNG")
        logger.info("Wrote overlay of %d heatmaps to %s", maps.shape[0], path)
    return out


def plot_loss_curves(history, path: str | os.PathLike) -> Path:
    """
    Plot training and validation loss per epoch.

    Args:
        history: Anything with ``records`` of objects carrying ``epoch``,
            ``train_loss`` and ``val_loss`` (a TrainHistory, or the result of
            reading a loss CSV)
        path: Image file to write
    """
    records = list(history.records)
    epochs = [r.epoch for r in records]
    fig = Figure(figsize=(8, 5))
    ax = fig.add_subplot(1, 1, 1)
    ax.plot(epochs, [r.train_loss for r in records], "b-", linewidth=2, label="Training")
    ax.plot(epochs, [r.val_loss for r in records], "r-", linewidth=2, label="Validation")
    ax.set_xlabel("Epoch", fontsize=12)
    ax.set_ylabel("Weighted L1 loss", fontsize=12)
    ax.set_title("Losses", fontsize=14)
    ax.set_ylim(bottom=0)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    logger.info("Saved loss curves to %s", path)
    return path
