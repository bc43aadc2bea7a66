"""
Dataset manifests: loading annotated images and writing them back.

A manifest is one JSON file; image paths are relative to its directory:

    {"landmark_names": ["p0", ...],
     "entries": [{"id": "...", "image": "images/a.png", "landmarks": [[x, y], ...]}]}

Coordinates are integer pixels of the original image, x the column from the
left and y the row from the top.
"""

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from ..core.errors import LandmarkBoundsError, LandmarkCountError, ManifestError, MissingImageError
from ..core.files import atomic_write_text
from ..core.types import LandmarkSet
from ..heatmaps.codec import rescale_coordinate

logger = logging.getLogger(__name__)

SUPPORTED_FORMATS = ("PNG", "PPM")
MANIFEST_NAME = "manifest.json"


@dataclass
class Sample:
    """
    One training or evaluation example.

    Attributes:
        image: RGB image of shape (3, S, S), float32 in [0, 1]
        landmarks: Landmarks in image pixel space (grid size S)
        id: Identifier from the manifest
    """

    image: np.ndarray
    landmarks: LandmarkSet
    id: str

    @property
    def image_size(self) -> int:
        return self.image.shape[-1]


@dataclass
class ManifestEntry:
    id: str
    image: str
    landmarks: list[tuple[int, int]]


@dataclass
class Manifest:
    """
    Parsed manifest.

    Attributes:
        landmark_names: Ordered landmark names; index i names landmark i
        entries: Entries in file order
        root: Directory the image paths are relative to
    """

    landmark_names: list[str]
    entries: list[ManifestEntry]
    root: Path = field(default_factory=Path)

    @property
    def num_landmarks(self) -> int:
        return len(self.landmark_names)


def _parse_point(raw, entry_id: str, index: int) -> tuple[int, int]:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ManifestError(f"landmark {index} must be an [x, y] pair, got {raw!r}", entry_id)
    if not all(isinstance(v, int) and not isinstance(v, bool) for v in raw):
        raise ManifestError(f"landmark {index} must have integer coordinates, got {raw!r}", entry_id)
    return int(raw[0]), int(raw[1])


def read_manifest(path: str | os.PathLike) -> Manifest:
    """
    Parse and structurally validate a manifest without touching the images.

    Raises:
        FileNotFoundError: If the manifest does not exist
        ManifestError: If the JSON is malformed or an entry is incomplete
        LandmarkCountError: If an entry has the wrong number of landmarks
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"malformed JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ManifestError(f"{path} must contain a JSON object")

    names = data.get("landmark_names")
    if not isinstance(names, list) or not names or not all(isinstance(n, str) for n in names):
        raise ManifestError("'landmark_names' must be a non-empty list of strings")
    raw_entries = data.get("entries")
    if not isinstance(raw_entries, list):
        raise ManifestError("'entries' must be a list")

    entries = []
    seen = set()
    for position, raw in enumerate(raw_entries):
        if not isinstance(raw, dict):
            raise ManifestError(f"entry {position} must be an object")
        entry_id = str(raw.get("id", position))
        if entry_id in seen:
            raise ManifestError("duplicate entry id", entry_id)
        seen.add(entry_id)
        image = raw.get("image")
        if not isinstance(image, str):
            raise ManifestError("missing 'image' path", entry_id)
        points = raw.get("landmarks")
        if not isinstance(points, list):
            raise ManifestError("missing 'landmarks' list", entry_id)
        if len(points) != len(names):
            raise LandmarkCountError(
                f"has {len(points)} landmarks but the manifest declares {len(names)}", entry_id
            )
        entries.append(ManifestEntry(entry_id, image, [_parse_point(p, entry_id, i) for i, p in enumerate(points)]))
    return Manifest(landmark_names=list(names), entries=entries, root=path.parent)


def read_image(path: str | os.PathLike) -> np.ndarray:
    """
    Decode a PNG or binary PPM into an (H, W, 3) uint8 RGB array; alpha is dropped.

    Raises:
        FileNotFoundError: If the file does not exist
        ValueError: If the file is not a supported image
    """
    try:
        with Image.open(path) as img:
            if img.format not in SUPPORTED_FORMATS:
                raise ValueError(f"{path}: unsupported image format {img.format}, expected PNG or PPM")
            return np.asarray(img.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ValueError(f"{path}: not a readable image") from exc


def to_model_image(rgb: np.ndarray, image_size: int) -> np.ndarray:
    """Resize an (H, W, 3) uint8 array bilinearly to S x S and return (3, S, S) float32 in [0, 1]."""
    img = Image.fromarray(np.asarray(rgb, dtype=np.uint8))
    if img.size != (image_size, image_size):
        img = img.resize((image_size, image_size), Image.BILINEAR)
    return (np.asarray(img, dtype=np.float32) / 255.0).transpose(2, 0, 1).copy()


def _load_entry(entry: ManifestEntry, root: Path, image_size: int) -> Sample:
    image_path = root / entry.image
    if not image_path.is_file():
        raise MissingImageError(f"image file not found: {image_path}", entry.id)
    try:
        rgb = read_image(image_path)
    except ValueError as exc:
        raise ManifestError(str(exc), entry.id) from exc
    height, width = rgb.shape[:2]
    if height < 2 or width < 2:
        raise ManifestError(f"image {image_path} is smaller than 2x2", entry.id)

    points = []
    for i, (x, y) in enumerate(entry.landmarks):
        if not (0 <= x < width and 0 <= y < height):
            raise LandmarkBoundsError(f"landmark {i} at ({x}, {y}) lies outside the {width}x{height} image", entry.id)
        points.append((rescale_coordinate(x, width, image_size), rescale_coordinate(y, height, image_size)))
    return Sample(to_model_image(rgb, image_size), LandmarkSet(tuple(points), image_size), entry.id)


def load_manifest(path: str | os.PathLike, image_size: int = 64, workers: int | None = None) -> list[Sample]:
    """
    Load every entry of a manifest as a model-ready sample.

    Images are converted to RGB in [0, 1] and resized to ``image_size`` by
    bilinear interpolation; landmarks are rescaled per axis with the codec's
    endpoint-preserving rule. Entries may decode in parallel, but the result
    keeps manifest order.

    Args:
        path: Manifest file
        image_size: Model input size S
        workers: Thread count for decoding; None lets the executor decide

    Returns:
        Samples in manifest order

    Raises:
        ManifestError: Or a subclass naming the offending entry
    """
    if image_size < 2:
        raise ValueError(f"image_size must be at least 2, got {image_size}")
    manifest = read_manifest(path)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        samples = list(pool.map(lambda e: _load_entry(e, manifest.root, image_size), manifest.entries))
    logger.info("Loaded %d samples with %d landmarks from %s", len(samples), manifest.num_landmarks, path)
    return samples


def write_image(path: str | os.PathLike, image: np.ndarray) -> None:
    """Write a (3, H, W) float image in [0, 1] as an 8-bit PNG."""
    rgb = np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(np.ascontiguousarray(rgb.transpose(1, 2, 0))).save(path, format="PNG")


def save_dataset(
    samples: list[Sample],
    landmark_names: list[str],
    directory: str | os.PathLike,
) -> Path:
    """
    Write samples as PNGs under ``directory/images`` plus a manifest.

    Landmarks are stored in the sample's pixel space, so ``load_manifest`` at
    the same image size returns them unchanged.

    Returns:
        Path of the written manifest
    """
    directory = Path(directory)
    image_dir = directory / "images"
    image_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for sample in samples:
        if len(sample.landmarks) != len(landmark_names):
            raise LandmarkCountError(
                f"has {len(sample.landmarks)} landmarks but {len(landmark_names)} names were given", sample.id
            )
        relative = f"images/{sample.id}.png"
        write_image(directory / relative, sample.image)
        entries.append({"id": sample.id, "image": relative, "landmarks": [list(p) for p in sample.landmarks.points]})
    manifest = {"landmark_names": list(landmark_names), "entries": entries}
    manifest_path = atomic_write_text(directory / MANIFEST_NAME, json.dumps(manifest, indent=2) + "\n")
    logger.info("Wrote %d samples to %s", len(samples), manifest_path)
    return manifest_path
