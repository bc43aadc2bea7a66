"""
Model file format.

    magic   4 bytes   b"GMRK"
    version 1 byte    1
    length  4 bytes   little-endian uint32, size of the JSON header
    header  UTF-8 JSON {"config": ModelConfig, "tensors": [{"name", "shape"}, ...]}
            plus "radius", the training cone radius, once the model has been trained
    blobs   little-endian float32 values of each tensor, in header order

Tensors are the model's parameters followed by its normalization buffers.
"""

import json
import logging
import os
import struct
from pathlib import Path

import numpy as np

from ..core.errors import (
    BadMagicError,
    CorruptHeaderError,
    ModelFormatError,
    TruncatedModelError,
    UnsupportedVersionError,
)
from ..core.files import atomic_write_bytes
from .unet import ModelConfig, UNetModel, build

logger = logging.getLogger(__name__)

MAGIC = b"GMRK"
FORMAT_VERSION = 1
_BLOB_DTYPE = np.dtype("<f4")


def serialize(model: UNetModel) -> bytes:
    """Encode a model into the binary file format."""
    state = model.state_dict()
    header = {
        "config": model.config.to_dict(),
        "tensors": [{"name": name, "shape": list(value.shape)} for name, value in state.items()],
    }
    if model.training_radius is not None:
        header["radius"] = float(model.training_radius)
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [MAGIC, bytes([FORMAT_VERSION]), struct.pack("<I", len(header_bytes)), header_bytes]
    parts.extend(np.ascontiguousarray(value, dtype=_BLOB_DTYPE).tobytes() for value in state.values())
    return b"".join(parts)


def deserialize(blob: bytes) -> UNetModel:
    """
    Decode a model from bytes.

    Raises:
        BadMagicError: If the magic bytes are wrong
        UnsupportedVersionError: If the version byte is not 1
        TruncatedModelError: If the data ends early
        CorruptHeaderError: If the header is not valid JSON or does not match the architecture
    """
    if len(blob) < len(MAGIC) or blob[: len(MAGIC)] != MAGIC:
        raise BadMagicError(f"bad magic: expected {MAGIC!r}, got {blob[: len(MAGIC)]!r}")
    offset = len(MAGIC)
    if len(blob) < offset + 1:
        raise TruncatedModelError("truncated: missing format version")
    version = blob[offset]
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"version mismatch: expected {FORMAT_VERSION}, got {version}")
    offset += 1
    if len(blob) < offset + 4:
        raise TruncatedModelError("truncated: missing header length")
    (header_length,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if len(blob) < offset + header_length:
        raise TruncatedModelError("truncated: header is shorter than declared")
    try:
        header = json.loads(blob[offset : offset + header_length].decode("utf-8"))
        config = ModelConfig.from_dict(header["config"])
        manifest = [(entry["name"], tuple(int(d) for d in entry["shape"])) for entry in header["tensors"]]
        radius = header.get("radius")
        if radius is not None and not float(radius) > 0:
            raise ValueError(f"radius must be positive, got {radius}")
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise CorruptHeaderError(f"corrupt header: {exc}") from exc
    offset += header_length

    state = {}
    for name, shape in manifest:
        nbytes = int(np.prod(shape, dtype=np.int64)) * _BLOB_DTYPE.itemsize
        if len(blob) < offset + nbytes:
            raise TruncatedModelError(f"truncated: tensor '{name}' needs {nbytes} bytes, {len(blob) - offset} remain")
        state[name] = np.frombuffer(blob, dtype=_BLOB_DTYPE, count=nbytes // _BLOB_DTYPE.itemsize, offset=offset).reshape(shape)
        offset += nbytes
    if offset != len(blob):
        raise ModelFormatError(f"{len(blob) - offset} unexpected trailing bytes after the last tensor")

    model = build(config)
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CorruptHeaderError(f"corrupt header: tensors do not match the architecture ({exc})") from exc
    model.training_radius = None if radius is None else float(radius)
    return model


def save(model: UNetModel, path: str | os.PathLike) -> Path:
    """Write the model atomically to ``path``."""
    path = atomic_write_bytes(path, serialize(model))
    logger.info("Saved model to %s", path)
    return path


def load(path: str | os.PathLike) -> UNetModel:
    """
    Read a model written by ``save``.

    Raises:
        FileNotFoundError: If the file does not exist
        ModelFormatError: Subclass describing why the file is unreadable
    """
    path = Path(path)
    model = deserialize(path.read_bytes())
    logger.info("Loaded model from %s", path)
    return model
