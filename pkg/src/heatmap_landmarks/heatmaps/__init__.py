"""Heatmap encoding, decoding and losses."""

from .codec import (
    decode,
    decode_with_peaks,
    detect_double_attention,
    encode,
    indicator,
    rescale,
    rescale_coordinate,
)
from .loss import LossValue, plain_l1_loss, weighted_loss

__all__ = [
    "encode",
    "indicator",
    "decode",
    "decode_with_peaks",
    "rescale",
    "rescale_coordinate",
    "detect_double_attention",
    "LossValue",
    "weighted_loss",
    "plain_l1_loss",
]
