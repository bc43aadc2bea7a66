"""
Residual U-Net producing one sigmoid heatmap per landmark.

Shape contract: an RGB batch (B, 3, S, S) maps to heatmaps (B, n, S/4, S/4).

Encoder: a stride-2 stem, then one residual stage per entry of
``encoder_channels``; every stage after the first opens with a stride-2 block,
so stage k (0-based) runs at S / 2^(k+1). Decoder: starting from the deepest
stage, each block upsamples 2x and concatenates the matching encoder stage until
the S/4 resolution of stage 1 is reached. Head: 1x1 convolution to n channels
and a sigmoid.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from ..core.errors import ShapeError
from ..core.tensor import Tensor
from .layers import Conv2d, DecoderBlock, Module, ResidualBlock, Stem

logger = logging.getLogger(__name__)

# Small head weights keep the untrained output close to sigmoid(0) = 0.5.
HEAD_INIT_STD = 0.01


@dataclass(frozen=True)
class ModelConfig:
    """
    Architecture hyperparameters.

    Attributes:
        input_size: Side length S of the square RGB input
        num_landmarks: Number of heatmaps n
        encoder_channels: Channel width of each residual stage (at least two stages)
        blocks_per_stage: Residual blocks per stage
        seed: Seed for the deterministic initialization
        decoder_channels: Width of each decoder block, deepest first; defaults to
            the width of the encoder stage it merges with
    """

    input_size: int = 64
    num_landmarks: int = 4
    encoder_channels: tuple[int, ...] = (16, 32, 64)
    blocks_per_stage: int = 2
    seed: int = 0
    decoder_channels: tuple[int, ...] | None = field(default=None)

    def __post_init__(self) -> None:
        object.__setattr__(self, "encoder_channels", tuple(int(c) for c in self.encoder_channels))
        if self.decoder_channels is not None:
            object.__setattr__(self, "decoder_channels", tuple(int(c) for c in self.decoder_channels))

        stages = len(self.encoder_channels)
        if stages < 2:
            raise ValueError(
                f"encoder_channels needs at least two stages to reach the S/4 output grid, got {list(self.encoder_channels)}"
            )
        if any(c < 1 for c in self.encoder_channels):
            raise ValueError(f"Channel widths must be positive, got {list(self.encoder_channels)}")
        if self.num_landmarks < 1:
            raise ValueError(f"num_landmarks must be positive, got {self.num_landmarks}")
        if self.blocks_per_stage < 1:
            raise ValueError(f"blocks_per_stage must be positive, got {self.blocks_per_stage}")
        factor = 2**stages
        if self.input_size < factor or self.input_size % factor != 0:
            raise ValueError(
                f"input_size {self.input_size} must be a positive multiple of {factor} for {stages} stages"
            )
        if self.decoder_channels is not None:
            if len(self.decoder_channels) != stages - 2:
                raise ValueError(
                    f"decoder_channels needs {stages - 2} entries for {stages} stages, got {len(self.decoder_channels)}"
                )
            if any(c < 1 for c in self.decoder_channels):
                raise ValueError(f"Channel widths must be positive, got {list(self.decoder_channels)}")

    @property
    def output_size(self) -> int:
        return self.input_size // 4

    @property
    def resolved_decoder_channels(self) -> tuple[int, ...]:
        if self.decoder_channels is not None:
            return self.decoder_channels
        stages = len(self.encoder_channels)
        return tuple(self.encoder_channels[stages - 2 - k] for k in range(stages - 2))

    def to_dict(self) -> dict:
        data = asdict(self)
        data["encoder_channels"] = list(self.encoder_channels)
        data["decoder_channels"] = None if self.decoder_channels is None else list(self.decoder_channels)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        decoder = data.get("decoder_channels")
        return cls(
            input_size=int(data["input_size"]),
            num_landmarks=int(data["num_landmarks"]),
            encoder_channels=tuple(data["encoder_channels"]),
            blocks_per_stage=int(data["blocks_per_stage"]),
            seed=int(data["seed"]),
            decoder_channels=None if decoder is None else tuple(decoder),
        )


class UNetModel(Module):
    """Residual encoder, skip-connected decoder and sigmoid heatmap head."""

    def __init__(self, config: ModelConfig, dtype=np.float32):
        super().__init__()
        self.config = config
        self.dtype = np.dtype(dtype)
        # cone radius the weights were trained against; stored in the model file
        self.training_radius: float | None = None
        rng = np.random.default_rng(config.seed)
        channels = config.encoder_channels

        self.stem = self.add_module("stem", Stem(channels[0], rng, dtype=dtype))
        self.stages: list[list[ResidualBlock]] = []
        in_channels = channels[0]
        for s, width in enumerate(channels):
            blocks = []
            for b in range(config.blocks_per_stage):
                stride = 2 if (s > 0 and b == 0) else 1
                block = ResidualBlock(in_channels, width, rng, stride=stride, dtype=dtype)
                blocks.append(self.add_module(f"stage{s}.block{b}", block))
                in_channels = width
            self.stages.append(blocks)

        self.decoder: list[DecoderBlock] = []
        for k, width in enumerate(config.resolved_decoder_channels):
            skip_channels = channels[len(channels) - 2 - k]
            block = DecoderBlock(in_channels, skip_channels, width, rng, dtype=dtype)
            self.decoder.append(self.add_module(f"decoder{k}", block))
            in_channels = width

        self.head = self.add_module(
            "head", Conv2d(in_channels, config.num_landmarks, 1, rng, bias=True, dtype=dtype, init_std=HEAD_INIT_STD)
        )

    def forward(self, batch: Tensor | np.ndarray) -> Tensor:
        """
        Predict heatmaps for a batch of images.

        Args:
            batch: Images of shape (B, 3, S, S) with values in [0, 1]

        Returns:
            Tensor of shape (B, n, S/4, S/4) with entries in (0, 1)

        Raises:
            ShapeError: If the batch shape does not match the configuration
        """
        if not isinstance(batch, Tensor):
            batch = Tensor(np.asarray(batch, dtype=self.dtype))
        size = self.config.input_size
        if batch.ndim != 4 or batch.shape[1:] != (3, size, size):
            raise ShapeError("Model input has the wrong shape", expected=f"(B, 3, {size}, {size})", got=batch.shape)
        if batch.dtype != self.dtype:
            batch = batch.astype(self.dtype)

        x = self.stem(batch)
        skips = []
        for blocks in self.stages:
            for block in blocks:
                x = block(x)
            skips.append(x)
        for k, block in enumerate(self.decoder):
            x = block(x, skips[len(skips) - 2 - k])
        return self.head(x).sigmoid()


def build(config: ModelConfig, dtype=np.float32) -> UNetModel:
    """
    Build a freshly initialized model.

    Initialization is deterministic: the same config (including seed) yields
    bit-identical parameters.
    """
    model = UNetModel(config, dtype=dtype)
    logger.debug(
        "Built U-Net with %d parameter tensors (%d values)",
        len(model.parameters()),
        sum(p.size for p in model.parameters()),
    )
    return model


def forward(model: UNetModel, batch: Tensor | np.ndarray) -> Tensor:
    """Functional alias for ``model(batch)``."""
    return model(batch)


def predict_heatmaps(model: UNetModel, images: np.ndarray) -> np.ndarray:
    """
    Run inference in evaluation mode without recording gradients.

    Args:
        model: Trained or fresh model
        images: Array of shape (B, 3, S, S) or a single (3, S, S) image

    Returns:
        Heatmaps of shape (B, n, S/4, S/4), or (n, S/4, S/4) for a single image
    """
    images = np.asarray(images)
    single = images.ndim == 3
    if single:
        images = images[None]
    was_training = model.training
    model.eval()
    try:
        out = model(Tensor(images.astype(model.dtype))).data
    finally:
        model.train(was_training)
    return out[0] if single else out
