"""
Tests for the residual U-Net and its file format.

Tests include:
- Output shapes and value range across input sizes
- Deterministic initialization and config validation
- Gradient check through the whole network
- Bit-exact save/load and rejection of damaged files
"""

import json
import struct

import numpy as np
import pytest

from heatmap_landmarks.core.errors import (
    BadMagicError,
    CorruptHeaderError,
    ModelFormatError,
    ShapeError,
    TruncatedModelError,
    UnsupportedVersionError,
)
from heatmap_landmarks.core.optim import AdamState, adam_step
from heatmap_landmarks.core.tensor import Tensor
from heatmap_landmarks.core.types import CodecConfig, LandmarkSet
from heatmap_landmarks.heatmaps.codec import encode, indicator
from heatmap_landmarks.heatmaps.loss import weighted_loss
from heatmap_landmarks.models import ModelConfig, ResidualBlock, build, load, predict_heatmaps, save
from heatmap_landmarks.models.serialization import deserialize, serialize

SMALL = {"encoder_channels": (2, 4), "blocks_per_stage": 1}


def random_images(seed, batch, size):
    return np.random.default_rng(seed).uniform(size=(batch, 3, size, size)).astype(np.float32)


class TestForward:
    """Shapes and ranges of the forward pass."""

    @pytest.mark.parametrize("size", [16, 64])
    def test_output_shape(self, size):
        model = build(ModelConfig(input_size=size, num_landmarks=3, **SMALL))
        out = model(random_images(0, 2, size))
        assert out.shape == (2, 3, size // 4, size // 4)
        assert out.dtype == np.float32

    def test_default_architecture_shape(self):
        model = build(ModelConfig())
        out = model(random_images(1, 2, 64))
        assert out.shape == (2, 4, 16, 16)

    def test_large_input_shape(self):
        model = build(ModelConfig(input_size=512, num_landmarks=2, **SMALL))
        out = model(random_images(2, 1, 512))
        assert out.shape == (1, 2, 128, 128)

    def test_outputs_are_strict_probabilities(self):
        model = build(ModelConfig(input_size=32, num_landmarks=4, encoder_channels=(4, 8, 8)))
        out = model(random_images(3, 2, 32)).data
        assert np.all(out > 0) and np.all(out < 1)

    def test_untrained_output_is_near_one_half(self):
        model = build(ModelConfig(input_size=32, num_landmarks=2, **SMALL))
        out = predict_heatmaps(model, random_images(4, 2, 32))
        assert np.all(np.abs(out - 0.5) < 0.2)

    def test_wrong_input_shape(self):
        model = build(ModelConfig(input_size=16, num_landmarks=1, **SMALL))
        with pytest.raises(ShapeError):
            model(random_images(0, 1, 32))
        with pytest.raises(ShapeError):
            model(np.zeros((1, 1, 16, 16), dtype=np.float32))

    def test_predict_single_image_and_restore_mode(self):
        model = build(ModelConfig(input_size=16, num_landmarks=2, **SMALL))
        assert model.training
        heatmaps = predict_heatmaps(model, random_images(0, 1, 16)[0])
        assert heatmaps.shape == (2, 4, 4)
        assert model.training

    def test_predict_does_not_touch_running_statistics(self):
        model = build(ModelConfig(input_size=16, num_landmarks=1, **SMALL))
        before = {k: v.copy() for k, v in model.state_dict().items()}
        predict_heatmaps(model, random_images(0, 3, 16))
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(value, before[name], err_msg=name)


class TestConfig:
    """Initialization and validation."""

    def test_same_seed_gives_identical_parameters(self):
        config = ModelConfig(input_size=16, num_landmarks=2, **SMALL)
        a, b = build(config).state_dict(), build(config).state_dict()
        assert list(a) == list(b)
        for name in a:
            np.testing.assert_array_equal(a[name], b[name])

    def test_different_seed_changes_parameters(self):
        a = build(ModelConfig(input_size=16, num_landmarks=1, seed=0, **SMALL)).state_dict()
        b = build(ModelConfig(input_size=16, num_landmarks=1, seed=1, **SMALL)).state_dict()
        assert any(not np.array_equal(a[name], b[name]) for name in a)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"input_size": 30},
            {"input_size": 4},
            {"encoder_channels": (8,)},
            {"encoder_channels": (8, 0)},
            {"num_landmarks": 0},
            {"blocks_per_stage": 0},
            {"encoder_channels": (4, 8, 16), "decoder_channels": (4, 4)},
        ],
    )
    def test_invalid_configs(self, kwargs):
        with pytest.raises(ValueError):
            ModelConfig(**kwargs)

    def test_dict_round_trip(self):
        config = ModelConfig(input_size=32, num_landmarks=5, encoder_channels=(4, 8, 16), decoder_channels=(6,), seed=3)
        assert ModelConfig.from_dict(config.to_dict()) == config
        assert config.output_size == 8


class TestResidualBlock:
    """Residual blocks reduce to their shortcut when the residual branch is silent."""

    def test_zero_branch_is_identity(self):
        block = ResidualBlock(4, 4, np.random.default_rng(0))
        block.conv1.weight.data[...] = 0
        block.conv2.weight.data[...] = 0
        x = Tensor(np.random.default_rng(1).uniform(0, 1, size=(2, 4, 6, 6)).astype(np.float32))
        np.testing.assert_allclose(block(x).data, x.data, atol=1e-6)

    def test_zero_branch_leaves_projection(self):
        block = ResidualBlock(2, 4, np.random.default_rng(0), stride=2)
        block.conv1.weight.data[...] = 0
        block.conv2.weight.data[...] = 0
        x = Tensor(np.random.default_rng(2).standard_normal((2, 2, 8, 8)).astype(np.float32))
        expected = block.shortcut(x).relu().data
        np.testing.assert_allclose(block(x).data, expected, atol=1e-6)
        assert expected.shape == (2, 4, 4, 4)


class TestModelGradient:
    """Backpropagation through the full network."""

    @pytest.mark.parametrize("seed", range(5))
    def test_directional_derivative_matches_finite_difference(self, seed):
        config = ModelConfig(input_size=16, num_landmarks=1, encoder_channels=(4, 8), blocks_per_stage=1, seed=seed)
        model = build(config, dtype=np.float64)
        images = np.random.default_rng(100 + seed).uniform(size=(2, 3, 16, 16))
        codec = CodecConfig(radius=2.5, grid_size=4)
        stacks = [encode(LandmarkSet((point,), 4), codec) for point in [(0, 0), (3, 3)]]
        gt = np.stack([s.maps for s in stacks])
        ind = np.stack([indicator(s).masks for s in stacks])

        def loss_value():
            return weighted_loss(model(images), gt, ind)

        params = model.parameters()
        model.zero_grad()
        loss_value().value.backward()
        grads = [p.grad.copy() for p in params]

        rng = np.random.default_rng(7)
        directions = [rng.standard_normal(p.shape) for p in params]
        analytic = sum(float(np.sum(g * d)) for g, d in zip(grads, directions))

        h = 1e-6
        originals = [p.data.copy() for p in params]
        for p, o, d in zip(params, originals, directions):
            p.data = o + h * d
        plus = loss_value().item()
        for p, o, d in zip(params, originals, directions):
            p.data = o - h * d
        minus = loss_value().item()
        for p, o in zip(params, originals):
            p.data = o

        numeric = (plus - minus) / (2 * h)
        assert analytic == pytest.approx(numeric, rel=1e-3, abs=1e-9)

    def test_single_adam_step_lowers_the_loss(self):
        """A step of lr 1e-4 on one sample lowers the weighted loss in at least 48 of 50 trials."""
        codec = CodecConfig(radius=2.5, grid_size=4)
        improved = 0
        for trial in range(50):
            config = ModelConfig(input_size=16, num_landmarks=1, encoder_channels=(4, 8), blocks_per_stage=1, seed=trial)
            model = build(config, dtype=np.float64)
            rng = np.random.default_rng(1000 + trial)
            image = rng.uniform(size=(1, 3, 16, 16))
            point = tuple(int(v) for v in rng.integers(0, 4, size=2))
            gt = encode(LandmarkSet((point,), 4), codec)
            ind = indicator(gt)

            def loss_value():
                return weighted_loss(model(image), gt.maps[None], ind.masks[None])

            params = model.parameters()
            model.zero_grad()
            before = loss_value()
            before.value.backward()
            adam_step(params, [p.grad for p in params], AdamState.for_parameters(params), lr=1e-4)
            if loss_value().item() < before.item():
                improved += 1
        assert improved >= 48


class TestSerialization:
    """Model files."""

    @pytest.fixture
    def model(self):
        model = build(ModelConfig(input_size=16, num_landmarks=2, encoder_channels=(2, 4, 4), seed=2))
        # Move the running statistics away from their initial values.
        model(random_images(8, 3, 16))
        model.eval()
        return model

    def test_round_trip_is_bit_identical(self, model, tmp_path):
        path = save(model, tmp_path / "model.bin")
        restored = load(path)

        images = random_images(9, 2, 16)
        np.testing.assert_array_equal(
            predict_heatmaps(restored, images),
            predict_heatmaps(model, images),
        )
        assert restored.config == model.config
        assert serialize(restored) == path.read_bytes()

    def test_file_starts_with_magic_and_version(self, model):
        blob = serialize(model)
        assert blob[:4] == b"GMRK"
        assert blob[4] == 1

    def test_bad_magic(self, model):
        blob = serialize(model)
        with pytest.raises(BadMagicError):
            deserialize(b"XXXX" + blob[4:])

    def test_unsupported_version(self, model):
        blob = serialize(model)
        with pytest.raises(UnsupportedVersionError):
            deserialize(blob[:4] + bytes([2]) + blob[5:])

    @pytest.mark.parametrize("keep", [3, 6, 20, -4])
    def test_truncated(self, model, keep):
        blob = serialize(model)
        with pytest.raises((TruncatedModelError, BadMagicError)):
            deserialize(blob[:keep])

    def test_corrupt_header(self, model):
        blob = serialize(model)
        (length,) = struct.unpack_from("<I", blob, 5)
        with pytest.raises(CorruptHeaderError):
            deserialize(blob[:9] + b"#" * length + blob[9 + length :])

    def test_trailing_bytes(self, model):
        with pytest.raises(ModelFormatError):
            deserialize(serialize(model) + b"\x00\x00\x00\x00")

    def test_training_radius_round_trips(self, model):
        model.training_radius = 3.0
        restored = deserialize(serialize(model))
        assert restored.training_radius == 3.0
        assert serialize(restored) == serialize(model)

    def test_untrained_model_has_no_radius(self, model):
        blob = serialize(model)
        (length,) = struct.unpack_from("<I", blob, 5)
        assert "radius" not in json.loads(blob[9 : 9 + length])
        assert deserialize(blob).training_radius is None

    def test_non_positive_radius_is_corrupt(self, model):
        model.training_radius = -1.0
        with pytest.raises(CorruptHeaderError):
            deserialize(serialize(model))

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load(tmp_path / "absent.bin")
