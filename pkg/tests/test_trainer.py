"""
Tests for the training protocol and evaluation.

Tests include:
- Deterministic train/validation splits
- Training runs: zero epochs, overfitting one sample, reproducibility
- Non-finite loss detection
- Evaluation against injected predictions
- Loss CSV logging
"""

import numpy as np
import pytest

from heatmap_landmarks.core.errors import LandmarkCountError, NonFiniteLossError, ShapeError
from heatmap_landmarks.core.types import CodecConfig, LandmarkSet
from heatmap_landmarks.data import AugmentConfig, Sample, synth_generate
from heatmap_landmarks.models import ModelConfig, build
from heatmap_landmarks.training import (
    EpochRecord,
    LossLog,
    TrainConfig,
    batch_objective,
    encode_targets,
    evaluate,
    read_loss_csv,
    split,
    train,
    validation_loss,
)

SIZE = 32
CODEC = CodecConfig(radius=3.0, grid_size=SIZE // 4)


def small_model(seed=0):
    return build(ModelConfig(input_size=SIZE, num_landmarks=4, encoder_channels=(4, 8), blocks_per_stage=1, seed=seed))


def small_config(**overrides):
    options = {"batch_size": 4, "epochs": 2, "codec": CODEC, "record_timing": False}
    options.update(overrides)
    return TrainConfig(**options)


@pytest.fixture(scope="module")
def dataset():
    samples, _ = synth_generate(10, SIZE, seed=3)
    return samples


class TestSplit:
    """Train/validation splitting."""

    @pytest.mark.parametrize("n,ratio,expected", [(10, 0.8, (8, 2)), (5, 0.8, (4, 1)), (3, 0.5, (2, 1)), (2, 0.9, (1, 1)), (4, 0.1, (1, 3))])
    def test_sizes(self, n, ratio, expected):
        train_set, val_set = split(list(range(n)), ratio, seed=0)
        assert (len(train_set), len(val_set)) == expected

    def test_deterministic_and_disjoint(self):
        items = list(range(20))
        first = split(items, 0.8, seed=4)
        assert split(items, 0.8, seed=4) == first
        train_set, val_set = first
        assert sorted(train_set + val_set) == items

    def test_seed_changes_the_split(self):
        items = list(range(20))
        assert split(items, 0.5, seed=1) != split(items, 0.5, seed=2)

    def test_needs_two_samples(self):
        with pytest.raises(ValueError):
            split([0], 0.8, seed=0)

    @pytest.mark.parametrize("ratio", [0.0, 1.0, 1.2])
    def test_ratio_must_be_open_unit_interval(self, ratio):
        with pytest.raises(ValueError):
            split(list(range(5)), ratio, seed=0)


class TestTrainConfig:
    """Hyperparameter validation."""

    @pytest.mark.parametrize(
        "kwargs",
        [{"batch_size": 0}, {"split_ratio": 1.0}, {"epochs": -1}, {"learning_rate": 0.0}, {"workers": 0}, {"loss": "mse"}],
    )
    def test_invalid_values(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_defaults(self):
        config = TrainConfig()
        assert (config.batch_size, config.learning_rate, config.epochs, config.split_ratio) == (8, 0.005, 400, 0.8)
        assert config.loss == "weighted"


class TestTrain:
    """Training runs."""

    def test_zero_epochs_leaves_model_untouched(self, dataset):
        model = small_model()
        before = {k: v.copy() for k, v in model.state_dict().items()}
        history = train(model, dataset, small_config(epochs=0))
        assert len(history) == 0
        assert history.best_epoch is None
        for name, value in model.state_dict().items():
            np.testing.assert_array_equal(value, before[name])

    def test_overfits_a_single_sample(self, dataset):
        """Training loss drops when fitting one sample without augmentation."""
        model = small_model()
        config = small_config(epochs=50, batch_size=1, augment=AugmentConfig.disabled())
        history = train(model, dataset[:1], config, validation=dataset[:1])
        assert len(history) == 50
        assert history.records[-1].train_loss < history.records[0].train_loss
        assert history.best_val_loss <= history.records[0].val_loss

    def test_runs_are_reproducible(self, dataset):
        histories, states = [], []
        for _ in range(2):
            model = small_model()
            histories.append(train(model, dataset, small_config()))
            states.append(model.state_dict())
        assert histories[0].records == histories[1].records
        for name in states[0]:
            np.testing.assert_array_equal(states[0][name], states[1][name])

    def test_records_and_best_epoch(self, dataset):
        history = train(small_model(), dataset, small_config(epochs=3))
        assert [r.epoch for r in history.records] == [1, 2, 3]
        assert all(r.seconds == 0.0 for r in history.records)
        assert all(0.0 <= r.train_loss <= 1.0 and 0.0 <= r.val_loss <= 1.0 for r in history.records)
        assert history.best_val_loss == min(history.val_losses)
        assert history.best_state is not None

    def test_model_is_left_in_eval_mode(self, dataset):
        model = small_model()
        train(model, dataset, small_config(epochs=1))
        assert not model.training

    def test_worker_threads_do_not_change_results(self, dataset):
        serial = train(small_model(), dataset, small_config(epochs=1))
        threaded = train(small_model(), dataset, small_config(epochs=1, workers=3))
        assert serial.records == threaded.records

    def test_loss_log_gets_one_row_per_epoch(self, dataset, tmp_path):
        path = tmp_path / "losses.csv"
        history = train(small_model(), dataset, small_config(epochs=2), loss_log=path)
        lines = path.read_text().splitlines()
        assert lines[0] == "epoch,train_loss,val_loss,seconds"
        assert len(lines) == 3
        assert read_loss_csv(path).records == history.records

    def test_non_finite_loss_is_reported(self, dataset):
        model = small_model()
        model.head.weight.data[...] = np.nan
        with pytest.raises(NonFiniteLossError) as exc_info:
            train(model, dataset, small_config(epochs=1))
        assert "epoch 1" in str(exc_info.value)

    def test_wrong_landmark_count_names_sample(self, dataset):
        model = build(ModelConfig(input_size=SIZE, num_landmarks=3, encoder_channels=(4, 8), blocks_per_stage=1))
        with pytest.raises(LandmarkCountError) as exc_info:
            train(model, dataset, small_config(epochs=1))
        assert exc_info.value.entry_id.startswith("synth_")

    def test_wrong_image_size(self, dataset):
        model = build(ModelConfig(input_size=16, num_landmarks=4, encoder_channels=(4, 8), blocks_per_stage=1))
        with pytest.raises(ShapeError):
            train(model, dataset, small_config(epochs=1))

    def test_plain_objective_drives_training_and_validation(self, dataset):
        model = small_model()
        plain = train(model, dataset, small_config(loss="plain"))
        weighted = train(small_model(), dataset, small_config())
        assert plain.records != weighted.records
        _, val_set = split(dataset, 0.8, seed=0)
        assert validation_loss(model, val_set, CODEC, batch_size=4, loss="plain") == pytest.approx(plain.records[-1].val_loss, rel=1e-6)

    def test_training_records_the_cone_radius(self, dataset):
        model = small_model()
        assert model.training_radius is None
        train(model, dataset, small_config(epochs=0))
        assert model.training_radius == CODEC.radius

    def test_validation_loss_is_repeatable(self, dataset):
        model = small_model()
        first = validation_loss(model, dataset, CODEC)
        assert validation_loss(model, dataset, CODEC) == first
        assert 0.0 <= first <= 1.0


class TestBatchObjective:
    """Per-sample values of the two training objectives."""

    def targets(self, dataset):
        pairs = [encode_targets(s.landmarks, CODEC) for s in dataset[:3]]
        return np.stack([g for g, _ in pairs]), np.stack([i for _, i in pairs])

    def test_plain_objective(self, dataset):
        gts, inds = self.targets(dataset)
        preds = np.random.default_rng(0).uniform(size=gts.shape)
        value, per_sample = batch_objective("plain", preds, gts, inds)
        np.testing.assert_allclose(per_sample, np.abs(preds - gts).mean(axis=(1, 2, 3)))
        assert value.item() == pytest.approx(per_sample.mean())

    def test_weighted_objective(self, dataset):
        gts, inds = self.targets(dataset)
        preds = np.random.default_rng(1).uniform(size=gts.shape)
        value, per_sample = batch_objective("weighted", preds, gts, inds)
        assert per_sample.shape == (3,)
        assert value.item() == pytest.approx(per_sample.mean())

    def test_zero_prediction_is_cheap_under_plain_loss(self, dataset):
        gts, inds = self.targets(dataset)
        zeros = np.zeros_like(gts)
        _, plain = batch_objective("plain", zeros, gts, inds)
        _, weighted = batch_objective("weighted", zeros, gts, inds)
        assert np.all(weighted > plain)


def truth_predictor(dataset, codec):
    """Predictor returning the ground-truth heatmaps, matched by image."""
    targets = [(s.image, encode_targets(s.landmarks, codec)[0]) for s in dataset]

    def predict(images):
        out = []
        for image in images:
            out.append(next(maps for stored, maps in targets if np.array_equal(stored, image)))
        return np.stack(out)

    return predict


class TestEvaluate:
    """Metrics against known predictions."""

    def test_ground_truth_scores_perfectly(self, dataset):
        metrics = evaluate(None, dataset, CODEC, predictor=truth_predictor(dataset, CODEC), batch_size=3)
        assert metrics.mean_loss == 0.0
        assert metrics.mean_pixel_error == 0.0
        assert metrics.within_2px_rate == 1.0
        assert metrics.double_attention_rate == 0.0
        assert [m.id for m in metrics.samples] == [s.id for s in dataset]
        expected = np.mean([encode_targets(s.landmarks, CODEC)[0].mean() for s in dataset])
        assert metrics.mean_prediction == pytest.approx(expected)

    def test_untrained_model_scores_like_a_constant(self, dataset):
        def constant(images):
            return np.full((len(images), 4, CODEC.grid_size, CODEC.grid_size), 0.5)

        baseline_metrics = evaluate(None, dataset, CODEC, predictor=constant)
        assert baseline_metrics.mean_prediction == pytest.approx(0.5)
        baseline = baseline_metrics.mean_loss
        untrained = evaluate(small_model(), dataset, CODEC).mean_loss
        assert abs(untrained - baseline) < 0.2

    def test_single_sample_metrics(self):
        image = np.zeros((3, SIZE, SIZE), dtype=np.float32)
        sample = Sample(image, LandmarkSet(((0, 0), (31, 31)), SIZE), "one")

        def shifted(images):
            maps = np.zeros((1, 2, 8, 8))
            maps[0, 0, 0, 3] = 1.0
            maps[0, 1, 7, 7] = 1.0
            return maps

        metrics = evaluate(None, [sample], CODEC, predictor=shifted)
        only = metrics.samples[0]
        assert only.mean_pixel_error == pytest.approx(1.5)
        assert only.worst_pixel_error == pytest.approx(3.0)
        assert only.within_2px == 1
        assert metrics.within_2px_rate == pytest.approx(0.5)

    def test_empty_dataset(self):
        with pytest.raises(ValueError):
            evaluate(small_model(), [], CODEC)

    def test_predictor_shape_is_checked(self, dataset):
        with pytest.raises(ShapeError):
            evaluate(None, dataset[:2], CODEC, predictor=lambda images: np.zeros((len(images), 4, 4, 4)))


class TestLossLog:
    """The CSV loss log."""

    def test_header_is_written_immediately(self, tmp_path):
        log = LossLog(tmp_path / "losses.csv")
        assert log.path.read_text() == "epoch,train_loss,val_loss,seconds\n"

    def test_round_trip(self, tmp_path):
        log = LossLog(tmp_path / "losses.csv")
        log.append(EpochRecord(1, 0.4, 0.5))
        log.append(EpochRecord(2, 0.3, 0.45, 1.25))
        history = read_loss_csv(log.path)
        assert history.records == [EpochRecord(1, 0.4, 0.5, 0.0), EpochRecord(2, 0.3, 0.45, 1.25)]
        assert history.best_epoch == 2

    def test_bad_header(self, tmp_path):
        path = tmp_path / "other.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            read_loss_csv(path)
