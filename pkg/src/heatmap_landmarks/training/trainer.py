"""
Training protocol: split, shuffle, augment on the fly, optimize with Adam.

Every random choice comes from a generator seeded by (seed, epoch, sample),
so a run is a pure function of its dataset, model initialization and config.
"""

import logging
import math
import os
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..core.errors import LandmarkCountError, NonFiniteLossError, ShapeError
from ..core.optim import AdamState, adam_step
from ..core.tensor import Tensor
from ..core.types import CodecConfig, LandmarkSet
from ..data.augment import AugmentConfig, sample_params, warp_image, warp_landmarks
from ..data.dataset import Sample
from ..heatmaps.codec import decode, detect_double_attention, encode, indicator, rescale
from ..heatmaps.loss import plain_l1_loss, weighted_loss
from ..models.unet import UNetModel, predict_heatmaps
from .history import EpochRecord, LossLog, TrainHistory

logger = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]

WITHIN_PIXELS = 2.0
DOUBLE_ATTENTION_THRESHOLD = 0.5
LOSS_KINDS = ("weighted", "plain")


@dataclass(frozen=True)
class TrainConfig:
    """
    Training hyperparameters.

    Attributes:
        batch_size: Samples per Adam step; the last partial batch is kept
        learning_rate: Adam step size
        epochs: Number of passes over the training set
        split_ratio: Fraction of the dataset used for training, in (0, 1)
        seed: Seed of the split, shuffle and augmentation streams
        augment: Augmentation ranges
        codec: Cone radius; the grid is taken from the model's output size
        record_timing: Store wall-clock seconds per epoch (0.0 otherwise)
        workers: Threads used to assemble batches
        loss: Training objective, "weighted" (disk/background halves) or "plain" (mean L1)
    """

    batch_size: int = 8
    learning_rate: float = 0.005
    epochs: int = 400
    split_ratio: float = 0.8
    seed: int = 0
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    record_timing: bool = True
    workers: int = 1
    loss: str = "weighted"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be at least 1, got {self.batch_size}")
        if not 0 < self.split_ratio < 1:
            raise ValueError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be non-negative, got {self.epochs}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {LOSS_KINDS}, got {self.loss!r}")


@dataclass(frozen=True)
class SampleMetrics:
    """
    Evaluation of one sample.

    Attributes:
        id: Sample identifier
        loss: Weighted loss of the prediction
        mean_pixel_error: Mean Euclidean distance between decoded and true landmarks on the heatmap grid
        worst_pixel_error: Largest of those distances
        within_2px: Landmarks decoded within 2 grid pixels
        double_attention: Heatmaps with two or more separated strong peaks
    """

    id: str
    loss: float
    mean_pixel_error: float
    worst_pixel_error: float
    within_2px: int
    double_attention: int


@dataclass(frozen=True)
class EvaluationMetrics:
    """
    Dataset-level evaluation.

    Attributes:
        mean_loss: Mean per-sample weighted loss
        mean_pixel_error: Mean over all landmarks of the decoded pixel error
        within_2px_rate: Fraction of landmarks within 2 grid pixels
        double_attention_rate: Fraction of heatmaps showing double attention
        mean_prediction: Mean predicted heatmap value; near 0 when the model has collapsed to background
        samples: Per-sample metrics in dataset order
    """

    mean_loss: float
    mean_pixel_error: float
    within_2px_rate: float
    double_attention_rate: float
    mean_prediction: float
    samples: list[SampleMetrics]


def split(dataset: Sequence[Sample], ratio: float, seed: int) -> tuple[list[Sample], list[Sample]]:
    """
    Shuffle deterministically and cut into training and validation sets.

    The training set gets ceil(ratio * N) samples, capped so the validation set
    keeps at least one.

    Raises:
        ValueError: If the dataset has fewer than two samples or ratio is outside (0, 1)
    """
    n = len(dataset)
    if n < 2:
        raise ValueError(f"Need at least 2 samples to split, got {n}")
    if not 0 < ratio < 1:
        raise ValueError(f"Split ratio must lie in (0, 1), got {ratio}")
    # rounding first keeps 0.8 * 10 from landing on 8.000000000000002
    n_train = min(max(math.ceil(round(ratio * n, 9)), 1), n - 1)
    order = np.random.default_rng(seed).permutation(n)
    return [dataset[i] for i in order[:n_train]], [dataset[i] for i in order[n_train:]]


def check_dataset(dataset: Sequence[Sample], image_size: int, num_landmarks: int) -> None:
    """
    Verify every sample fits the model.

    Raises:
        ShapeError: If an image is not (3, S, S)
        LandmarkCountError: If a sample has the wrong number of landmarks
    """
    for sample in dataset:
        if sample.image.shape != (3, image_size, image_size):
            raise ShapeError(
                f"Sample '{sample.id}' image does not match the model", expected=(3, image_size, image_size), got=sample.image.shape
            )
        if len(sample.landmarks) != num_landmarks:
            raise LandmarkCountError(
                f"has {len(sample.landmarks)} landmarks but the model predicts {num_landmarks}", sample.id
            )


def encode_targets(landmarks: LandmarkSet, codec: CodecConfig) -> tuple[np.ndarray, np.ndarray]:
    """Rescale image-space landmarks to the codec grid and encode heatmaps and indicators."""
    gt = encode(rescale(landmarks, landmarks.grid_size, codec.grid_size), codec)
    return gt.maps, indicator(gt).masks


def _prepare(sample: Sample, codec: CodecConfig, augment: AugmentConfig | None, rng_key: Sequence[int] | None):
    image, landmarks = sample.image, sample.landmarks
    if augment is not None:
        params = sample_params(augment, np.random.default_rng(list(rng_key)), sample.image_size)
        image = warp_image(image, params)
        landmarks, _ = warp_landmarks(landmarks, params)
    gt, ind = encode_targets(landmarks, codec)
    return image, gt, ind


def _assemble(samples, codec, augment, keys, pool):
    jobs = [(s, codec, augment, k) for s, k in zip(samples, keys)]
    if pool is None:
        prepared = [_prepare(*job) for job in jobs]
    else:
        prepared = list(pool.map(lambda job: _prepare(*job), jobs))
    images, gts, inds = zip(*prepared)
    return np.stack(images), np.stack(gts), np.stack(inds)


def _batches(count: int, batch_size: int):
    for start in range(0, count, batch_size):
        yield start, min(start + batch_size, count)


def batch_objective(kind: str, preds, gts: np.ndarray, inds: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """
    Loss of a batch (B, n, G, G) under the chosen objective.

    Returns:
        The scalar loss tensor to backpropagate and the per-sample losses
    """
    if kind == "plain":
        value = plain_l1_loss(preds, gts)
        pred_values = preds.data if isinstance(preds, Tensor) else np.asarray(preds)
        return value, np.abs(pred_values - gts).mean(axis=(1, 2, 3))
    loss = weighted_loss(preds, gts, inds)
    return loss.value, loss.per_landmark.mean(axis=1)


def validation_loss(
    model: UNetModel, dataset: Sequence[Sample], codec: CodecConfig, batch_size: int = 8, loss: str = "weighted"
) -> float:
    """Mean per-sample loss in evaluation mode without augmentation."""
    losses = []
    for start, stop in _batches(len(dataset), batch_size):
        images, gts, inds = _assemble(dataset[start:stop], codec, None, [None] * (stop - start), None)
        preds = predict_heatmaps(model, images)
        losses.extend(batch_objective(loss, preds, gts, inds)[1].tolist())
    return float(np.mean(losses))


def train(
    model: UNetModel,
    dataset: Sequence[Sample],
    config: TrainConfig,
    validation: Sequence[Sample] | None = None,
    loss_log: LossLog | str | os.PathLike | None = None,
) -> TrainHistory:
    """
    Train ``model`` in place.

    Each epoch shuffles the training set, assembles batches (fresh augmentation
    per sample, landmarks rescaled to the S/4 grid, cones and indicators
    encoded), runs one forward/backward pass per batch and applies one Adam
    step. The validation loss is then measured without augmentation.

    Args:
        model: Model to optimize
        dataset: Samples; split by ``config.split_ratio`` unless ``validation`` is given
        config: Hyperparameters
        validation: Explicit validation set; the whole dataset is then used for training
        loss_log: LossLog or CSV path updated after every epoch

    Returns:
        TrainHistory with one record per epoch and the best-validation snapshot

    The model is left in evaluation mode.

    Raises:
        NonFiniteLossError: If a batch loss is NaN or infinite
    """
    size = model.config.input_size
    n = model.config.num_landmarks
    if validation is None:
        train_set, val_set = split(dataset, config.split_ratio, config.seed)
    else:
        train_set, val_set = list(dataset), list(validation)
    if not train_set or not val_set:
        raise ValueError("Training and validation sets must both be non-empty")
    check_dataset(train_set, size, n)
    check_dataset(val_set, size, n)

    codec = config.codec if config.codec.grid_size == model.config.output_size else config.codec.with_grid(model.config.output_size)
    model.training_radius = codec.radius
    if isinstance(loss_log, (str, os.PathLike)):
        loss_log = LossLog(loss_log)
    history = TrainHistory()
    if config.epochs == 0:
        return history

    params = model.parameters()
    state = AdamState.for_parameters(params)
    logger.info(
        "Training on %d samples, validating on %d, %d epochs of batch %d at lr %g with the %s loss",
        len(train_set), len(val_set), config.epochs, config.batch_size, config.learning_rate, config.loss,
    )
    pool = ThreadPoolExecutor(max_workers=config.workers) if config.workers > 1 else None
    try:
        for epoch in range(1, config.epochs + 1):
            started = time.perf_counter()
            model.train()
            order = np.random.default_rng([config.seed, epoch]).permutation(len(train_set))
            sample_losses = []
            for batch_index, (start, stop) in enumerate(_batches(len(order), config.batch_size)):
                indices = order[start:stop]
                keys = [(config.seed, config.augment.seed, epoch, int(i)) for i in indices]
                images, gts, inds = _assemble([train_set[i] for i in indices], codec, config.augment, keys, pool)

                model.zero_grad()
                preds = model(Tensor(images.astype(model.dtype)))
                loss, per_sample = batch_objective(config.loss, preds, gts, inds)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteLossError(epoch, batch_index, value)
                loss.backward()
                adam_step(params, [p.grad for p in params], state, config.learning_rate)
                sample_losses.extend(per_sample.tolist())

            val_loss = validation_loss(model, val_set, codec, config.batch_size, config.loss)
            seconds = time.perf_counter() - started if config.record_timing else 0.0
            record = EpochRecord(epoch, float(np.mean(sample_losses)), val_loss, seconds)
            if history.append(record, model.state_dict()):
                logger.debug("New best validation loss %.6f at epoch %d", val_loss, epoch)
            if loss_log is not None:
                loss_log.append(record)
            logger.info("Epoch %d/%d: train %.6f, val %.6f", epoch, config.epochs, record.train_loss, val_loss)
    finally:
        if pool is not None:
            pool.shutdown()
    model.eval()
    return history


def evaluate(
    model: UNetModel | None,
    dataset: Sequence[Sample],
    codec: CodecConfig,
    predictor: Predictor | None = None,
    threshold: float = DOUBLE_ATTENTION_THRESHOLD,
    min_separation: float | None = None,
    batch_size: int = 8,
) -> EvaluationMetrics:
    """
    Score predictions against ground truth.

    Args:
        model: Model used when no predictor is given
        dataset: Samples to score, in image space
        codec: Cone radius and heatmap grid
        predictor: Maps an image batch (B, 3, S, S) to heatmaps (B, n, G, G);
            replaces the model, e.g. to inject known stacks
        threshold: Peak threshold of the double-attention detector
        min_separation: Peak separation; defaults to the cone radius
        batch_size: Images per predictor call

    Raises:
        ValueError: If the dataset is empty or neither model nor predictor is given
    """
    if not dataset:
        raise ValueError("Cannot evaluate an empty dataset")
    if predictor is None:
        if model is None:
            raise ValueError("evaluate needs a model or a predictor")

        def predictor(images: np.ndarray) -> np.ndarray:
            return predict_heatmaps(model, images)

    separation = codec.radius if min_separation is None else min_separation
    results = []
    prediction_sum = 0.0
    prediction_count = 0
    for start, stop in _batches(len(dataset), batch_size):
        batch = dataset[start:stop]
        images, gts, inds = _assemble(batch, codec, None, [None] * len(batch), None)
        preds = np.asarray(predictor(images))
        if preds.shape != gts.shape:
            raise ShapeError("Predicted heatmaps do not match the codec grid", expected=gts.shape, got=preds.shape)
        prediction_sum += float(preds.sum())
        prediction_count += preds.size
        for sample, pred, gt, ind in zip(batch, preds, gts, inds):
            loss = weighted_loss(pred, gt, ind).item()
            truth = rescale(sample.landmarks, sample.landmarks.grid_size, codec.grid_size).as_array()
            errors = np.linalg.norm(decode(pred).as_array() - truth, axis=1)
            doubles = sum(len(detect_double_attention(m, threshold, separation)) >= 2 for m in pred)
            results.append(
                SampleMetrics(
                    id=sample.id,
                    loss=loss,
                    mean_pixel_error=float(errors.mean()),
                    worst_pixel_error=float(errors.max()),
                    within_2px=int(np.sum(errors <= WITHIN_PIXELS)),
                    double_attention=int(doubles),
                )
            )

    landmarks_total = sum(len(s.landmarks) for s in dataset)
    return EvaluationMetrics(
        mean_loss=float(np.mean([r.loss for r in results])),
        mean_pixel_error=float(sum(r.mean_pixel_error * len(s.landmarks) for r, s in zip(results, dataset)) / landmarks_total),
        within_2px_rate=sum(r.within_2px for r in results) / landmarks_total,
        double_attention_rate=sum(r.double_attention for r in results) / landmarks_total,
        mean_prediction=prediction_sum / prediction_count,
        samples=results,
    )
