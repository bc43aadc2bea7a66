"""Training loop, evaluation and loss history."""

from .history import EpochRecord, LossLog, TrainHistory, format_loss_csv, read_loss_csv
from .trainer import (
    LOSS_KINDS,
    EvaluationMetrics,
    SampleMetrics,
    TrainConfig,
    batch_objective,
    check_dataset,
    encode_targets,
    evaluate,
    split,
    train,
    validation_loss,
)

__all__ = [
    "TrainConfig",
    "split",
    "train",
    "evaluate",
    "validation_loss",
    "batch_objective",
    "LOSS_KINDS",
    "check_dataset",
    "encode_targets",
    "EvaluationMetrics",
    "SampleMetrics",
    "EpochRecord",
    "TrainHistory",
    "LossLog",
    "format_loss_csv",
    "read_loss_csv",
]
