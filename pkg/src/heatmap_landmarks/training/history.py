"""Per-epoch loss records and the CSV loss log."""

import csv
import io
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core.files import atomic_write_text

logger = logging.getLogger(__name__)

LOSS_COLUMNS = ("epoch", "train_loss", "val_loss", "seconds")


@dataclass(frozen=True)
class EpochRecord:
    """
    Losses of one epoch.

    Attributes:
        epoch: 1-based epoch index
        train_loss: Mean weighted loss over the epoch's training samples
        val_loss: Mean weighted loss over the validation set, without augmentation
        seconds: Wall-clock duration, 0.0 when timing is not recorded
    """

    epoch: int
    train_loss: float
    val_loss: float
    seconds: float = 0.0


@dataclass
class TrainHistory:
    """
    Everything a training run reports.

    Attributes:
        records: One EpochRecord per completed epoch
        best_epoch: Epoch with the lowest validation loss (first on ties), None before any epoch
        best_val_loss: That validation loss
        best_state: Copy of the model state at the best epoch
    """

    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int | None = None
    best_val_loss: float = float("inf")
    best_state: dict[str, np.ndarray] | None = None

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: EpochRecord, state: dict[str, np.ndarray] | None = None) -> bool:
        """Add a record; returns True if it is the new best validation epoch."""
        self.records.append(record)
        if record.val_loss < self.best_val_loss:
            self.best_epoch = record.epoch
            self.best_val_loss = record.val_loss
            self.best_state = None if state is None else {k: v.copy() for k, v in state.items()}
            return True
        return False

    @property
    def train_losses(self) -> list[float]:
        return [r.train_loss for r in self.records]

    @property
    def val_losses(self) -> list[float]:
        return [r.val_loss for r in self.records]

    @property
    def final(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None


def format_loss_csv(records: list[EpochRecord]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(LOSS_COLUMNS)
    for r in records:
        writer.writerow([r.epoch, repr(float(r.train_loss)), repr(float(r.val_loss)), repr(float(r.seconds))])
    return buffer.getvalue()


class LossLog:
    """
    Loss CSV kept current after every epoch.

    The whole file is rewritten atomically on each append, so a reader sees
    either the previous or the new complete log.
    """

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self.records: list[EpochRecord] = []
        atomic_write_text(self.path, format_loss_csv(self.records))

    def append(self, record: EpochRecord) -> None:
        self.records.append(record)
        atomic_write_text(self.path, format_loss_csv(self.records))


def read_loss_csv(path: str | os.PathLike) -> TrainHistory:
    """
    Read a loss CSV back into a TrainHistory (records and best epoch only).

    Raises:
        ValueError: If the header does not match the loss log columns
    """
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if tuple(reader.fieldnames or ()) != LOSS_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(LOSS_COLUMNS)}, got {reader.fieldnames}")
        history = TrainHistory()
        for row in reader:
            history.append(
                EpochRecord(
                    epoch=int(row["epoch"]),
                    train_loss=float(row["train_loss"]),
                    val_loss=float(row["val_loss"]),
                    seconds=float(row["seconds"]),
                )
            )
    return history
