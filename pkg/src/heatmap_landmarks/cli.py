"""
Command-line interface for heatmap landmark detection.

Usage:
    heatmap-landmarks synth --out data --count 200 --size 64 --seed 7
    heatmap-landmarks train --data data/manifest.json --out runs/model.gmrk --epochs 300 --seed 7
    heatmap-landmarks infer --model runs/model.gmrk --image photo.png --out-json photo.json --overlay photo_heat.png
    heatmap-landmarks eval --model runs/model.gmrk --data data/manifest.json --out metrics.csv
    heatmap-landmarks diagnose --model runs/model.gmrk --data data/manifest.json --threshold 0.5 --separation 10

Exit codes: 0 on success, 1 on runtime failure, 2 on usage error.
"""

import argparse
import csv
import io
import json
import logging
import math
import sys
from collections.abc import Callable
from pathlib import Path

import numpy as np

from .analysis.diagnostics import diagnose_dataset
from .core.files import atomic_write_text
from .core.types import CodecConfig
from .data.augment import AugmentConfig
from .data.dataset import load_manifest, read_image, to_model_image
from .data.synthetic import synth_generate
from .data.visualization import plot_loss_curves, render_overlay
from .heatmaps.codec import decode_with_peaks, rescale_coordinate
from .models.serialization import load, save
from .models.unet import ModelConfig, UNetModel, build, predict_heatmaps
from .training.trainer import LOSS_KINDS, TrainConfig, evaluate, train

logger = logging.getLogger(__name__)

Predictor = Callable[[np.ndarray], np.ndarray]

LOSS_CSV_NAME = "losses.csv"
LOSS_PLOT_NAME = "losses.png"
METRIC_COLUMNS = ("id", "loss", "mean_pixel_error", "worst_pixel_error", "within_2px", "double_attention")
SUMMARY_ID = "mean"

_DEFAULTS = TrainConfig()
_CODEC_DEFAULTS = CodecConfig()
_MODEL_DEFAULTS = ModelConfig()


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be a positive integer, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be non-negative, got {value}")
    return value


def _open_fraction(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"must lie strictly between 0 and 1, got {value}")
    return value


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive, got {value}")
    return value


def _separation(text: str) -> float:
    value = float(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1 pixel, got {value}")
    return value


def _channel_list(text: str) -> tuple[int, ...]:
    try:
        channels = tuple(int(c) for c in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc
    if len(channels) < 2 or any(c < 1 for c in channels):
        raise argparse.ArgumentTypeError(f"need at least two positive channel widths, got {text!r}")
    return channels


def create_parser() -> argparse.ArgumentParser:
    """Create and configure the argument parser."""
    parser = argparse.ArgumentParser(
        prog="heatmap-landmarks",
        description="Train and run heatmap-based landmark detectors.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Generate a synthetic quadrilateral dataset
  heatmap-landmarks synth --out data --count 200 --size 64 --seed 7

  # Train with the default batch 8, lr 0.005, 400 epochs, 80/20 split
  heatmap-landmarks train --data data/manifest.json --out runs/model.gmrk --seed 7

  # Predict landmarks for one image and write an overlay
  heatmap-landmarks infer --model runs/model.gmrk --image img.png --out-json img.json --overlay heat.png
        """,
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug output")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="Generate a synthetic quadrilateral dataset")
    synth.add_argument("--out", type=Path, required=True, help="Output directory")
    synth.add_argument("--count", type=_positive_int, required=True, help="Number of samples")
    synth.add_argument("--size", type=_positive_int, default=_MODEL_DEFAULTS.input_size, help="Image size (default: %(default)s)")
    synth.add_argument("--seed", type=int, default=0, help="Random seed (default: %(default)s)")

    tr = sub.add_parser("train", help="Train a model on a manifest")
    tr.add_argument("--data", type=Path, required=True, help="Dataset manifest")
    tr.add_argument("--out", type=Path, required=True, help="Model file; MODEL.best and losses.csv go beside it")
    tr.add_argument("--epochs", type=_non_negative_int, default=_DEFAULTS.epochs, help="Epochs (default: %(default)s)")
    tr.add_argument("--batch", type=_positive_int, default=_DEFAULTS.batch_size, help="Batch size (default: %(default)s)")
    tr.add_argument("--lr", type=_positive_float, default=_DEFAULTS.learning_rate, help="Learning rate (default: %(default)s)")
    tr.add_argument("--split", type=_open_fraction, default=_DEFAULTS.split_ratio, help="Training fraction (default: %(default)s)")
    tr.add_argument("--seed", type=int, default=_DEFAULTS.seed, help="Random seed (default: %(default)s)")
    tr.add_argument("--size", type=_positive_int, default=_MODEL_DEFAULTS.input_size, help="Input size S (default: %(default)s)")
    tr.add_argument("--landmarks", type=_positive_int, default=None, help="Landmark count (default: from the manifest)")
    tr.add_argument(
        "--channels",
        type=_channel_list,
        default=_MODEL_DEFAULTS.encoder_channels,
        help="Encoder stage widths, comma-separated (default: 16,32,64)",
    )
    tr.add_argument("--radius", type=_separation, default=_CODEC_DEFAULTS.radius, help="Cone radius (default: %(default)s)")
    tr.add_argument("--loss", choices=LOSS_KINDS, default=_DEFAULTS.loss, help="Training objective (default: %(default)s)")
    tr.add_argument("--workers", type=_positive_int, default=_DEFAULTS.workers, help="Batch assembly threads")
    tr.add_argument("--record-timing", action="store_true", help="Write wall-clock seconds to losses.csv")
    tr.add_argument("--plot", action="store_true", help="Also write losses.png beside the model")

    inf = sub.add_parser("infer", help="Predict landmarks for one image")
    inf.add_argument("--model", type=Path, required=True, help="Model file")
    inf.add_argument("--image", type=Path, required=True, help="PNG or PPM image")
    inf.add_argument("--out-json", type=Path, required=True, help="Landmark JSON output")
    inf.add_argument("--overlay", type=Path, default=None, help="Optional heatmap overlay PNG")

    ev = sub.add_parser("eval", help="Score a model on a manifest")
    ev.add_argument("--model", type=Path, required=True, help="Model file")
    ev.add_argument("--data", type=Path, required=True, help="Dataset manifest")
    ev.add_argument("--out", type=Path, required=True, help="Metrics CSV output")
    ev.add_argument(
        "--radius",
        type=_separation,
        default=None,
        help=f"Cone radius (default: the radius the model was trained with, else {_CODEC_DEFAULTS.radius})",
    )

    diag = sub.add_parser("diagnose", help="Report double-attention heatmaps")
    diag.add_argument("--model", type=Path, required=True, help="Model file")
    diag.add_argument("--data", type=Path, required=True, help="Dataset manifest")
    diag.add_argument("--threshold", type=_open_fraction, default=0.5, help="Peak threshold in (0, 1) (default: %(default)s)")
    diag.add_argument(
        "--separation",
        type=_separation,
        default=None,
        help=f"Minimum peak distance (default: the training radius, else {_CODEC_DEFAULTS.radius})",
    )
    diag.add_argument("--out", type=Path, default=None, help="Optional JSON report")

    return parser


def configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)


def _model_radius(model: UNetModel, override: float | None) -> float:
    if override is not None:
        return override
    if model.training_radius is not None:
        return model.training_radius
    return _CODEC_DEFAULTS.radius


def _model_predictor(model: UNetModel, predictor: Predictor | None) -> Predictor:
    if predictor is not None:
        return predictor
    return lambda images: predict_heatmaps(model, images)


def cmd_synth(args: argparse.Namespace) -> int:
    args.out.mkdir(parents=True, exist_ok=True)
    samples, manifest = synth_generate(args.count, args.size, args.seed, args.out)
    print(f"Wrote {len(samples)} samples ({args.size}x{args.size}, 4 landmarks) to {manifest}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    samples = load_manifest(args.data, image_size=args.size)
    if not samples:
        raise ValueError(f"{args.data} has no entries")
    num_landmarks = args.landmarks if args.landmarks is not None else len(samples[0].landmarks)
    model_config = ModelConfig(
        input_size=args.size,
        num_landmarks=num_landmarks,
        encoder_channels=args.channels,
        seed=args.seed,
    )
    config = TrainConfig(
        batch_size=args.batch,
        learning_rate=args.lr,
        epochs=args.epochs,
        split_ratio=args.split,
        seed=args.seed,
        augment=AugmentConfig(seed=args.seed),
        codec=CodecConfig(radius=args.radius, grid_size=model_config.output_size),
        record_timing=args.record_timing,
        workers=args.workers,
        loss=args.loss,
    )
    print(
        f"Training: batch {config.batch_size}, lr {config.learning_rate}, epochs {config.epochs}, "
        f"split {config.split_ratio}, seed {config.seed}, loss {config.loss}"
    )

    model = build(model_config)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    history = train(model, samples, config, loss_log=args.out.parent / LOSS_CSV_NAME)

    save(model, args.out)
    best_path = args.out.with_name(args.out.name + ".best")
    if history.best_state is not None:
        best = build(model_config)
        best.load_state_dict(history.best_state)
        best.training_radius = model.training_radius
        save(best, best_path)
    else:
        save(model, best_path)
    if args.plot and history.records:
        plot_loss_curves(history, args.out.parent / LOSS_PLOT_NAME)

    if history.final is None:
        print("No epochs run; saved the initial model")
    else:
        print(f"Final train loss {history.final.train_loss:.6f}, val loss {history.final.val_loss:.6f}")
        print(f"Best val loss {history.best_val_loss:.6f} at epoch {history.best_epoch}")
    return 0


def cmd_infer(args: argparse.Namespace, predictor: Predictor | None = None) -> int:
    model = load(args.model)
    rgb = read_image(args.image)
    height, width = rgb.shape[:2]
    image = to_model_image(rgb, model.config.input_size)
    heatmaps = np.asarray(_model_predictor(model, predictor)(image[None]))[0]

    landmarks, peaks = decode_with_peaks(heatmaps)
    grid = landmarks.grid_size
    result = {
        "landmarks": [list(p) for p in landmarks.points],
        "grid_size": grid,
        "peak_values": [float(v) for v in peaks],
        "image_landmarks": [
            [rescale_coordinate(x, grid, width), rescale_coordinate(y, grid, height)] for x, y in landmarks.points
        ],
        "image_size": [width, height],
    }
    atomic_write_text(args.out_json, json.dumps(result, indent=2, sort_keys=True) + "\n")
    if args.overlay is not None:
        cols = math.ceil(math.sqrt(len(landmarks)))
        render_overlay(image, heatmaps, (math.ceil(len(landmarks) / cols), cols), args.overlay)
    print(f"Wrote {len(landmarks)} landmarks on a {grid}x{grid} grid to {args.out_json}")
    return 0


def format_metrics_csv(metrics) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for s in metrics.samples:
        writer.writerow([s.id, repr(s.loss), repr(s.mean_pixel_error), repr(s.worst_pixel_error), s.within_2px, s.double_attention])
    rows = metrics.samples
    writer.writerow(
        [
            SUMMARY_ID,
            repr(float(np.mean([s.loss for s in rows]))),
            repr(float(np.mean([s.mean_pixel_error for s in rows]))),
            repr(float(np.mean([s.worst_pixel_error for s in rows]))),
            repr(float(np.mean([s.within_2px for s in rows]))),
            repr(float(np.mean([s.double_attention for s in rows]))),
        ]
    )
    return buffer.getvalue()


def cmd_eval(args: argparse.Namespace, predictor: Predictor | None = None) -> int:
    model = load(args.model)
    samples = load_manifest(args.data, image_size=model.config.input_size)
    codec = CodecConfig(radius=_model_radius(model, args.radius), grid_size=model.config.output_size)
    metrics = evaluate(model, samples, codec, predictor=predictor)
    atomic_write_text(args.out, format_metrics_csv(metrics))
    print(
        f"Evaluated {len(samples)} samples: loss {metrics.mean_loss:.6f}, "
        f"pixel error {metrics.mean_pixel_error:.4f}, within 2px {metrics.within_2px_rate:.2%}, "
        f"double attention {metrics.double_attention_rate:.2%}"
    )
    return 0


def cmd_diagnose(args: argparse.Namespace, predictor: Predictor | None = None) -> int:
    model = load(args.model)
    samples = load_manifest(args.data, image_size=model.config.input_size)
    separation = _model_radius(model, args.separation)
    report = diagnose_dataset(samples, _model_predictor(model, predictor), args.threshold, separation)
    for finding in report.findings:
        peaks = " ".join(f"({x}, {y})" for x, y in finding.peaks)
        print(f"{finding.sample_id} landmark {finding.landmark_index}: {finding.peak_count} peaks at {peaks}")
    print(f"Double attention rate: {report.rate:.4f} ({len(report.findings)} of {report.heatmaps_checked} heatmaps)")
    if args.out is not None:
        atomic_write_text(args.out, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
    return 0


def main(argv: list[str] | None = None, predictor: Predictor | None = None) -> int:
    """
    Main entry point for the CLI.

    Args:
        argv: Arguments without the program name; defaults to sys.argv
        predictor: Replaces model inference in infer, eval and diagnose

    Returns:
        Process exit code
    """
    parser = create_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    configure_logging(args.verbose)

    try:
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "train":
            return cmd_train(args)
        if args.command == "infer":
            return cmd_infer(args, predictor)
        if args.command == "eval":
            return cmd_eval(args, predictor)
        return cmd_diagnose(args, predictor)
    except (ValueError, OSError, RuntimeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
