"""
Desk-scale acceptance run.

Generates a synthetic quadrilateral dataset, trains the default U-Net on it,
evaluates the result, repeats the run with the plain L1 loss for comparison
and overfits a single sample. Run this script to produce
desk_results.json and desk_run/losses.csv; visualize_results.py plots them.

Set DESK_EPOCHS to shorten the run (default 300).
"""

import json
import os
import time
from pathlib import Path

from heatmap_landmarks.core.types import CodecConfig
from heatmap_landmarks.data import AugmentConfig, synth_generate
from heatmap_landmarks.models import ModelConfig, build, save
from heatmap_landmarks.training import TrainConfig, evaluate, split, train

SEED = 7
IMAGE_SIZE = 64
NUM_SAMPLES = 200
EPOCHS = int(os.environ.get("DESK_EPOCHS", "300"))
OVERFIT_EPOCHS = 50
OUT_DIR = Path("desk_run")

OUT_DIR.mkdir(exist_ok=True)
model_config = ModelConfig(input_size=IMAGE_SIZE, num_landmarks=4, seed=SEED)
codec = CodecConfig(radius=3.0, grid_size=model_config.output_size)
results = {"config": {"samples": NUM_SAMPLES, "image_size": IMAGE_SIZE, "epochs": EPOCHS, "seed": SEED, "radius": codec.radius}}

# 1. Synthetic data
print(f"Generating {NUM_SAMPLES} synthetic samples at {IMAGE_SIZE}x{IMAGE_SIZE}...")
samples, manifest = synth_generate(NUM_SAMPLES, IMAGE_SIZE, SEED, OUT_DIR / "data")
print(f"  Manifest: {manifest}")

# 2. Training
print(f"\nTraining for {EPOCHS} epochs (batch 8, lr 0.005)...")
config = TrainConfig(epochs=EPOCHS, seed=SEED, augment=AugmentConfig(seed=SEED), codec=codec, record_timing=True)
model = build(model_config)
start = time.time()
history = train(model, samples, config, loss_log=OUT_DIR / "losses.csv")
elapsed = time.time() - start
save(model, OUT_DIR / "model.gmrk")

first, last = history.records[0], history.records[-1]
results["training"] = {
    "seconds": elapsed,
    "first_val_loss": first.val_loss,
    "final_train_loss": last.train_loss,
    "final_val_loss": last.val_loss,
    "best_epoch": history.best_epoch,
    "best_val_loss": history.best_val_loss,
}
print(f"  {elapsed:.1f}s, val loss {first.val_loss:.4f} -> {last.val_loss:.4f} (best {history.best_val_loss:.4f} at epoch {history.best_epoch})")

# 3. Evaluation on the held-out split
_, validation = split(samples, config.split_ratio, config.seed)
metrics = evaluate(model, validation, codec)
results["evaluation"] = {
    "mean_loss": metrics.mean_loss,
    "mean_pixel_error": metrics.mean_pixel_error,
    "within_2px_rate": metrics.within_2px_rate,
    "double_attention_rate": metrics.double_attention_rate,
    "mean_prediction": metrics.mean_prediction,
}

print("\nValidation Metrics:")
print(f"{'Metric':<24} {'Value'}")
print("-" * 36)
for name, value in results["evaluation"].items():
    print(f"{name:<24} {value:.4f}")

# 4. Same run with the plain L1 loss
print(f"\nTraining with the plain L1 loss for {EPOCHS} epochs...")
plain_config = TrainConfig(epochs=EPOCHS, seed=SEED, augment=AugmentConfig(seed=SEED), codec=codec, record_timing=False, loss="plain")
plain_model = build(model_config)
train(plain_model, samples, plain_config)
plain_metrics = evaluate(plain_model, validation, codec)
results["plain_loss"] = {
    "mean_loss": plain_metrics.mean_loss,
    "mean_pixel_error": plain_metrics.mean_pixel_error,
    "within_2px_rate": plain_metrics.within_2px_rate,
    "mean_prediction": plain_metrics.mean_prediction,
}
print(f"{'':<24} {'weighted':>10} {'plain':>10}")
for name in ("mean_pixel_error", "within_2px_rate", "mean_prediction"):
    print(f"{name:<24} {results['evaluation'][name]:>10.4f} {results['plain_loss'][name]:>10.4f}")

# 5. Overfit one sample
print(f"\nOverfitting one sample for {OVERFIT_EPOCHS} epochs...")
single = samples[:1]
overfit_config = TrainConfig(epochs=OVERFIT_EPOCHS, batch_size=1, seed=SEED, augment=AugmentConfig.disabled(SEED), codec=codec, record_timing=False)
overfit = train(build(model_config), single, overfit_config, validation=single)
results["overfit"] = {
    "initial_loss": overfit.records[0].train_loss,
    "final_loss": overfit.records[-1].train_loss,
}
print(f"  loss {overfit.records[0].train_loss:.4f} -> {overfit.records[-1].train_loss:.4f}")

# 6. Checks
checks = {
    "val_loss_halved": last.val_loss < 0.5 * first.val_loss,
    "final_val_loss_le_0.15": last.val_loss <= 0.15,
    "pixel_error_le_2": metrics.mean_pixel_error <= 2.0,
    "overfit_loss_le_0.05": overfit.records[-1].train_loss <= 0.05,
    "weighted_beats_plain_pixel_error": metrics.mean_pixel_error < plain_metrics.mean_pixel_error,
}
results["checks"] = checks

with open("desk_results.json", "w") as f:
    json.dump(results, f, indent=2)

print("\n" + "=" * 60)
print("RESULTS SAVED TO: desk_results.json")
print("=" * 60)
for name, passed in checks.items():
    print(f"{'PASS' if passed else 'FAIL':<6} {name}")
