"""
Plot the loss curves and an overlay from a desk run.
"""

from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np

from heatmap_landmarks.data import load_manifest, render_overlay
from heatmap_landmarks.models import load, predict_heatmaps
from heatmap_landmarks.training import read_loss_csv

RUN_DIR = Path("desk_run")

history = read_loss_csv(RUN_DIR / "losses.csv")
epochs = [r.epoch for r in history.records]

fig, axes = plt.subplots(1, 2, figsize=(14, 5))

# Loss curves
ax1 = axes[0]
ax1.plot(epochs, history.train_losses, 'b-', linewidth=2, label='Training')
ax1.plot(epochs, history.val_losses, 'r-', linewidth=2, label='Validation')
ax1.set_xlabel('Epoch', fontsize=12)
ax1.set_ylabel('Weighted L1 loss', fontsize=12)
ax1.set_title('Training Progress', fontsize=14)
ax1.set_yscale('log')
ax1.grid(True, alpha=0.3)

best = history.best_epoch
ax1.annotate(f'best epoch {best}\n{history.best_val_loss:.4f}',
             xy=(best, history.best_val_loss),
             xytext=(best * 0.6, history.best_val_loss * 2),
             arrowprops=dict(arrowstyle='->', color='red'),
             fontsize=10, color='red')
ax1.legend()

# Heatmap overlay of the first sample
ax2 = axes[1]
model = load(RUN_DIR / "model.gmrk")
sample = load_manifest(RUN_DIR / "data" / "manifest.json", image_size=model.config.input_size)[0]
heatmaps = predict_heatmaps(model, sample.image)
canvas = render_overlay(sample.image, heatmaps, (2, 2))
ax2.imshow(canvas)
ax2.set_title(f'Predicted heatmaps: {sample.id}', fontsize=14)
ax2.axis('off')
print(f"Peak values: {np.round(heatmaps.reshape(len(heatmaps), -1).max(axis=1), 3).tolist()}")

plt.tight_layout()
plt.savefig('desk_results.png', dpi=150, bbox_inches='tight')
print("Saved desk_results.png")
plt.close()
