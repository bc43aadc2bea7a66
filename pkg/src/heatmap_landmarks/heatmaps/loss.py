"""
Heatmap losses.

The weighted loss balances the landmark disk against the background:

    L(P, G) = 1/n * sum_i [ 1/2 * |I_i * (H_i - G_i)| / |I_i|
                          + 1/2 * |(1 - I_i) * (H_i - G_i)| / |1 - I_i| ]

where |A| is the entry-wise L1 norm and I_i the indicator of G_i > 0. Both
normalizers make each half a mean absolute error, so with heatmaps in [0, 1]
the loss also lies in [0, 1] and reads as the average per-pixel deviation.

The plain regression baseline is 1/n * sum_i |H_i - G_i| / G^2.
"""

from dataclasses import dataclass

import numpy as np

from ..core.errors import DegenerateIndicatorError, ShapeError
from ..core.tensor import Tensor, as_tensor
from ..core.types import HeatmapStack, IndicatorMask

_SPATIAL = (-2, -1)


@dataclass
class LossValue:
    """
    A loss together with its per-landmark terms.

    Attributes:
        value: Differentiable scalar, the mean of ``per_landmark``
        per_landmark: Bracketed term of each landmark, shape (n,) or (B, n) for batches
    """

    value: Tensor
    per_landmark: np.ndarray

    def item(self) -> float:
        return self.value.item()


def _unwrap(stack) -> np.ndarray:
    if isinstance(stack, HeatmapStack):
        return stack.maps
    if isinstance(stack, IndicatorMask):
        return stack.masks
    if isinstance(stack, Tensor):
        return stack.data
    return np.asarray(stack)


def _as_prediction(pred) -> Tensor:
    if isinstance(pred, Tensor):
        return pred
    return as_tensor(_unwrap(pred))


def weighted_loss(pred, gt, ind) -> LossValue:
    """
    Weighted two-term L1 heatmap loss, differentiable with respect to ``pred``.

    Args:
        pred: Predicted heatmaps (Tensor, HeatmapStack or array) of shape (n, G, G)
            or a batch (B, n, G, G)
        gt: Ground-truth heatmaps of the same shape
        ind: Indicator masks of the same shape

    Returns:
        LossValue with the scalar loss and the per-landmark terms

    Raises:
        ShapeError: If the three inputs differ in shape
        DegenerateIndicatorError: If an indicator is all zeros or all ones
    """
    pred = _as_prediction(pred)
    gt_arr = _unwrap(gt)
    ind_arr = _unwrap(ind)
    if gt_arr.shape != pred.shape or ind_arr.shape != pred.shape:
        raise ShapeError(
            "Prediction, ground truth and indicator must share a shape",
            expected=pred.shape,
            got=(gt_arr.shape, ind_arr.shape),
        )
    if pred.ndim not in (3, 4):
        raise ShapeError("Heatmaps must be (n, G, G) or (B, n, G, G)", expected="3D or 4D", got=pred.shape)

    total = ind_arr.shape[-1] * ind_arr.shape[-2]
    inside_count = ind_arr.sum(axis=_SPATIAL)
    degenerate = (inside_count == 0) | (inside_count == total)
    if np.any(degenerate):
        position = np.argwhere(degenerate)[0]
        raise DegenerateIndicatorError(int(position[-1]), int(inside_count[tuple(position)]), total)

    dtype = pred.dtype
    gt_t = as_tensor(gt_arr.astype(dtype, copy=False))
    inside_mask = as_tensor(ind_arr.astype(dtype, copy=False))
    outside_mask = as_tensor((1 - ind_arr).astype(dtype, copy=False))
    inside_weight = as_tensor((0.5 / inside_count).astype(dtype))
    outside_weight = as_tensor((0.5 / (total - inside_count)).astype(dtype))

    diff = (pred - gt_t).abs()
    inside = (diff * inside_mask).sum(axis=_SPATIAL) * inside_weight
    outside = (diff * outside_mask).sum(axis=_SPATIAL) * outside_weight
    per_landmark = inside + outside
    return LossValue(value=per_landmark.mean(), per_landmark=per_landmark.data.copy())


def plain_l1_loss(pred, gt) -> Tensor:
    """
    Mean absolute error per map, averaged over landmarks (and batch).

    Raises:
        ShapeError: If shapes differ
    """
    pred = _as_prediction(pred)
    gt_arr = _unwrap(gt)
    if gt_arr.shape != pred.shape:
        raise ShapeError("Prediction and ground truth must share a shape", expected=pred.shape, got=gt_arr.shape)
    pixels = pred.shape[-1] * pred.shape[-2]
    diff = (pred - as_tensor(gt_arr.astype(pred.dtype, copy=False))).abs()
    return (diff.sum(axis=_SPATIAL) / pixels).mean()
