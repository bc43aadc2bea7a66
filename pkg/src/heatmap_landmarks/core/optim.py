"""
Adam optimizer with bias correction.

The update for each parameter p with gradient g at step t is:

    m <- beta1 * m + (1 - beta1) * g
    v <- beta2 * v + (1 - beta2) * g^2
    p <- p - lr * (m / (1 - beta1^t)) / (sqrt(v / (1 - beta2^t)) + epsilon)
"""

from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError
from .tensor import Tensor


@dataclass
class AdamState:
    """
    Per-parameter moment buffers and the shared step counter.

    Attributes:
        first_moment: Running mean of gradients, one buffer per parameter
        second_moment: Running mean of squared gradients, one buffer per parameter
        step_count: Number of updates applied so far
        beta1: Decay rate of the first moment
        beta2: Decay rate of the second moment
        epsilon: Denominator guard
    """

    first_moment: list[np.ndarray] = field(default_factory=list)
    second_moment: list[np.ndarray] = field(default_factory=list)
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def __post_init__(self) -> None:
        if not 0.0 <= self.beta1 < 1.0:
            raise ValueError(f"beta1 must lie in [0, 1), got {self.beta1}")
        if not 0.0 <= self.beta2 < 1.0:
            raise ValueError(f"beta2 must lie in [0, 1), got {self.beta2}")
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.step_count < 0:
            raise ValueError(f"step_count must be non-negative, got {self.step_count}")

    @classmethod
    def for_parameters(cls, params: Sequence[Tensor], **kwargs) -> "AdamState":
        """Create a fresh state with zeroed moments shaped like ``params``."""
        return cls(
            first_moment=[np.zeros_like(p.data) for p in params],
            second_moment=[np.zeros_like(p.data) for p in params],
            **kwargs,
        )


def adam_step(
    params: Sequence[Tensor],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    lr: float,
) -> None:
    """
    Apply one Adam update to ``params`` in place.

    Args:
        params: Parameter tensors to update
        grads: Gradient for each parameter; None is treated as zero
        state: Moment buffers, updated in place; step_count grows by exactly one
        lr: Learning rate

    Raises:
        ShapeError: If the state or a gradient does not match the parameters
    """
    if len(grads) != len(params):
        raise ShapeError("adam_step needs one gradient per parameter", expected=len(params), got=len(grads))
    if len(state.first_moment) != len(params) or len(state.second_moment) != len(params):
        raise ShapeError(
            "Adam state does not match the parameter list",
            expected=len(params),
            got=len(state.first_moment),
        )
    for i, (p, m, v) in enumerate(zip(params, state.first_moment, state.second_moment)):
        if m.shape != p.shape or v.shape != p.shape:
            raise ShapeError(f"Adam moments for parameter {i} have the wrong shape", expected=p.shape, got=m.shape)
        if grads[i] is not None and np.shape(grads[i]) != p.shape:
            raise ShapeError(f"Gradient for parameter {i} has the wrong shape", expected=p.shape, got=np.shape(grads[i]))

    state.step_count += 1
    t = state.step_count
    beta1, beta2 = state.beta1, state.beta2
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t

    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g is None:
            g = np.zeros_like(p.data)
        g = np.asarray(g, dtype=m.dtype)
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        m_hat = m / bias1
        v_hat = v / bias2
        update = lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
        p.data -= update.astype(p.dtype)
