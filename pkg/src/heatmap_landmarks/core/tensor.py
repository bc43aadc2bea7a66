"""
Dense tensors with reverse-mode automatic differentiation.

A ``Tensor`` wraps a numpy array. Operations on tensors that require gradients
record the ``Function`` that produced them; ``Tensor.backward`` walks that graph
in reverse topological order and accumulates gradients into ``Tensor.grad``.

Only scalar-times-tensor broadcasting is supported: every binary operation
between two tensors requires identical shapes.
"""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Any

import numpy as np

from .errors import ShapeError

logger = logging.getLogger(__name__)

DEFAULT_DTYPE = np.float32

Scalar = int | float


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement ``forward`` on raw numpy arrays and ``backward``, which
    receives dL/d(output) and returns one gradient (or None) per input tensor.
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError(f"{type(self).__name__} does not implement forward")

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError(f"{type(self).__name__} does not implement backward")

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        """Run the forward pass and attach the graph node when gradients are needed."""
        fn = cls(*inputs)
        out = fn.forward(*(t.data for t in inputs), **kwargs)
        # 0-d results come back as numpy scalars; keep the inputs' precision
        out = np.asarray(out, dtype=np.result_type(*(t.dtype for t in inputs)))
        requires_grad = any(t.requires_grad for t in inputs)
        return Tensor(out, requires_grad=requires_grad, _creator=fn if requires_grad else None)


class Tensor:
    """
    N-dimensional array of floats with optional gradient tracking.

    Attributes:
        data: Row-major numpy buffer holding the values
        requires_grad: Whether gradients flow to this tensor
        grad: Gradient buffer with the same shape as ``data``, populated by backward
    """

    def __init__(
        self,
        data: np.ndarray | Sequence | Scalar,
        requires_grad: bool = False,
        dtype: np.dtype | type | None = None,
        _creator: Function | None = None,
    ):
        if dtype is None:
            if isinstance(data, (np.ndarray, np.floating)) and np.issubdtype(data.dtype, np.floating):
                dtype = data.dtype
            else:
                dtype = DEFAULT_DTYPE
        self.data = np.asarray(data, dtype=dtype)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._creator = _creator

    # ------------------------------------------------------------------
    # Introspection
    # ------------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._creator is None

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError("item() needs a single-element tensor", expected=(), got=self.shape)
        return float(self.data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def detach(self) -> Tensor:
        """Return a leaf tensor sharing this tensor's values but not its graph."""
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype: np.dtype | type) -> Tensor:
        return Tensor(self.data.astype(dtype), requires_grad=self.requires_grad)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{flag})"

    # ------------------------------------------------------------------
    # Autodiff
    # ------------------------------------------------------------------

    def backward(self) -> None:
        """
        Backpropagate from this scalar through the recorded graph.

        Gradients accumulate additively: a tensor used on several paths receives
        the sum of the path gradients, and repeated calls add to existing grads.

        Raises:
            ShapeError: If this tensor is not a scalar
        """
        if self.ndim != 0:
            raise ShapeError("backward() can only be called on a scalar", expected=(), got=self.shape)
        if not self.requires_grad:
            raise ValueError("backward() called on a tensor that does not require gradients")

        order = self._topological_order()
        pending: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        for node in reversed(order):
            grad = pending.pop(id(node), None)
            if grad is None:
                continue
            node._accumulate(grad)
            if node._creator is None:
                continue
            input_grads = node._creator.backward(grad)
            for inp, g in zip(node._creator.inputs, input_grads):
                if g is None or not inp.requires_grad:
                    continue
                if g.shape != inp.shape:
                    raise ShapeError(
                        f"{type(node._creator).__name__} produced a gradient of the wrong shape",
                        expected=inp.shape,
                        got=g.shape,
                    )
                key = id(inp)
                if key in pending:
                    pending[key] = pending[key] + g
                else:
                    pending[key] = g

    def _accumulate(self, grad: np.ndarray) -> None:
        grad = grad.astype(self.dtype, copy=False)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def _topological_order(self) -> list[Tensor]:
        """Iterative post-order DFS; the graph can be deeper than the recursion limit."""
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            if node._creator is not None:
                for inp in reversed(node._creator.inputs):
                    if inp.requires_grad and id(inp) not in visited:
                        stack.append((inp, False))
        return order

    # ------------------------------------------------------------------
    # Operators (scalar-times-tensor is the only broadcasting allowed)
    # ------------------------------------------------------------------

    def __add__(self, other: Tensor | Scalar) -> Tensor:
        from . import ops

        if isinstance(other, Tensor):
            return ops.add(self, other)
        return ops.scalar_add(self, other)

    __radd__ = __add__

    def __sub__(self, other: Tensor | Scalar) -> Tensor:
        from . import ops

        if isinstance(other, Tensor):
            return ops.sub(self, other)
        return ops.scalar_add(self, -other)

    def __rsub__(self, other: Scalar) -> Tensor:
        from . import ops

        return ops.scalar_add(ops.scalar_mul(self, -1.0), other)

    def __mul__(self, other: Tensor | Scalar) -> Tensor:
        from . import ops

        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scalar_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> Tensor:
        from . import ops

        if isinstance(other, Tensor):
            raise TypeError("Tensor / Tensor is not supported; multiply by a reciprocal instead")
        return ops.scalar_mul(self, 1.0 / other)

    def __neg__(self) -> Tensor:
        from . import ops

        return ops.scalar_mul(self, -1.0)

    def relu(self) -> Tensor:
        from . import ops

        return ops.relu(self)

    def sigmoid(self) -> Tensor:
        from . import ops

        return ops.sigmoid(self)

    def abs(self) -> Tensor:
        from . import ops

        return ops.absolute(self)

    def clamp01(self) -> Tensor:
        from . import ops

        return ops.clamp01(self)

    def sum(self, axis: int | Sequence[int] | None = None) -> Tensor:
        from . import ops

        return ops.sum(self, axis)

    def mean(self, axis: int | Sequence[int] | None = None) -> Tensor:
        from . import ops

        return ops.mean(self, axis)


def as_tensor(value: Tensor | np.ndarray | Sequence | Scalar, dtype=None) -> Tensor:
    """Wrap ``value`` as a constant tensor unless it already is one."""
    if isinstance(value, Tensor):
        return value if dtype is None or value.dtype == dtype else value.astype(dtype)
    return Tensor(value, requires_grad=False, dtype=dtype)
