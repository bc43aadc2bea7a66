"""
Differentiable primitives.

Every operation is a ``Function`` subclass working on numpy arrays plus a thin
functional wrapper taking and returning ``Tensor`` objects:

    conv2d, upsample2x, concat, batch_norm      -- network plumbing
    add, sub, mul, scalar_mul, scalar_add,
    relu, sigmoid, absolute, clamp01            -- pointwise ops (see ``elementwise``)
    sum, mean, max_with_index                   -- reductions (see ``reduce``)
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import expit

from .errors import ShapeError
from .tensor import Function, Scalar, Tensor


def _require_same_shape(a: np.ndarray, b: np.ndarray, op: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op} requires identical shapes", expected=a.shape, got=b.shape)


def _normalize_axes(axis: int | Sequence[int] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    normalized = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise ValueError(f"Axis {ax} is out of range for a {ndim}-dimensional tensor")
        normalized.append(ax % ndim)
    if len(set(normalized)) != len(normalized):
        raise ValueError(f"Repeated axis in {axes}")
    return tuple(sorted(normalized))


# ----------------------------------------------------------------------
# Pointwise
# ----------------------------------------------------------------------


class Add(Function):
    def forward(self, a, b):
        _require_same_shape(a, b, "add")
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        _require_same_shape(a, b, "sub")
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        _require_same_shape(a, b, "mul")
        self.a, self.b = a, b
        return a * b

    def backward(self, grad):
        return grad * self.b, grad * self.a


class ScalarMul(Function):
    def forward(self, x, factor: Scalar):
        self.factor = np.asarray(factor, dtype=x.dtype)
        return x * self.factor

    def backward(self, grad):
        return (grad * self.factor,)


class ScalarAdd(Function):
    def forward(self, x, offset: Scalar):
        return x + np.asarray(offset, dtype=x.dtype)

    def backward(self, grad):
        return (grad,)


class ReLU(Function):
    def forward(self, x):
        self.mask = x > 0
        return np.where(self.mask, x, np.zeros((), dtype=x.dtype))

    def backward(self, grad):
        return (grad * self.mask,)


class Sigmoid(Function):
    def forward(self, x):
        self.out = expit(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out * (1 - self.out),)


class Abs(Function):
    """|x| with subgradient 0 at x = 0."""

    def forward(self, x):
        self.sign = np.sign(x)
        return np.abs(x)

    def backward(self, grad):
        return (grad * self.sign,)


class Clamp01(Function):
    def forward(self, x):
        self.mask = (x >= 0) & (x <= 1)
        return np.clip(x, 0, 1)

    def backward(self, grad):
        return (grad * self.mask,)


def add(a: Tensor, b: Tensor) -> Tensor:
    return Add.apply(a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return Sub.apply(a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Element-wise (Hadamard) product of two tensors of the same shape."""
    return Mul.apply(a, b)


def scalar_mul(x: Tensor, factor: Scalar) -> Tensor:
    return ScalarMul.apply(x, factor=factor)


def scalar_add(x: Tensor, offset: Scalar) -> Tensor:
    return ScalarAdd.apply(x, offset=offset)


def relu(x: Tensor) -> Tensor:
    return ReLU.apply(x)


def sigmoid(x: Tensor) -> Tensor:
    return Sigmoid.apply(x)


def absolute(x: Tensor) -> Tensor:
    return Abs.apply(x)


def clamp01(x: Tensor) -> Tensor:
    return Clamp01.apply(x)


_UNARY = {"relu": relu, "sigmoid": sigmoid, "abs": absolute, "clamp01": clamp01}
_BINARY = {"add": add, "sub": sub, "mul": mul}


def elementwise(op_kind: str, *args: Tensor | Scalar) -> Tensor:
    """
    Dispatch a pointwise operation by name.

    Args:
        op_kind: One of relu, sigmoid, add, sub, mul, scalar_mul, abs, clamp01
        *args: One tensor for unary ops, two tensors for binary ops,
            (tensor, scalar) for scalar_mul

    Raises:
        ValueError: If op_kind is unknown or the argument count is wrong
        ShapeError: If binary operands differ in shape
    """
    if op_kind in _UNARY:
        if len(args) != 1:
            raise ValueError(f"{op_kind} takes one tensor, got {len(args)} arguments")
        return _UNARY[op_kind](args[0])
    if op_kind in _BINARY:
        if len(args) != 2:
            raise ValueError(f"{op_kind} takes two tensors, got {len(args)} arguments")
        return _BINARY[op_kind](args[0], args[1])
    if op_kind == "scalar_mul":
        if len(args) != 2:
            raise ValueError(f"scalar_mul takes (tensor, scalar), got {len(args)} arguments")
        return scalar_mul(args[0], args[1])
    raise ValueError(f"Unknown elementwise op: {op_kind}")


# ----------------------------------------------------------------------
# Reductions
# ----------------------------------------------------------------------


class Sum(Function):
    def forward(self, x, axes: tuple[int, ...]):
        self.in_shape = x.shape
        self.axes = axes
        return np.asarray(x.sum(axis=axes), dtype=x.dtype)

    def backward(self, grad):
        expanded = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(expanded, self.in_shape).copy(),)


class Mean(Function):
    def forward(self, x, axes: tuple[int, ...]):
        self.in_shape = x.shape
        self.axes = axes
        self.count = int(np.prod([x.shape[a] for a in axes]))
        return np.asarray(x.mean(axis=axes), dtype=x.dtype)

    def backward(self, grad):
        expanded = np.expand_dims(grad, self.axes) / self.count
        return (np.broadcast_to(expanded, self.in_shape).astype(grad.dtype),)


def sum(x: Tensor, axis: int | Sequence[int] | None = None) -> Tensor:  # noqa: A001
    if x.size == 0:
        raise ValueError("Cannot reduce an empty tensor")
    return Sum.apply(x, axes=_normalize_axes(axis, x.ndim))


def mean(x: Tensor, axis: int | Sequence[int] | None = None) -> Tensor:
    if x.size == 0:
        raise ValueError("Cannot reduce an empty tensor")
    return Mean.apply(x, axes=_normalize_axes(axis, x.ndim))


def max_with_index(x: Tensor | np.ndarray) -> tuple[float, int]:
    """
    Return the maximum value and the row-major flat index of its first occurrence.

    Raises:
        ValueError: If the input is empty
    """
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    flat = data.ravel()
    if flat.size == 0:
        raise ValueError("Cannot take the maximum of an empty tensor")
    index = int(np.argmax(flat))
    return float(flat[index]), index


def reduce(op_kind: str, x: Tensor, axes: int | Sequence[int] | None = None):
    """Dispatch a reduction by name: sum, mean or max_with_index (over all entries)."""
    if op_kind == "sum":
        return sum(x, axes)
    if op_kind == "mean":
        return mean(x, axes)
    if op_kind == "max_with_index":
        return max_with_index(x)
    raise ValueError(f"Unknown reduction: {op_kind}")


# ----------------------------------------------------------------------
# Convolution and resampling
# ----------------------------------------------------------------------


class Conv2d(Function):
    """
    2D cross-correlation with zero padding, via explicit patch expansion.

    Forward contracts the (N, C, H', W', k, k) window view against the kernel.
    Backward scatters input gradients with one strided add per kernel offset,
    which keeps the reduction order fixed and the results bit-stable.
    """

    def forward(self, x, kernel, bias=None, stride: int = 1, padding: int = 0):
        if x.ndim != 4 or kernel.ndim != 4:
            raise ShapeError("conv2d expects a 4D input and a 4D kernel", expected="(N,C,H,W)", got=x.shape)
        n, c, h, w = x.shape
        f, kc, kh, kw = kernel.shape
        if kc != c:
            raise ShapeError("conv2d input channels do not match kernel channels", expected=kc, got=c)
        if kh != kw:
            raise ShapeError("conv2d expects a square kernel", expected=(kh, kh), got=(kh, kw))
        if stride < 1:
            raise ValueError(f"Stride must be at least 1, got {stride}")
        if padding < 0:
            raise ValueError(f"Padding must be non-negative, got {padding}")
        if kh > h + 2 * padding or kw > w + 2 * padding:
            raise ShapeError("conv2d kernel is larger than the padded input", expected=f"<= {h + 2 * padding}", got=kh)
        if bias is not None and bias.shape != (f,):
            raise ShapeError("conv2d bias must have one entry per filter", expected=(f,), got=bias.shape)

        self.stride, self.padding, self.k = stride, padding, kh
        self.in_shape = x.shape
        self.has_bias = bias is not None

        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        self.padded_shape = xp.shape
        self.windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        self.kernel = kernel

        out = np.tensordot(self.windows, kernel, axes=([1, 4, 5], [1, 2, 3]))
        out = out.transpose(0, 3, 1, 2)
        if bias is not None:
            out = out + bias[None, :, None, None]
        return np.ascontiguousarray(out, dtype=x.dtype)

    def backward(self, grad):
        s, p, k = self.stride, self.padding, self.k
        _, _, h, w = self.in_shape
        ho, wo = grad.shape[2], grad.shape[3]

        grad_kernel = np.tensordot(grad, self.windows, axes=([0, 2, 3], [0, 2, 3]))

        grad_padded = np.zeros(self.padded_shape, dtype=grad.dtype)
        for i in range(k):
            for j in range(k):
                contrib = np.tensordot(grad, self.kernel[:, :, i, j], axes=([1], [0]))
                grad_padded[:, :, i : i + s * (ho - 1) + 1 : s, j : j + s * (wo - 1) + 1 : s] += (
                    contrib.transpose(0, 3, 1, 2)
                )
        grad_input = grad_padded[:, :, p : p + h, p : p + w]

        grads = [np.ascontiguousarray(grad_input), grad_kernel.astype(grad.dtype)]
        if self.has_bias:
            grads.append(grad.sum(axis=(0, 2, 3)))
        return tuple(grads)


class Upsample2x(Function):
    """Nearest-neighbour upsampling: every pixel becomes a 2x2 block."""

    def forward(self, x):
        if x.ndim != 4:
            raise ShapeError("upsample2x expects a 4D input", expected="(N,C,H,W)", got=x.shape)
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, grad):
        n, c, h2, w2 = grad.shape
        return (grad.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5)),)


class Concat(Function):
    def forward(self, *arrays, axis: int = 1):
        first = arrays[0]
        for other in arrays[1:]:
            if other.ndim != first.ndim or any(
                a != b for d, (a, b) in enumerate(zip(first.shape, other.shape)) if d != axis
            ):
                raise ShapeError("concat requires matching shapes off the concat axis", expected=first.shape, got=other.shape)
        self.axis = axis
        self.sizes = [a.shape[axis] for a in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad):
        bounds = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad, bounds, axis=self.axis))


class BatchNorm(Function):
    """
    Per-channel normalization over (N, H, W) with a learned scale and shift.

    When ``batch_statistics`` is true, ``mean``/``var`` were computed from the
    input itself and the backward pass differentiates through them.
    """

    def forward(self, x, gamma, beta, mean, var, eps: float = 1e-5, batch_statistics: bool = True):
        shape = (1, -1, 1, 1)
        self.inv_std = (1.0 / np.sqrt(var + eps)).astype(x.dtype).reshape(shape)
        self.xhat = (x - mean.reshape(shape).astype(x.dtype)) * self.inv_std
        self.gamma = gamma.reshape(shape)
        self.batch_statistics = batch_statistics
        return self.xhat * self.gamma + beta.reshape(shape)

    def backward(self, grad):
        axes = (0, 2, 3)
        grad_gamma = (grad * self.xhat).sum(axis=axes)
        grad_beta = grad.sum(axis=axes)
        grad_xhat = grad * self.gamma
        if self.batch_statistics:
            count = grad.shape[0] * grad.shape[2] * grad.shape[3]
            grad_input = (self.inv_std / count) * (
                count * grad_xhat
                - grad_xhat.sum(axis=axes, keepdims=True)
                - self.xhat * (grad_xhat * self.xhat).sum(axis=axes, keepdims=True)
            )
        else:
            grad_input = grad_xhat * self.inv_std
        return grad_input, grad_gamma, grad_beta


def conv2d(
    x: Tensor,
    kernel: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
) -> Tensor:
    """
    2D convolution: (N, C, H, W) * (F, C, k, k) -> (N, F, H', W').

    H' = floor((H + 2*padding - k) / stride) + 1, likewise for W'.

    Raises:
        ShapeError: If input channels differ from kernel channels
        ValueError: If stride < 1
    """
    inputs = (x, kernel) if bias is None else (x, kernel, bias)
    return Conv2d.apply(*inputs, stride=stride, padding=padding)


def upsample2x(x: Tensor) -> Tensor:
    return Upsample2x.apply(x)


def concat(tensors: Sequence[Tensor], axis: int = 1) -> Tensor:
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    return Concat.apply(*tensors, axis=axis)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    mean: np.ndarray | None = None,
    var: np.ndarray | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """
    Normalize each channel of an (N, C, H, W) tensor.

    If ``mean`` and ``var`` are omitted they are computed from ``x`` over
    (N, H, W); with N = 1 this is per-sample normalization.
    """
    if x.ndim != 4:
        raise ShapeError("batch_norm expects a 4D input", expected="(N,C,H,W)", got=x.shape)
    batch_statistics = mean is None or var is None
    if batch_statistics:
        mean = x.data.mean(axis=(0, 2, 3))
        var = x.data.var(axis=(0, 2, 3))
    return BatchNorm.apply(
        x, gamma, beta, mean=np.asarray(mean), var=np.asarray(var), eps=eps, batch_statistics=batch_statistics
    )


def channel_statistics(x: Tensor) -> tuple[np.ndarray, np.ndarray]:
    """Per-channel mean and biased variance over (N, H, W)."""
    return x.data.mean(axis=(0, 2, 3)), x.data.var(axis=(0, 2, 3))


__all__ = [
    "absolute",
    "add",
    "batch_norm",
    "channel_statistics",
    "clamp01",
    "concat",
    "conv2d",
    "elementwise",
    "max_with_index",
    "mean",
    "mul",
    "reduce",
    "relu",
    "scalar_add",
    "scalar_mul",
    "sigmoid",
    "sub",
    "sum",
    "upsample2x",
]
