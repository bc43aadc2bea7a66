"""
Tests for the autodiff engine.

Tests include:
- Finite-difference gradient checks of every primitive (double precision)
- Gradient accumulation over shared subgraphs
- Shape validation and error cases
- Convolution output shapes
"""

import numpy as np
import pytest

from heatmap_landmarks.core import ops
from heatmap_landmarks.core.errors import ShapeError
from heatmap_landmarks.core.tensor import Tensor

H = 1e-6


def numeric_gradient(fn, array: np.ndarray, h: float = H) -> np.ndarray:
    """Central differences of the scalar ``fn()`` with respect to ``array``, perturbed in place."""
    grad = np.zeros_like(array)
    for idx in np.ndindex(array.shape):
        original = array[idx]
        array[idx] = original + h
        plus = fn()
        array[idx] = original - h
        minus = fn()
        array[idx] = original
        grad[idx] = (plus - minus) / (2 * h)
    return grad


def check_gradients(build_loss, tensors, rtol=1e-4, atol=1e-7):
    """Compare backward() against finite differences for every tensor in ``tensors``."""
    for t in tensors:
        t.zero_grad()
    loss = build_loss()
    loss.backward()
    for i, t in enumerate(tensors):
        numeric = numeric_gradient(lambda: build_loss().item(), t.data)
        np.testing.assert_allclose(t.grad, numeric, rtol=rtol, atol=atol, err_msg=f"gradient of input {i}")


def away_from(values: np.ndarray, points, gap: float = 0.05) -> np.ndarray:
    """Push entries that sit within ``gap`` of a kink away from it."""
    for p in points:
        close = np.abs(values - p) < gap
        values[close] = p + gap * np.where(values[close] >= p, 1.0, -1.0) * 2
    return values


def param(rng, *shape, low=-1.0, high=1.0) -> Tensor:
    return Tensor(rng.uniform(low, high, size=shape), requires_grad=True)


class TestPointwiseGradients:
    """Gradient checks of the pointwise primitives."""

    @pytest.mark.parametrize("seed", range(5))
    def test_binary_ops(self, seed):
        rng = np.random.default_rng(seed)
        a, b = param(rng, 3, 4), param(rng, 3, 4)
        w = Tensor(rng.uniform(-1, 1, size=(3, 4)))

        check_gradients(lambda: ((a + b) * w).sum(), [a, b])
        check_gradients(lambda: ((a - b) * w).sum(), [a, b])
        check_gradients(lambda: ((a * b) * w).sum(), [a, b])

    @pytest.mark.parametrize("seed", range(5))
    def test_scalar_ops(self, seed):
        rng = np.random.default_rng(seed)
        a = param(rng, 2, 5)
        w = Tensor(rng.uniform(-1, 1, size=(2, 5)))

        check_gradients(lambda: ((a * 2.5 + 0.3) * w).sum(), [a])
        check_gradients(lambda: ((1.0 - a / 4) * w).sum(), [a])

    @pytest.mark.parametrize("seed", range(5))
    def test_unary_ops(self, seed):
        rng = np.random.default_rng(seed)
        w = Tensor(rng.uniform(-1, 1, size=(4, 4)))

        x = Tensor(away_from(rng.uniform(-1, 1, size=(4, 4)), [0.0]), requires_grad=True)
        check_gradients(lambda: (x.relu() * w).sum(), [x])
        check_gradients(lambda: (x.abs() * w).sum(), [x])
        check_gradients(lambda: (x.sigmoid() * w).sum(), [x])

        y = Tensor(away_from(rng.uniform(-0.5, 1.5, size=(4, 4)), [0.0, 1.0]), requires_grad=True)
        check_gradients(lambda: (y.clamp01() * w).sum(), [y])

    def test_elementwise_dispatch(self):
        """Dispatch by name matches the direct operations."""
        a = Tensor(np.array([-1.0, 0.5, 2.0]))
        b = Tensor(np.array([1.0, 2.0, 3.0]))

        np.testing.assert_array_equal(ops.elementwise("relu", a).data, [0.0, 0.5, 2.0])
        np.testing.assert_array_equal(ops.elementwise("abs", a).data, [1.0, 0.5, 2.0])
        np.testing.assert_array_equal(ops.elementwise("add", a, b).data, [0.0, 2.5, 5.0])
        np.testing.assert_array_equal(ops.elementwise("scalar_mul", a, 2.0).data, [-2.0, 1.0, 4.0])
        with pytest.raises(ValueError):
            ops.elementwise("tanh", a)
        with pytest.raises(ValueError):
            ops.elementwise("add", a)

    def test_abs_subgradient_at_zero(self):
        x = Tensor(np.array([0.0, -2.0, 3.0]), requires_grad=True)
        x.abs().sum().backward()
        np.testing.assert_array_equal(x.grad, [0.0, -1.0, 1.0])


class TestReductionGradients:
    """Gradient checks and values of sum, mean and max."""

    @pytest.mark.parametrize("axis", [None, 0, 1, (1, 2), (-2, -1)])
    def test_sum_and_mean(self, axis):
        rng = np.random.default_rng(3)
        x = param(rng, 2, 3, 4)

        def weighted(reduced):
            w = Tensor(np.linspace(-1, 1, reduced.size).reshape(reduced.shape))
            return (reduced * w).sum()

        check_gradients(lambda: weighted(x.sum(axis)), [x])
        check_gradients(lambda: weighted(x.mean(axis)), [x])

    def test_max_with_index_prefers_first_occurrence(self):
        """Ties resolve to the smallest row-major index."""
        x = np.array([[0.1, 0.9, 0.3], [0.9, 0.2, 0.9]])
        value, index = ops.max_with_index(x)
        assert value == pytest.approx(0.9)
        assert index == 1

    def test_empty_reductions_raise(self):
        empty = Tensor(np.zeros((0, 3)))
        with pytest.raises(ValueError):
            ops.sum(empty)
        with pytest.raises(ValueError):
            ops.max_with_index(empty)

    def test_reduce_dispatch(self):
        x = Tensor(np.arange(6.0).reshape(2, 3))
        assert ops.reduce("sum", x).item() == 15.0
        np.testing.assert_array_equal(ops.reduce("mean", x, 1).data, [1.0, 4.0])
        assert ops.reduce("max_with_index", x) == (5.0, 5)
        with pytest.raises(ValueError):
            ops.reduce("median", x)


class TestNetworkOpGradients:
    """Gradient checks of convolution, resampling, concatenation and normalization."""

    @pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
    def test_conv2d(self, stride, padding):
        rng = np.random.default_rng(stride * 10 + padding)
        x = param(rng, 2, 3, 5, 5)
        k = param(rng, 4, 3, 3, 3)
        b = param(rng, 4)
        out_shape = ops.conv2d(x, k, b, stride=stride, padding=padding).shape
        w = Tensor(rng.uniform(-1, 1, size=out_shape))

        check_gradients(lambda: (ops.conv2d(x, k, b, stride=stride, padding=padding) * w).sum(), [x, k, b])

    def test_upsample_and_concat(self):
        rng = np.random.default_rng(7)
        x = param(rng, 2, 2, 3, 3)
        skip = param(rng, 2, 3, 6, 6)
        w = Tensor(rng.uniform(-1, 1, size=(2, 5, 6, 6)))

        check_gradients(lambda: (ops.concat([ops.upsample2x(x), skip], axis=1) * w).sum(), [x, skip])

    @pytest.mark.parametrize("seed", range(3))
    def test_batch_norm_with_batch_statistics(self, seed):
        rng = np.random.default_rng(seed)
        x = param(rng, 3, 2, 4, 4)
        gamma = param(rng, 2, low=0.5, high=1.5)
        beta = param(rng, 2)
        w = Tensor(rng.uniform(-1, 1, size=(3, 2, 4, 4)))

        check_gradients(lambda: (ops.batch_norm(x, gamma, beta) * w).sum(), [x, gamma, beta])

    def test_batch_norm_with_fixed_statistics(self):
        rng = np.random.default_rng(11)
        x = param(rng, 2, 3, 3, 3)
        gamma = param(rng, 3, low=0.5, high=1.5)
        beta = param(rng, 3)
        mean = rng.uniform(-0.5, 0.5, size=3)
        var = rng.uniform(0.5, 2.0, size=3)
        w = Tensor(rng.uniform(-1, 1, size=(2, 3, 3, 3)))

        check_gradients(lambda: (ops.batch_norm(x, gamma, beta, mean, var) * w).sum(), [x, gamma, beta])

    def test_batch_norm_normalizes_channels(self):
        rng = np.random.default_rng(0)
        x = Tensor(rng.normal(3.0, 2.0, size=(4, 2, 5, 5)))
        out = ops.batch_norm(x, Tensor(np.ones(2)), Tensor(np.zeros(2))).data
        np.testing.assert_allclose(out.mean(axis=(0, 2, 3)), 0.0, atol=1e-10)
        np.testing.assert_allclose(out.var(axis=(0, 2, 3)), 1.0, rtol=1e-3)


class TestLinearOps:
    """Convolution linearity and nearest-neighbour upsampling."""

    @pytest.mark.parametrize("seed", range(5))
    def test_conv2d_is_linear_in_the_input(self, seed):
        rng = np.random.default_rng(seed)
        x1 = rng.standard_normal((2, 3, 6, 6))
        x2 = rng.standard_normal((2, 3, 6, 6))
        kernel = Tensor(rng.standard_normal((4, 3, 3, 3)))
        a, b = rng.uniform(-2, 2, size=2)

        def conv(x):
            return ops.conv2d(Tensor(x), kernel, stride=2, padding=1).data

        np.testing.assert_allclose(conv(a * x1 + b * x2), a * conv(x1) + b * conv(x2), atol=1e-10)

    def test_upsample2x_repeats_each_pixel(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        expected = [[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]
        np.testing.assert_array_equal(ops.upsample2x(x).data[0, 0], expected)

    def test_upsample2x_gradient_is_block_sum(self):
        x = Tensor(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]), requires_grad=True)
        ops.upsample2x(x).sum().backward()
        np.testing.assert_array_equal(x.grad, np.full((1, 1, 2, 2), 4.0))


class TestConvShapes:
    """Output shape contract H' = floor((H + 2p - k) / s) + 1."""

    @pytest.mark.parametrize(
        "size,k,stride,padding",
        [(8, 3, 1, 1), (8, 3, 2, 1), (7, 3, 2, 1), (9, 1, 2, 0), (5, 5, 1, 0), (16, 3, 2, 0)],
    )
    def test_output_shape(self, size, k, stride, padding):
        x = Tensor(np.zeros((2, 3, size, size)))
        kernel = Tensor(np.zeros((5, 3, k, k)))
        expected = (size + 2 * padding - k) // stride + 1
        assert ops.conv2d(x, kernel, stride=stride, padding=padding).shape == (2, 5, expected, expected)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ShapeError):
            ops.conv2d(Tensor(np.zeros((1, 3, 5, 5))), Tensor(np.zeros((2, 4, 3, 3))))

    def test_invalid_stride_raises(self):
        with pytest.raises(ValueError):
            ops.conv2d(Tensor(np.zeros((1, 3, 5, 5))), Tensor(np.zeros((2, 3, 3, 3))), stride=0)

    def test_conv_is_deterministic(self):
        rng = np.random.default_rng(5)
        x = Tensor(rng.standard_normal((2, 3, 9, 9)).astype(np.float32), requires_grad=True)
        k = Tensor(rng.standard_normal((4, 3, 3, 3)).astype(np.float32), requires_grad=True)

        grads = []
        for _ in range(2):
            x.zero_grad()
            k.zero_grad()
            ops.conv2d(x, k, stride=2, padding=1).sum().backward()
            grads.append((x.grad.copy(), k.grad.copy()))
        assert np.array_equal(grads[0][0], grads[1][0])
        assert np.array_equal(grads[0][1], grads[1][1])


class TestAutodiff:
    """Graph traversal and accumulation."""

    def test_shared_input_accumulates(self):
        """d/dx (x*x + x) = 2x + 1 with x used on three paths."""
        x = Tensor(np.array([1.0, -2.0, 0.5]), requires_grad=True)
        (x * x + x).sum().backward()
        np.testing.assert_allclose(x.grad, [3.0, -3.0, 2.0])

    def test_repeated_backward_adds(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        (x * 3.0).sum().backward()
        (x * 3.0).sum().backward()
        np.testing.assert_allclose(x.grad, [6.0, 6.0])

    def test_constants_receive_no_gradient(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        c = Tensor(np.array([3.0, 4.0]))
        (x * c).sum().backward()
        assert c.grad is None
        np.testing.assert_allclose(x.grad, [3.0, 4.0])

    def test_deep_chain_does_not_recurse(self):
        x = Tensor(np.array(1.0), requires_grad=True)
        y = x
        for _ in range(5000):
            y = y + 0.0
        y.backward()
        assert x.grad == pytest.approx(1.0)

    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError):
            (x * 2.0).backward()

    def test_mismatched_shapes_raise(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones(3)) + Tensor(np.ones(4))

    def test_tensor_division_is_rejected(self):
        with pytest.raises(TypeError):
            Tensor(np.ones(3)) / Tensor(np.ones(3))

    def test_default_dtype_is_float32(self):
        assert Tensor([1, 2, 3]).dtype == np.float32
        assert Tensor(np.zeros(2, dtype=np.float64)).dtype == np.float64

    def test_float64_survives_scalar_ops(self):
        x = Tensor(np.array(0.1234567890123), requires_grad=True)
        w = Tensor(np.array(3.0))
        results = {
            "mul": x * w,
            "add": x + w,
            "scalar_mul": ops.scalar_mul(x, 2.5),
            "sigmoid": ops.sigmoid(x),
            "abs": ops.absolute(x),
            "clamp01": ops.clamp01(x),
        }
        for name, out in results.items():
            assert out.dtype == np.float64, name
        assert (x * w).item() == pytest.approx(0.3703703670369, abs=1e-12)

    def test_numpy_scalar_keeps_its_precision(self):
        assert Tensor(np.float64(0.5)).dtype == np.float64
