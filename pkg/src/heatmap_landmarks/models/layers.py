"""
Network building blocks on top of the autodiff primitives.

``Module`` keeps parameters, buffers and child modules in registration order,
which gives every tensor a stable hierarchical name such as
``stage1.block0.conv1.weight``.
"""

from __future__ import annotations

import math
from collections.abc import Iterator

import numpy as np

from ..core import ops
from ..core.errors import ShapeError
from ..core.tensor import Tensor


class Module:
    """Base class for layers and models."""

    def __init__(self) -> None:
        self._parameters: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}
        self._modules: dict[str, Module] = {}
        self.training = True

    def register_parameter(self, name: str, data: np.ndarray) -> Tensor:
        param = Tensor(data, requires_grad=True)
        self._parameters[name] = param
        return param

    def register_buffer(self, name: str, data: np.ndarray) -> None:
        self._buffers[name] = data

    def add_module(self, name: str, module: Module) -> Module:
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, param in self._parameters.items():
            yield prefix + name, param
        for name, module in self._modules.items():
            yield from module.named_parameters(f"{prefix}{name}.")

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for name, buf in self._buffers.items():
            yield prefix + name, buf
        for name, module in self._modules.items():
            yield from module.named_buffers(f"{prefix}{name}.")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def state_dict(self) -> dict[str, np.ndarray]:
        """Parameters first, then buffers, each in registration order."""
        state = {name: p.data for name, p in self.named_parameters()}
        state.update(self.named_buffers())
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        """
        Copy values into this module's parameters and buffers.

        Raises:
            KeyError: If names are missing or unexpected
            ShapeError: If a shape differs
        """
        own = dict(self.named_parameters())
        buffers = self._buffer_owners()
        expected = set(own) | set(buffers)
        if set(state) != expected:
            missing = sorted(expected - set(state))
            unexpected = sorted(set(state) - expected)
            raise KeyError(f"State mismatch: missing {missing}, unexpected {unexpected}")
        for name, value in state.items():
            value = np.asarray(value)
            if name in own:
                param = own[name]
                if value.shape != param.shape:
                    raise ShapeError(f"Parameter {name} has the wrong shape", expected=param.shape, got=value.shape)
                param.data = value.astype(param.dtype, copy=True)
            else:
                module, key = buffers[name]
                if value.shape != module._buffers[key].shape:
                    raise ShapeError(f"Buffer {name} has the wrong shape", expected=module._buffers[key].shape, got=value.shape)
                module._buffers[key] = value.astype(module._buffers[key].dtype, copy=True)

    def _buffer_owners(self, prefix: str = "") -> dict[str, tuple[Module, str]]:
        owners = {prefix + key: (self, key) for key in self._buffers}
        for name, module in self._modules.items():
            owners.update(module._buffer_owners(f"{prefix}{name}."))
        return owners

    def train(self, mode: bool = True) -> Module:
        self.training = mode
        for module in self._modules.values():
            module.train(mode)
        return self

    def eval(self) -> Module:
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def forward(self, *args, **kwargs) -> Tensor:
        raise NotImplementedError

    def __call__(self, *args, **kwargs) -> Tensor:
        return self.forward(*args, **kwargs)


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], dtype) -> np.ndarray:
    """He (fan-in) initialization for a (F, C, k, k) kernel."""
    fan_in = int(np.prod(shape[1:]))
    return (rng.standard_normal(shape) * math.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Module):
    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel_size: int,
        rng: np.random.Generator,
        stride: int = 1,
        padding: int = 0,
        bias: bool = True,
        dtype=np.float32,
        init_std: float | None = None,
    ):
        super().__init__()
        self.stride = stride
        self.padding = padding
        shape = (out_channels, in_channels, kernel_size, kernel_size)
        if init_std is None:
            kernel = he_normal(rng, shape, dtype)
        else:
            kernel = (rng.standard_normal(shape) * init_std).astype(dtype)
        self.weight = self.register_parameter("weight", kernel)
        self.bias = self.register_parameter("bias", np.zeros(out_channels, dtype=dtype)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return ops.conv2d(x, self.weight, self.bias, stride=self.stride, padding=self.padding)


class BatchNorm2d(Module):
    """
    Batch-style normalization with learned scale and shift.

    Training mode normalizes with the statistics of the current batch (a single
    sample when N = 1) and updates the running averages; evaluation mode uses
    the running averages.
    """

    def __init__(self, channels: int, dtype=np.float32, momentum: float = 0.1, eps: float = 1e-5):
        super().__init__()
        self.momentum = momentum
        self.eps = eps
        self.weight = self.register_parameter("weight", np.ones(channels, dtype=dtype))
        self.bias = self.register_parameter("bias", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_mean", np.zeros(channels, dtype=dtype))
        self.register_buffer("running_var", np.ones(channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        if self.training:
            mean, var = ops.channel_statistics(x)
            m = self.momentum
            running_mean = self._buffers["running_mean"]
            running_var = self._buffers["running_var"]
            self._buffers["running_mean"] = ((1 - m) * running_mean + m * mean).astype(running_mean.dtype)
            self._buffers["running_var"] = ((1 - m) * running_var + m * var).astype(running_var.dtype)
            return ops.batch_norm(x, self.weight, self.bias, eps=self.eps)
        return ops.batch_norm(
            x,
            self.weight,
            self.bias,
            mean=self._buffers["running_mean"],
            var=self._buffers["running_var"],
            eps=self.eps,
        )


class ResidualBlock(Module):
    """
    Basic residual block: conv-norm-relu-conv-norm plus a shortcut, then relu.

    The shortcut is the identity when shape is preserved, otherwise a strided
    1x1 projection followed by normalization.
    """

    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator, stride: int = 1, dtype=np.float32):
        super().__init__()
        self.conv1 = self.add_module(
            "conv1", Conv2d(in_channels, out_channels, 3, rng, stride=stride, padding=1, bias=False, dtype=dtype)
        )
        self.norm1 = self.add_module("norm1", BatchNorm2d(out_channels, dtype=dtype))
        self.conv2 = self.add_module(
            "conv2", Conv2d(out_channels, out_channels, 3, rng, padding=1, bias=False, dtype=dtype)
        )
        self.norm2 = self.add_module("norm2", BatchNorm2d(out_channels, dtype=dtype))
        self.projection = None
        if stride != 1 or in_channels != out_channels:
            self.projection = self.add_module(
                "projection", Conv2d(in_channels, out_channels, 1, rng, stride=stride, bias=False, dtype=dtype)
            )
            self.projection_norm = self.add_module("projection_norm", BatchNorm2d(out_channels, dtype=dtype))

    def shortcut(self, x: Tensor) -> Tensor:
        if self.projection is None:
            return x
        return self.projection_norm(self.projection(x))

    def residual(self, x: Tensor) -> Tensor:
        out = self.norm1(self.conv1(x)).relu()
        return self.norm2(self.conv2(out))

    def forward(self, x: Tensor) -> Tensor:
        return (self.residual(x) + self.shortcut(x)).relu()


class DecoderBlock(Module):
    """Upsample 2x, concatenate the same-resolution encoder skip, conv-norm-relu."""

    def __init__(self, in_channels: int, skip_channels: int, out_channels: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.conv = self.add_module(
            "conv", Conv2d(in_channels + skip_channels, out_channels, 3, rng, padding=1, bias=False, dtype=dtype)
        )
        self.norm = self.add_module("norm", BatchNorm2d(out_channels, dtype=dtype))

    def forward(self, x: Tensor, skip: Tensor) -> Tensor:
        merged = ops.concat([ops.upsample2x(x), skip], axis=1)
        return self.norm(self.conv(merged)).relu()


class Stem(Module):
    """Stride-2 3x3 convolution from RGB, normalized and rectified."""

    def __init__(self, out_channels: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.conv = self.add_module("conv", Conv2d(3, out_channels, 3, rng, stride=2, padding=1, bias=False, dtype=dtype))
        self.norm = self.add_module("norm", BatchNorm2d(out_channels, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(self.conv(x)).relu()
