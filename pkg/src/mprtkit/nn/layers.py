"""Layer types with batched forward and backward passes.

All layers operate on a leading batch axis. ``forward`` returns the output and
a cache holding what ``backward`` needs; ``backward`` maps an output gradient
to an input gradient (and parameter gradients for weight-bearing layers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mprtkit import _kernels as K
from mprtkit.core import ParameterError, ShapeError


@dataclass(frozen=True)
class InitSpec:
    """Distribution used to (re)sample a layer's weights and biases.

    ``uniform`` draws from U(-gain/sqrt(fan_in), +gain/sqrt(fan_in));
    ``normal`` draws from N(0, gain/sqrt(fan_in)).
    """

    fan_in: int
    family: str = "uniform"
    gain: float = 1.0

    def __post_init__(self):
        if self.family not in ("uniform", "normal"):
            raise ParameterError(f"unknown init family {self.family!r}")
        if self.fan_in <= 0:
            raise ParameterError("fan_in must be positive")

    @property
    def scale(self) -> float:
        return self.gain / math.sqrt(self.fan_in)

    def sample(self, gen: np.random.Generator, shape) -> np.ndarray:
        if self.family == "uniform":
            return gen.uniform(-self.scale, self.scale, size=shape)
        return gen.normal(0.0, self.scale, size=shape)

    def to_dict(self) -> dict:
        return {"family": self.family, "fan_in": self.fan_in, "gain": self.gain}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


class Layer:
    kind: str = ""
    has_params = False

    def output_shape(self, in_shape: tuple) -> tuple:
        raise NotImplementedError

    def forward(self, x):
        raise NotImplementedError

    def backward(self, g, cache, guided=False):
        raise NotImplementedError

    def config(self) -> dict:
        return {}


class Dense(Layer):
    kind = "Dense"
    has_params = True

    def __init__(self, in_features, out_features, weight=None, bias=None, init=None):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.init = init or InitSpec(fan_in=self.in_features)
        self.weight = _frozen(np.zeros((out_features, in_features)) if weight is None else weight)
        self.bias = _frozen(np.zeros(out_features) if bias is None else bias)
        if self.weight.shape != (self.out_features, self.in_features):
            raise ShapeError(f"Dense weight shape {self.weight.shape} != {(out_features, in_features)}")
        if self.bias.shape != (self.out_features,):
            raise ShapeError("Dense bias shape mismatch")

    def with_params(self, weight, bias) -> "Dense":
        return Dense(self.in_features, self.out_features, weight, bias, self.init)

    def output_shape(self, in_shape):
        if tuple(in_shape) != (self.in_features,):
            raise ShapeError(f"Dense expects input ({self.in_features},), got {tuple(in_shape)}")
        return (self.out_features,)

    def forward(self, x):
        return x @ self.weight.T + self.bias, x

    def backward(self, g, cache, guided=False):
        return g @ self.weight

    def param_grads(self, g, cache):
        return g.T @ cache, g.sum(axis=0)

    def config(self):
        return {"in_features": self.in_features, "out_features": self.out_features}


class Conv2d(Layer):
    """Stride-1 2-D convolution with symmetric zero padding."""

    kind = "Conv2d"
    has_params = True

    def __init__(self, in_channels, out_channels, kernel_size, padding=0, weight=None, bias=None, init=None):
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.padding = int(padding)
        k = self.kernel_size
        self.init = init or InitSpec(fan_in=self.in_channels * k * k)
        wshape = (self.out_channels, self.in_channels, k, k)
        self.weight = _frozen(np.zeros(wshape) if weight is None else weight)
        self.bias = _frozen(np.zeros(self.out_channels) if bias is None else bias)
        if self.weight.shape != wshape:
            raise ShapeError(f"Conv2d weight shape {self.weight.shape} != {wshape}")
        if self.bias.shape != (self.out_channels,):
            raise ShapeError("Conv2d bias shape mismatch")

    def with_params(self, weight, bias) -> "Conv2d":
        return Conv2d(self.in_channels, self.out_channels, self.kernel_size, self.padding,
                      weight, bias, self.init)

    def output_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_channels:
            raise ShapeError(f"Conv2d expects ({self.in_channels}, H, W), got {tuple(in_shape)}")
        _, h, w = in_shape
        ho = h + 2 * self.padding - self.kernel_size + 1
        wo = w + 2 * self.padding - self.kernel_size + 1
        if ho <= 0 or wo <= 0:
            raise ShapeError("Conv2d kernel larger than padded input")
        return (self.out_channels, ho, wo)

    def forward(self, x):
        x = np.ascontiguousarray(x)
        return K.conv2d_forward(x, self.weight, self.bias, self.padding), x

    def backward(self, g, cache, guided=False):
        return K.conv2d_backward_input(np.ascontiguousarray(g), self.weight, cache.shape, self.padding)

    def param_grads(self, g, cache):
        return K.conv2d_backward_params(np.ascontiguousarray(g), cache, self.weight.shape, self.padding)

    def config(self):
        return {"in_channels": self.in_channels, "out_channels": self.out_channels,
                "kernel_size": self.kernel_size, "padding": self.padding}


class ReLU(Layer):
    kind = "ReLU"

    def output_shape(self, in_shape):
        return tuple(in_shape)

    def forward(self, x):
        return np.maximum(x, 0.0), x

    def backward(self, g, cache, guided=False):
        mask = cache > 0
        if guided:
            mask = mask & (g > 0)
        return np.where(mask, g, 0.0)


class MaxPool2d(Layer):
    """Non-overlapping max-pool (stride = kernel). Ties go to the lowest flat index."""

    kind = "MaxPool2d"

    def __init__(self, kernel_size=2):
        self.kernel_size = int(kernel_size)
        if self.kernel_size < 1:
            raise ParameterError("kernel_size must be >= 1")

    def output_shape(self, in_shape):
        if len(in_shape) != 3:
            raise ShapeError("MaxPool2d expects (C, H, W) input")
        c, h, w = in_shape
        k = self.kernel_size
        if h % k or w % k:
            raise ShapeError(f"spatial size {(h, w)} not divisible by pool size {k}")
        return (c, h // k, w // k)

    def forward(self, x):
        x = np.ascontiguousarray(x)
        out, arg = K.maxpool2d_forward(x, self.kernel_size)
        return out, (arg, x.shape)

    def backward(self, g, cache, guided=False):
        arg, shape = cache
        return K.maxpool2d_backward(np.ascontiguousarray(g), arg, self.kernel_size, shape)

    def config(self):
        return {"kernel_size": self.kernel_size}


class Flatten(Layer):
    kind = "Flatten"

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, g, cache, guided=False):
        return g.reshape(cache)


LAYER_TYPES = {cls.kind: cls for cls in (Dense, Conv2d, ReLU, MaxPool2d, Flatten)}
