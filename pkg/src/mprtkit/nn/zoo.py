"""Small reference architectures, freshly initialised from a seed."""
from __future__ import annotations

from mprtkit.core import ParameterError, RngStream, derive_stream_id
from mprtkit.nn.layers import Conv2d, Dense, Flatten, MaxPool2d, ReLU
from mprtkit.nn.model import Model


def _initialise(layers, seed):
    out = []
    for i, layer in enumerate(layers):
        if layer.has_params:
            gen = RngStream(seed, derive_stream_id("init", i)).generator()
            w = layer.init.sample(gen, layer.weight.shape)
            b = layer.init.sample(gen, layer.bias.shape)
            layer = layer.with_params(w, b)
        out.append(layer)
    return out


def toy_cnn(input_shape=(1, 16, 16), num_classes=10, channels=(4, 8), hidden=32, seed=0) -> Model:
    """LeNet-style net: two conv/ReLU/pool blocks followed by two dense layers."""
    c, h, w = input_shape
    c1, c2 = channels
    layers = [
        Conv2d(c, c1, 3, padding=1), ReLU(), MaxPool2d(2),
        Conv2d(c1, c2, 3, padding=1), ReLU(), MaxPool2d(2),
        Flatten(),
        Dense(c2 * (h // 4) * (w // 4), hidden), ReLU(),
        Dense(hidden, num_classes),
    ]
    return Model(_initialise(layers, seed), input_shape, num_classes)


def mlp(input_shape=(1, 16, 16), num_classes=10, hidden=(64,), seed=0) -> Model:
    layers = []
    d = 1
    for s in input_shape:
        d *= s
    if len(input_shape) > 1:
        layers.append(Flatten())
    for width in hidden:
        layers += [Dense(d, width), ReLU()]
        d = width
    layers.append(Dense(d, num_classes))
    return Model(_initialise(layers, seed), input_shape, num_classes)


ARCHITECTURES = {"toy_cnn": toy_cnn, "mlp": mlp}


def build_model(arch: str, input_shape, num_classes: int, seed: int = 0, **kwargs) -> Model:
    try:
        factory = ARCHITECTURES[arch]
    except KeyError:
        raise ParameterError(f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}") from None
    return factory(input_shape=tuple(input_shape), num_classes=num_classes, seed=seed, **kwargs)
