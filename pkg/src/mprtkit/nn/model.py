"""Sequential model container plus forward/backward helpers."""
from __future__ import annotations

import math

import numpy as np

from mprtkit.core import NumericError, ParameterError, ShapeError, check_finite
from mprtkit.nn.layers import Layer


class Model:
    """An ordered list of layers mapping ``input_shape`` to ``num_classes`` logits.

    Models are treated as immutable: helpers that change parameters return a
    new ``Model`` sharing the untouched layer objects.
    """

    def __init__(self, layers: list[Layer], input_shape, num_classes: int, train_seed: int | None = None):
        self.layers = list(layers)
        self.input_shape = tuple(int(s) for s in input_shape)
        self.num_classes = int(num_classes)
        self.train_seed = train_seed
        if not self.layers:
            raise ShapeError("a model needs at least one layer")
        shapes = [self.input_shape]
        for layer in self.layers:
            shapes.append(layer.output_shape(shapes[-1]))
        if shapes[-1] != (self.num_classes,):
            raise ShapeError(f"model output shape {shapes[-1]} != ({self.num_classes},)")
        self.shapes = shapes
        if not self.param_indices:
            raise ShapeError("a model needs at least one parameterized layer")

    @property
    def param_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.has_params]

    @property
    def conv_indices(self) -> list[int]:
        return [i for i, layer in enumerate(self.layers) if layer.kind == "Conv2d"]

    def layer_name(self, index: int) -> str:
        return f"{index}:{self.layers[index].kind}"

    def replace(self, updates: dict[int, Layer]) -> "Model":
        layers = [updates.get(i, layer) for i, layer in enumerate(self.layers)]
        return Model(layers, self.input_shape, self.num_classes, self.train_seed)

    def _check_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[1:] != self.input_shape:
            raise ShapeError(f"input shape {X.shape[1:]} != model input shape {self.input_shape}")
        return X

    def forward_batch(self, X):
        """Return (logits (B, C), activations, caches); ``activations[i]`` is the input of layer i."""
        X = self._check_batch(X)
        acts = [X]
        caches = []
        h = X
        for layer in self.layers:
            h, cache = layer.forward(h)
            acts.append(h)
            caches.append(cache)
        check_finite(h, "logits")
        return h, acts, caches

    def backward_batch(self, caches, grad_logits, guided=False, stop=0):
        """Propagate ``grad_logits`` down to the input of layer ``stop``."""
        g = grad_logits
        for i in range(len(self.layers) - 1, stop - 1, -1):
            g = self.layers[i].backward(g, caches[i], guided=guided)
        return g

    def predict(self, X) -> np.ndarray:
        return self.forward_batch(X)[0]


def forward(model: Model, x):
    """Single-sample forward pass: (logits (C,), per-layer activation list)."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.input_shape:
        raise ShapeError(f"input shape {x.shape} != model input shape {model.input_shape}")
    logits, acts, _ = model.forward_batch(x[None])
    return logits[0], [a[0] for a in acts]


def _one_hot(classes, num_classes):
    classes = np.asarray(classes, dtype=np.int64)
    if np.any(classes < 0) or np.any(classes >= num_classes):
        raise ParameterError(f"class index out of range [0, {num_classes})")
    out = np.zeros((classes.size, num_classes))
    out[np.arange(classes.size), classes] = 1.0
    return out


def input_gradients(model: Model, X, classes, guided: bool = False) -> np.ndarray:
    """Batched d logit_c / d x for each row of ``X`` and its class."""
    X = model._check_batch(X)
    classes = np.broadcast_to(np.asarray(classes, dtype=np.int64), (X.shape[0],))
    onehot = _one_hot(classes, model.num_classes)
    _, _, caches = model.forward_batch(X)
    return check_finite(model.backward_batch(caches, onehot, guided=guided), "gradient")


def input_gradient(model: Model, x, c: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.input_shape:
        raise ShapeError(f"input shape {x.shape} != model input shape {model.input_shape}")
    return input_gradients(model, x[None], [c])[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def output_entropy(model: Model, x) -> float:
    """Shannon entropy (bits) of the softmax output for one input."""
    logits, _ = forward(model, x)
    p = softmax(logits)
    nz = p[p > 0]
    h = float(-np.sum(nz * np.log2(nz)))
    return min(max(h, 0.0), math.log2(model.num_classes))


def accuracy(model: Model, dataset, batch_size: int = 256) -> float:
    X, y = dataset.inputs, dataset.labels
    if len(y) == 0:
        raise ParameterError("accuracy of an empty dataset is undefined")
    correct = 0
    for start in range(0, len(y), batch_size):
        pred = np.argmax(model.predict(X[start:start + batch_size]), axis=1)
        correct += int(np.sum(pred == y[start:start + batch_size]))
    if not np.isfinite(correct):
        raise NumericError("non-finite accuracy")
    return correct / len(y)
