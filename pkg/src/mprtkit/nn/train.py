"""Mini-batch SGD with momentum on softmax cross-entropy."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from mprtkit.core import NumericError, ParameterError, RngStream
from mprtkit.nn.model import Model, softmax

log = logging.getLogger(__name__)


@dataclass
class TrainLog:
    epochs: list[int] = field(default_factory=list)
    loss: list[float] = field(default_factory=list)
    accuracy: list[float] = field(default_factory=list)


def cross_entropy(logits, labels):
    p = softmax(logits)
    n = len(labels)
    loss = -np.mean(np.log(np.clip(p[np.arange(n), labels], 1e-300, None)))
    grad = p
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def train_sgd(model: Model, dataset, lr: float = 0.001, momentum: float = 0.9, epochs: int = 20,
              seed: int = 0, batch_size: int = 32, history: TrainLog | None = None) -> Model:
    """Train a copy of ``model`` and return it; the input model is untouched.

    Batches come from a per-epoch permutation drawn from ``RngStream(seed)``,
    so a fixed seed reproduces the final parameters bit for bit.
    """
    X, y = dataset.inputs, np.asarray(dataset.labels, dtype=np.int64)
    if len(y) == 0:
        raise ParameterError("cannot train on an empty dataset")
    if np.any(y < 0) or np.any(y >= model.num_classes):
        raise ParameterError("labels outside [0, num_classes)")
    if epochs < 0 or lr < 0:
        raise ParameterError("epochs and lr must be non-negative")

    idx = model.param_indices
    params = {i: [model.layers[i].weight.copy(), model.layers[i].bias.copy()] for i in idx}
    velocity = {i: [np.zeros_like(w), np.zeros_like(b)] for i, (w, b) in params.items()}
    current = model
    stream = RngStream(seed)

    for epoch in range(epochs):
        order = stream.child("epoch", epoch).generator().permutation(len(y))
        total, correct = 0.0, 0
        for start in range(0, len(y), batch_size):
            batch = order[start:start + batch_size]
            logits, _, caches = current.forward_batch(X[batch])
            loss, g = cross_entropy(logits, y[batch])
            total += loss * len(batch)
            correct += int(np.sum(np.argmax(logits, axis=1) == y[batch]))
            for li in range(len(current.layers) - 1, -1, -1):
                layer = current.layers[li]
                if layer.has_params:
                    dw, db = layer.param_grads(g, caches[li])
                    vw, vb = velocity[li]
                    vw *= momentum
                    vw += dw
                    vb *= momentum
                    vb += db
                    params[li][0] -= lr * vw
                    params[li][1] -= lr * vb
                if li > 0:
                    g = layer.backward(g, caches[li])
            current = model.replace({i: model.layers[i].with_params(*params[i]) for i in idx})
        mean_loss = total / len(y)
        if not np.isfinite(mean_loss):
            raise NumericError(f"training diverged at epoch {epoch}")
        log.debug("epoch %d loss %.6f acc %.4f", epoch, mean_loss, correct / len(y))
        if history is not None:
            history.epochs.append(epoch)
            history.loss.append(mean_loss)
            history.accuracy.append(correct / len(y))

    out = model.replace({i: model.layers[i].with_params(*params[i]) for i in idx})
    out.train_seed = seed
    return out
