"""Attribution methods for :class:`mprtkit.nn.Model`.

Every method explains one input ``x`` for one class ``c`` and returns a map
over the input's spatial layout: channels are summed for image-shaped
inputs, flat inputs keep their shape.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from mprtkit import _kernels as K
from mprtkit.core import (
    MprtError,
    ParameterError,
    RngStream,
    ShapeError,
    UnsupportedMethodError,
    check_finite,
    sample_uniform,
)
from mprtkit.nn.model import Model, _one_hot, input_gradients

METHODS = (
    "Gradient",
    "Saliency",
    "InputXGradient",
    "IntegratedGradients",
    "SmoothGrad",
    "GuidedBackprop",
    "LRPEpsilon",
    "LRPZPlus",
    "GradCAM",
    "GradientSHAP",
    "Random",
)
STOCHASTIC = frozenset({"SmoothGrad", "GradientSHAP", "Random"})
_ABSOLUTE = frozenset({"Saliency", "SmoothGrad"})


@dataclass(frozen=True)
class MethodConfig:
    method: str
    ig_steps: int = 20
    sg_samples: int = 20
    sg_noise: float = 0.1          # std = sg_noise * (x.max - x.min)
    lrp_epsilon: float = 1e-6
    shap_samples: int = 5
    shap_noise: float = 0.0        # std of Gaussian input noise inside GradientSHAP
    gradcam_layer: int | None = None  # layer index; default: last Conv2d

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"unknown attribution method {self.method!r}")
        if self.ig_steps < 1 or self.sg_samples < 1 or self.shap_samples < 1:
            raise ParameterError("step and sample counts must be >= 1")
        if self.sg_noise < 0 or self.shap_noise < 0 or self.lrp_epsilon < 0:
            raise ParameterError("noise levels and epsilon must be non-negative")


@dataclass(frozen=True)
class Attribution:
    map: np.ndarray
    method: str
    cls: int
    preprocessed: bool = False


class PreprocessingError(MprtError):
    pass


def spatial_shape(input_shape) -> tuple:
    return tuple(input_shape[1:]) if len(input_shape) == 3 else tuple(input_shape)


def reduce_channels(raw: np.ndarray) -> np.ndarray:
    return raw.sum(axis=0) if raw.ndim == 3 else raw


# ---------------------------------------------------------------- gradient family

def _grads(model, X, c, guided=False):
    return input_gradients(model, X, np.full(len(X), c), guided=guided)


def integrated_gradients(model: Model, x, c: int, steps: int = 20, baseline=None) -> np.ndarray:
    """Left-Riemann integrated gradients from ``baseline`` (default zero) to ``x``."""
    baseline = np.zeros_like(x) if baseline is None else np.asarray(baseline, dtype=np.float64)
    alphas = np.arange(steps, dtype=np.float64) / steps
    path = baseline[None] + alphas.reshape((-1,) + (1,) * x.ndim) * (x - baseline)[None]
    g = _grads(model, path, c)
    return (x - baseline) * g.mean(axis=0)


def smoothgrad(model: Model, x, c: int, samples: int, noise: float, stream: RngStream) -> np.ndarray:
    sigma = noise * float(x.max() - x.min())
    if sigma == 0:
        X = np.repeat(x[None], samples, axis=0)
    else:
        X = x[None] + stream.generator().normal(0.0, sigma, size=(samples,) + x.shape)
    return _grads(model, X, c).mean(axis=0)


def gradient_shap(model: Model, x, c: int, samples: int, stream: RngStream, box=None,
                  noise: float = 0.0) -> np.ndarray:
    """Expected gradients with baselines drawn uniformly from ``box = (lo, hi)``."""
    if box is None:
        lo, hi = np.full_like(x, x.min()), np.full_like(x, x.max())
    else:
        lo, hi = (np.broadcast_to(np.asarray(v, dtype=np.float64), x.shape) for v in box)
    gen = stream.generator()
    base = lo[None] + (hi - lo)[None] * gen.uniform(size=(samples,) + x.shape)
    alpha = gen.uniform(size=(samples,) + (1,) * x.ndim)
    xin = x[None] + (gen.normal(0.0, noise, size=(samples,) + x.shape) if noise > 0 else 0.0)
    g = _grads(model, base + alpha * (xin - base), c)
    return (g * (xin - base)).mean(axis=0)


# ---------------------------------------------------------------- LRP

def _stabilise(z, eps):
    return z + eps * np.where(z >= 0, 1.0, -1.0)


def _safe_div(r, z):
    out = np.zeros_like(r)
    np.divide(r, z, out=out, where=z != 0)
    return out


def lrp(model: Model, x, c: int, rule: str = "epsilon", epsilon: float = 1e-6,
        return_layers: bool = False):
    """Layer-wise relevance propagation of logit ``c`` down to the input.

    ``rule`` is ``"epsilon"`` or ``"zplus"`` and applies to every Dense and
    Conv2d layer. ReLU and Flatten pass relevance through; max-pooling routes
    it to the winning position. With ``return_layers`` the relevance at the
    input of every layer is returned as well (index 0 is the model input).
    """
    if rule not in ("epsilon", "zplus"):
        raise ParameterError(f"unknown LRP rule {rule!r}")
    logits, acts, caches = model.forward_batch(np.asarray(x, dtype=np.float64)[None])
    R = _one_hot([c], model.num_classes) * logits
    per_layer = [None] * (len(model.layers) + 1)
    per_layer[-1] = R[0]
    for i in range(len(model.layers) - 1, -1, -1):
        layer, a = model.layers[i], acts[i]
        kind = layer.kind
        if kind in ("Dense", "Conv2d"):
            if rule == "zplus":
                w, b = np.maximum(layer.weight, 0.0), np.zeros_like(layer.bias)
            else:
                w, b = layer.weight, layer.bias
            if kind == "Dense":
                z = a @ w.T + b
            else:
                z = K.conv2d_forward(np.ascontiguousarray(a), w, b, layer.padding)
            s = _safe_div(R, z) if rule == "zplus" else R / _stabilise(z, epsilon)
            if kind == "Dense":
                back = s @ w
            else:
                back = K.conv2d_backward_input(np.ascontiguousarray(s), w, a.shape, layer.padding)
            R = a * back
        elif kind == "MaxPool2d":
            R = layer.backward(R, caches[i])
        else:  # ReLU, Flatten
            R = R if kind == "ReLU" else layer.backward(R, caches[i])
        per_layer[i] = R[0]
    check_finite(R, "relevance")
    if return_layers:
        return R[0], per_layer
    return R[0]


# ---------------------------------------------------------------- GradCAM

def gradcam(model: Model, x, c: int, layer: int | None = None) -> np.ndarray:
    """Grad-CAM on conv layer ``layer``; returns a map at input resolution (nearest upsampling).

    The map is not rectified here; :func:`preprocess` keeps its positive part.
    """
    convs = model.conv_indices
    if not convs:
        raise UnsupportedMethodError("GradCAM needs a model with a Conv2d layer")
    t = convs[-1] if layer is None else int(layer)
    if t not in convs:
        raise UnsupportedMethodError(f"layer {t} is not a Conv2d layer")
    _, acts, caches = model.forward_batch(np.asarray(x, dtype=np.float64)[None])
    A = acts[t + 1]
    g = model.backward_batch(caches, _one_hot([c], model.num_classes), stop=t + 1)
    weights = g.mean(axis=(2, 3))
    cam = np.tensordot(weights[0], A[0], axes=(0, 0))
    H, W = spatial_shape(model.input_shape)
    h, w = cam.shape
    rows = (np.arange(H) * h) // H
    cols = (np.arange(W) * w) // W
    return cam[np.ix_(rows, cols)]


# ---------------------------------------------------------------- dispatch

def attribute(model: Model, x, cls: int, config: MethodConfig, stream: RngStream | None = None,
              box=None) -> Attribution:
    """Explain ``model`` at ``x`` for class ``cls`` with ``config.method``.

    ``stream`` drives the stochastic methods (SmoothGrad, GradientSHAP,
    Random); ``box`` is the (lo, hi) baseline range used by GradientSHAP.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != model.input_shape:
        raise ShapeError(f"input shape {x.shape} != model input shape {model.input_shape}")
    if not 0 <= int(cls) < model.num_classes:
        raise ParameterError(f"class {cls} out of range")
    cls = int(cls)
    stream = stream or RngStream(0)
    m = config.method

    if m in ("Gradient", "Saliency"):
        raw = _grads(model, x[None], cls)[0]
    elif m == "InputXGradient":
        raw = x * _grads(model, x[None], cls)[0]
    elif m == "IntegratedGradients":
        raw = integrated_gradients(model, x, cls, config.ig_steps)
    elif m == "SmoothGrad":
        raw = smoothgrad(model, x, cls, config.sg_samples, config.sg_noise, stream)
    elif m == "GuidedBackprop":
        raw = _grads(model, x[None], cls, guided=True)[0]
    elif m == "LRPEpsilon":
        raw = lrp(model, x, cls, "epsilon", config.lrp_epsilon)
    elif m == "LRPZPlus":
        raw = lrp(model, x, cls, "zplus")
    elif m == "GradCAM":
        return Attribution(check_finite(gradcam(model, x, cls, config.gradcam_layer)), m, cls)
    elif m == "GradientSHAP":
        raw = gradient_shap(model, x, cls, config.shap_samples, stream, box, config.shap_noise)
    else:  # Random
        return Attribution(np.asarray(sample_uniform(stream, spatial_shape(model.input_shape))), m, cls)
    return Attribution(check_finite(reduce_channels(raw), "attribution"), m, cls)


def preprocess(attr: Attribution) -> Attribution:
    """Absolute value for Saliency/SmoothGrad, positive part for GradCAM, identity otherwise."""
    if attr.preprocessed:
        raise PreprocessingError(f"{attr.method} attribution is already preprocessed")
    if attr.method in _ABSOLUTE:
        out = np.abs(attr.map)
    elif attr.method == "GradCAM":
        out = np.maximum(attr.map, 0.0)
    else:
        out = attr.map
    return replace(attr, map=out, preprocessed=True)


def explain(model, x, cls, config, stream=None, box=None) -> np.ndarray:
    """``preprocess(attribute(...)).map`` in one call."""
    return preprocess(attribute(model, x, cls, config, stream, box)).map


# ---------------------------------------------------------------- dump format

def dump_record(sample: int, method: str, step: int, values) -> str:
    v = np.asarray(values, dtype=np.float64)
    return json.dumps({"sample": int(sample), "method": method, "step": int(step),
                       "shape": list(v.shape), "values": v.ravel().tolist()})


def write_dump(path, records) -> None:
    """One JSON object per line: sample, method, step, shape, flattened values."""
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for sample, method, step, values in records:
            f.write(dump_record(sample, method, step, values) + "\n")


def read_dump(path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                rec["values"] = np.array(rec["values"], dtype=np.float64).reshape(rec["shape"])
                out.append(rec)
    return out
