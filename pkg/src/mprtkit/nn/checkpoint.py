"""JSON model checkpoints with base64-encoded little-endian float64 parameters."""
from __future__ import annotations

import base64
import json

import numpy as np

from mprtkit.core import MprtError
from mprtkit.nn.layers import LAYER_TYPES, InitSpec
from mprtkit.nn.model import Model

FORMAT = "mprtkit-checkpoint"
VERSION = 1


class CheckpointError(MprtError):
    pass


def _encode(a: np.ndarray) -> dict:
    raw = np.ascontiguousarray(a, dtype="<f8").tobytes()
    return {"shape": list(a.shape), "data": base64.b64encode(raw).decode("ascii")}


def _decode(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"])
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(d["shape"])


def to_dict(model: Model, meta: dict | None = None) -> dict:
    layers = []
    for i, layer in enumerate(model.layers):
        entry = {"kind": layer.kind, "index": i, "config": layer.config()}
        if layer.has_params:
            entry["init"] = layer.init.to_dict()
            entry["weight"] = _encode(layer.weight)
            entry["bias"] = _encode(layer.bias)
        layers.append(entry)
    doc = {
        "format": FORMAT,
        "version": VERSION,
        "input_shape": list(model.input_shape),
        "num_classes": model.num_classes,
        "train_seed": model.train_seed,
        "layers": layers,
    }
    if meta:
        doc["meta"] = dict(meta)
    return doc


def from_dict(doc: dict) -> Model:
    if doc.get("format") != FORMAT:
        raise CheckpointError("not a model checkpoint")
    if doc.get("version") != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {doc.get('version')}")
    layers = []
    for entry in doc["layers"]:
        cls = LAYER_TYPES.get(entry["kind"])
        if cls is None:
            raise CheckpointError(f"unknown layer kind {entry['kind']!r}")
        kwargs = dict(entry.get("config", {}))
        if cls.has_params:
            kwargs["init"] = InitSpec(**entry["init"])
            kwargs["weight"] = _decode(entry["weight"])
            kwargs["bias"] = _decode(entry["bias"])
        layers.append(cls(**kwargs))
    return Model(layers, doc["input_shape"], doc["num_classes"], doc.get("train_seed"))


def dumps(model: Model, meta: dict | None = None) -> str:
    """Canonical text form; ``meta`` is an optional provenance block ignored on load."""
    return json.dumps(to_dict(model, meta), sort_keys=True, indent=1)


def loads(text: str) -> Model:
    return from_dict(json.loads(text))


def save(model: Model, path, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(dumps(model, meta))


def load(path) -> Model:
    with open(path, encoding="utf-8") as f:
        return loads(f.read())
