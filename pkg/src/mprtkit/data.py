"""Datasets: IDX (MNIST format) files, synthetic Gaussian blobs, subsampling."""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from mprtkit.core import MprtError, ParameterError, RngStream, ShapeError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801

_IDX_DTYPES = {
    0x08: np.dtype(np.uint8),
    0x09: np.dtype(np.int8),
    0x0B: np.dtype(">i2"),
    0x0C: np.dtype(">i4"),
    0x0D: np.dtype(">f4"),
    0x0E: np.dtype(">f8"),
}
_IDX_CODES = {v.newbyteorder(">") if v.itemsize > 1 else v: k for k, v in _IDX_DTYPES.items()}


class DataError(MprtError):
    """Base class for dataset loading failures."""


class IdxMagicError(DataError):
    pass


class IdxTruncatedError(DataError):
    pass


class IdxCountMismatchError(DataError):
    pass


@dataclass
class Dataset:
    inputs: np.ndarray              # (N, C, H, W) or (N, D), float64
    labels: np.ndarray              # (N,), int64
    num_classes: int
    split: str = "all"
    normalization: dict | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if len(self.inputs) != len(self.labels):
            raise ShapeError("inputs and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ParameterError("labels outside [0, num_classes)")

    def __len__(self):
        return len(self.labels)

    @property
    def input_shape(self) -> tuple:
        return tuple(self.inputs.shape[1:])

    def take(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return replace(self, inputs=self.inputs[index], labels=self.labels[index])


# ---------------------------------------------------------------- IDX files

def read_idx(path) -> np.ndarray:
    """Decode any IDX file into an array of its stored dtype."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: missing IDX header")
    zero, code, ndim = struct.unpack(">HBB", raw[:4])
    if zero != 0 or code not in _IDX_DTYPES:
        raise IdxMagicError(f"{path}: bad IDX magic 0x{int.from_bytes(raw[:4], 'big'):08x}")
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: truncated IDX dimensions")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    dtype = _IDX_DTYPES[code]
    need = math.prod(dims) * dtype.itemsize
    if len(raw) - header < need:
        raise IdxTruncatedError(f"{path}: expected {need} data bytes, found {len(raw) - header}")
    return np.frombuffer(raw, dtype=dtype, count=math.prod(dims), offset=header).reshape(dims)


def write_idx(path, array) -> None:
    a = np.asarray(array)
    dtype = a.dtype.newbyteorder(">") if a.dtype.itemsize > 1 else a.dtype
    code = _IDX_CODES.get(dtype)
    if code is None:
        raise ParameterError(f"dtype {a.dtype} is not representable in IDX")
    with open(path, "wb") as f:
        f.write(struct.pack(">HBB", 0, code, a.ndim))
        f.write(struct.pack(f">{a.ndim}I", *a.shape))
        f.write(a.astype(dtype).tobytes())


def _magic(path) -> int:
    raw = Path(path).read_bytes()[:4]
    if len(raw) < 4:
        raise IdxTruncatedError(f"{path}: missing IDX header")
    return int.from_bytes(raw, "big")


def load_idx(images_path, labels_path, num_classes: int | None = None, split: str = "all") -> Dataset:
    """Load an MNIST-style image/label pair; pixels become byte/255 in [0, 1]."""
    if _magic(images_path) != IMAGES_MAGIC:
        raise IdxMagicError(f"{images_path}: expected image magic 0x{IMAGES_MAGIC:08x}")
    if _magic(labels_path) != LABELS_MAGIC:
        raise IdxMagicError(f"{labels_path}: expected label magic 0x{LABELS_MAGIC:08x}")
    images = read_idx(images_path)
    labels = read_idx(labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxCountMismatchError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    inputs = images.astype(np.float64)[:, None, :, :] / 255.0
    labels = labels.astype(np.int64)
    if num_classes is None:
        num_classes = int(labels.max()) + 1 if len(labels) else 1
    return Dataset(inputs, labels, num_classes, split=split,
                   normalization={"kind": "byte", "scale": 255.0},
                   meta={"images": str(images_path), "labels": str(labels_path)})


# ---------------------------------------------------------------- synthetic

def synth_blobs(n_per_class: int, n_classes: int, dim, separation: float, seed: int,
                noise: float = 1.0, split: str = "all", smooth: float | None = None) -> Dataset:
    """Isotropic Gaussian blobs whose centres are pairwise ``separation`` apart.

    ``dim`` is an int (flat features) or a shape such as ``(1, 16, 16)``. The
    centres are scaled orthonormal vectors, which needs ``prod(dim) >= n_classes``.
    For image shapes the centres are first drawn as Gaussian-blurred random
    fields (``smooth`` pixels, default 2) so that they carry spatial structure.
    Centres depend on ``seed`` only, so splits generated with the same seed
    and a different ``split`` tag share centres but not noise.
    """
    if n_per_class <= 0 or n_classes <= 0:
        raise ParameterError("counts must be positive")
    shape = (int(dim),) if np.isscalar(dim) else tuple(int(s) for s in dim)
    d = math.prod(shape)
    if d < n_classes:
        raise ParameterError("need at least as many features as classes")
    centre_gen = RngStream(seed).child("centres").generator()
    fields = centre_gen.normal(size=(n_classes,) + shape)
    if smooth is None:
        smooth = 2.0 if len(shape) == 3 else 0.0
    if smooth > 0 and len(shape) >= 2:
        sig = (0.0,) * (len(shape) - 2) + (smooth, smooth)
        fields = np.stack([gaussian_filter(f, sigma=sig, mode="wrap") for f in fields])
    q, _ = np.linalg.qr(fields.reshape(n_classes, d).T)
    centres = q.T * (separation / math.sqrt(2.0))
    gen = RngStream(seed).child("blobs", split).generator()
    labels = np.repeat(np.arange(n_classes), n_per_class)
    x = centres[labels] + noise * gen.normal(size=(len(labels), d))
    order = gen.permutation(len(labels))
    return Dataset(x[order].reshape((len(labels),) + shape), labels[order], n_classes, split=split,
                   meta={"generator": "blobs", "seed": seed, "separation": separation})


def subsample(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Uniform sample of ``n`` items without replacement."""
    if n < 0 or n > len(dataset):
        raise ParameterError(f"cannot draw {n} samples from {len(dataset)}")
    idx = RngStream(seed).child("subsample").generator().permutation(len(dataset))[:n]
    return dataset.take(idx)


# ---------------------------------------------------------------- normalisation

def minmax_record(dataset: Dataset) -> dict:
    return {"kind": "minmax", "min": float(dataset.inputs.min()), "max": float(dataset.inputs.max())}


def standard_record(dataset: Dataset) -> dict:
    return {"kind": "standard", "mean": float(dataset.inputs.mean()), "std": float(dataset.inputs.std())}


def normalize(dataset: Dataset, record: dict | None = None, kind: str = "minmax") -> Dataset:
    """Affine input normalisation from a global record.

    ``minmax`` maps onto [0, 1]; ``standard`` subtracts the mean and divides by
    the std. Pass the training split's record to normalise other splits alike.
    """
    if record is None:
        record = minmax_record(dataset) if kind == "minmax" else standard_record(dataset)
    if record["kind"] == "minmax":
        shift, scale = record["min"], record["max"] - record["min"]
    elif record["kind"] == "standard":
        shift, scale = record["mean"], record["std"]
    else:
        raise ParameterError(f"unknown normalisation kind {record['kind']!r}")
    if scale <= 0:
        raise ParameterError("degenerate normalisation range")
    return replace(dataset, inputs=(dataset.inputs - shift) / scale, normalization=dict(record))


def feature_box(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature (min, max) over the dataset."""
    return dataset.inputs.min(axis=0), dataset.inputs.max(axis=0)


# ---------------------------------------------------------------- manifest

def write_manifest(path, entries: dict) -> None:
    Path(path).write_text(json.dumps(entries, sort_keys=True, indent=1))


def read_manifest(path) -> dict:
    return json.loads(Path(path).read_text())
