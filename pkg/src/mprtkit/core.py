"""Tensors, keyed random streams and the shared error hierarchy."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np


class MprtError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(MprtError, ValueError):
    """An argument lies outside its admissible domain."""


class ShapeError(MprtError, ValueError):
    """Array shapes are incompatible."""


class NumericError(MprtError, ArithmeticError):
    """A computation produced NaN or Inf."""


class DegenerateAttributionError(MprtError, ValueError):
    """An attribution map carries no signal (e.g. it is identically zero)."""


class UnsupportedMethodError(MprtError, ValueError):
    """An attribution method cannot be applied to the given model."""


def tensor(data, shape=None) -> np.ndarray:
    """Build a read-only float64 array, rejecting NaN/Inf.

    Tensors in this package are plain ``numpy.ndarray`` objects; this helper
    enforces the dtype, finiteness and immutability conventions.
    """
    arr = np.array(data, dtype=np.float64)
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if any(s <= 0 for s in shape):
            raise ShapeError(f"shape entries must be positive, got {shape}")
        if arr.size != int(np.prod(shape)):
            raise ShapeError(f"{arr.size} values cannot fill shape {shape}")
        arr = arr.reshape(shape)
    check_finite(arr)
    arr.setflags(write=False)
    return arr


def check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{what} contains non-finite values")
    return arr


def derive_stream_id(*tags) -> int:
    """Hash a tuple of ints/strings into a 64-bit stream id.

    The mapping is stable across processes and platforms, so per-sample
    streams can be rebuilt from (sample index, purpose) alone.
    """
    h = hashlib.blake2b(digest_size=8)
    for tag in tags:
        if isinstance(tag, str):
            h.update(b"s" + tag.encode() + b"\x00")
        else:
            h.update(b"i" + int(tag).to_bytes(16, "little", signed=True))
    return int.from_bytes(h.digest(), "little")


@dataclass(frozen=True)
class RngStream:
    """A keyed, counter-based random stream (Philox keyed by seed and stream id).

    Calling :meth:`generator` always restarts the stream from its beginning,
    so the stream is a value: equal streams yield equal sequences.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed & 0xFFFFFFFFFFFFFFFF, self.stream_id & 0xFFFFFFFFFFFFFFFF],
                       dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *tags) -> "RngStream":
        """Sub-stream identified by ``tags`` relative to this one."""
        return RngStream(self.seed, derive_stream_id(self.stream_id, *tags))


def _shape(shape) -> tuple[int, ...]:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    return tuple(int(s) for s in shape)


def sample_normal(stream: RngStream, shape, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
    if std < 0:
        raise ParameterError(f"std must be non-negative, got {std}")
    shape = _shape(shape)
    if std == 0:
        return tensor(np.full(shape, float(mean)))
    return tensor(stream.generator().normal(mean, std, size=shape))


def sample_uniform(stream: RngStream, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
    if lo > hi:
        raise ParameterError(f"lo must not exceed hi ({lo} > {hi})")
    shape = _shape(shape)
    if lo == hi:
        return tensor(np.full(shape, float(lo)))
    return tensor(stream.generator().uniform(lo, hi, size=shape))
