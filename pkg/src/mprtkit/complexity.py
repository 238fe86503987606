"""Histogram entropy of attribution maps."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from mprtkit import _kernels as K
from mprtkit.core import ParameterError


@dataclass(frozen=True)
class HistogramSpec:
    bins: int = 100

    def __post_init__(self):
        if self.bins < 2:
            raise ParameterError(f"need at least 2 bins, got {self.bins}")


@dataclass(frozen=True)
class BinEdges:
    edges: np.ndarray
    degenerate: bool = False  # constant input: every value lands in one bin


def bin_edges(e, bins: int) -> BinEdges:
    """``bins`` equal-width bins over [min(e), max(e)].

    A constant input gets edges centred on its value (unit total width) and is
    flagged as degenerate.
    """
    if bins < 2:
        raise ParameterError(f"need at least 2 bins, got {bins}")
    v = np.asarray(e, dtype=np.float64).ravel()
    lo, hi = float(v.min()), float(v.max())
    if lo == hi:
        return BinEdges(np.linspace(lo - 0.5, lo + 0.5, bins + 1), degenerate=True)
    return BinEdges(np.linspace(lo, hi, bins + 1))


def histogram(e, spec: HistogramSpec = HistogramSpec()) -> tuple[np.ndarray, BinEdges]:
    v = np.ascontiguousarray(np.asarray(e, dtype=np.float64).ravel())
    if v.size == 0:
        raise ParameterError("histogram of an empty map")
    be = bin_edges(v, spec.bins)
    if be.degenerate:
        counts = np.zeros(spec.bins, dtype=np.int64)
        counts[spec.bins // 2] = v.size
        return counts, be
    # Bin index comes from the relative position in [min, max], so positive
    # affine maps of ``e`` give the same counts up to round-off at bin edges.
    counts = K.histogram_counts(v, be.edges[0], be.edges[-1], spec.bins)
    return counts, be


def histogram_entropy(e, spec: HistogramSpec = HistogramSpec()) -> float:
    """Discrete entropy (nats) of the value histogram of ``e``; lies in [0, ln B]."""
    counts, _ = histogram(e, spec)
    c = counts[counts > 0].astype(np.float64)
    p = c / c.sum()
    h = float(-np.sum(p * np.log(p)))
    return min(max(0.0, h), math.log(spec.bins))
