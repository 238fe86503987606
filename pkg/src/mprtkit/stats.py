"""Ranking and the Wilcoxon signed-rank test."""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from mprtkit.core import ParameterError, ShapeError

EXACT_MAX_N = 25


def rankdata(values) -> np.ndarray:
    """1-based ranks; tied values share the average of their positions."""
    v = np.asarray(values, dtype=np.float64).ravel()
    n = v.size
    if n == 0:
        raise ParameterError("cannot rank an empty sequence")
    order = np.argsort(v, kind="mergesort")
    sv = v[order]
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks


class WilcoxonResult(NamedTuple):
    statistic: float   # min(W+, W-)
    pvalue: float      # two-sided
    n: int             # non-zero differences used


def _exact_counts(doubled_ranks: np.ndarray) -> np.ndarray:
    """Number of sign assignments giving each value of 2*W+ (ranks doubled to integers)."""
    total = int(doubled_ranks.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled_ranks:
        r = int(r)
        counts[r:] = counts[r:] + counts[:total + 1 - r].copy()
    return counts


def wilcoxon_signed_rank(x, y=None) -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are discarded before ranking. With at most
    ``EXACT_MAX_N`` remaining differences the null distribution is enumerated
    exactly (tied absolute differences keep their average ranks). Beyond
    that a normal approximation with tie and continuity correction is used.
    If every difference is zero the result is ``(0, 1.0)``.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    d = x if y is None else x - _paired(x, y)
    d = d[d != 0]
    n = d.size
    if n == 0:
        return WilcoxonResult(0.0, 1.0, 0)
    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    w_minus = float(ranks[d < 0].sum())
    stat = min(w_plus, w_minus)

    if n <= EXACT_MAX_N:
        doubled = np.rint(2 * ranks).astype(np.int64)
        counts = _exact_counts(doubled)
        w2 = int(round(2 * w_plus))
        le = int(counts[:w2 + 1].sum())
        ge = int(counts[w2:].sum())
        p = min(1.0, 2.0 * min(le, ge) / float(2 ** n))
    else:
        mean = n * (n + 1) / 4.0
        _, tie_counts = np.unique(np.abs(d), return_counts=True)
        var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts ** 3 - tie_counts)) / 48.0
        diff = w_plus - mean
        z = (abs(diff) - 0.5) / math.sqrt(var) if abs(diff) >= 0.5 else 0.0
        p = min(1.0, math.erfc(z / math.sqrt(2.0)))
    return WilcoxonResult(stat, p, n)


def _paired(x, y):
    y = np.asarray(y, dtype=np.float64).ravel()
    if y.shape != x.shape:
        raise ShapeError(f"paired samples differ in length ({x.size} vs {y.size})")
    return y
