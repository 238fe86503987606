"""Attribution normalisation and similarity measures."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from mprtkit.core import DegenerateAttributionError, ParameterError, ShapeError
from mprtkit.stats import rankdata


def normalize_second_moment(e) -> np.ndarray:
    """Divide by the root of the mean squared value; the result has unit second moment."""
    e = np.asarray(e, dtype=np.float64)
    ms = np.mean(e * e)
    if ms == 0:
        raise DegenerateAttributionError("attribution is identically zero")
    return e / np.sqrt(ms)


@dataclass(frozen=True)
class SsimParams:
    window: int = 7
    k1: float = 0.01
    k2: float = 0.03
    data_range: float | None = None  # None: joint range of the two maps

    def __post_init__(self):
        if self.window < 1 or self.window % 2 == 0:
            raise ParameterError("SSIM window must be a positive odd integer")
        if self.data_range is not None and self.data_range <= 0:
            raise ParameterError("data_range must be positive")


def _as_2d(a):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim == 3 and a.shape[0] == 1:
        a = a[0]
    if a.ndim == 1:
        a = a[None, :]
    if a.ndim != 2:
        raise ShapeError(f"SSIM needs 2-D maps, got shape {a.shape}")
    return a


def ssim(a, b, params: SsimParams = SsimParams()) -> float:
    """Mean SSIM over all valid (uniform) windows.

    Local variances use the unbiased (n-1) normalisation. The expression is
    written so that swapping ``a`` and ``b`` is bit-exact, and ``ssim(a, a)``
    is exactly 1.
    """
    a, b = _as_2d(a), _as_2d(b)
    if a.shape != b.shape:
        raise ShapeError(f"SSIM maps differ in shape: {a.shape} vs {b.shape}")
    win = params.window
    if win > min(a.shape):
        raise ShapeError(f"SSIM window {win} exceeds map size {a.shape}")
    if params.data_range is None:
        rng = max(a.max(), b.max()) - min(a.min(), b.min())
        rng = rng if rng > 0 else 1.0
    else:
        rng = params.data_range
    c1 = (params.k1 * rng) ** 2
    c2 = (params.k2 * rng) ** 2

    npx = win * win
    wa = sliding_window_view(a, (win, win))
    wb = sliding_window_view(b, (win, win))
    ua = wa.mean(axis=(-2, -1))
    ub = wb.mean(axis=(-2, -1))
    da = wa - ua[..., None, None]
    db = wb - ub[..., None, None]
    cov_norm = npx / (npx - 1) if npx > 1 else 1.0
    vaa = (da * da).mean(axis=(-2, -1)) * cov_norm
    vbb = (db * db).mean(axis=(-2, -1)) * cov_norm
    vab = (da * db).mean(axis=(-2, -1)) * cov_norm
    num = (2 * ua * ub + c1) * (2 * vab + c2)
    den = (ua * ua + ub * ub + c1) * (vaa + vbb + c2)
    # den == 0 only when both windows are all-zero (c1, c2 underflowed): identical
    ratio = np.divide(num, den, out=np.ones_like(den), where=den != 0)
    return float(np.mean(ratio))


def spearman(a, b) -> float:
    """Spearman rank correlation on row-major flattened inputs (average ranks for ties)."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ShapeError("spearman inputs differ in length")
    if a.size < 2:
        raise ParameterError("spearman needs at least two values")
    ra, rb = rankdata(a), rankdata(b)
    ra -= ra.mean()
    rb -= rb.mean()
    den = np.sqrt(np.sum(ra * ra) * np.sum(rb * rb))
    if den == 0:
        raise ParameterError("spearman correlation undefined for constant input")
    return float(np.clip(np.sum(ra * rb) / den, -1.0, 1.0))


def curve_auc(xs, ys) -> float:
    """Trapezoidal area under (xs, ys), divided by the x-span."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.size < 2 or xs.shape != ys.shape:
        raise ParameterError("curve_auc needs at least two (x, y) points")
    if np.any(np.diff(xs) <= 0):
        raise ParameterError("xs must be strictly increasing")
    area = float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) / 2.0))
    return area / float(xs[-1] - xs[0])


SIMILARITIES = {
    "ssim": lambda a, b: ssim(a, b),
    "spearman": spearman,
}


def get_similarity(name):
    if callable(name):
        return name
    try:
        return SIMILARITIES[str(name).lower()]
    except KeyError:
        raise ParameterError(f"unknown similarity {name!r}") from None
