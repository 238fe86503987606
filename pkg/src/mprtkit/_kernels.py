"""Hot numeric kernels: convolution, max-pooling and histogram counting.

Every kernel has two implementations with identical signatures:

* ``*_numba``: explicit loops compiled with ``numba.njit``.
* ``*_numpy``: vectorised NumPy (im2col / reshape tricks).

The active backend is chosen once at import time. Set the environment
variable ``MPRTKIT_NO_NUMBA=1`` (or uninstall numba) to force the NumPy path.
Both paths agree to floating point round-off; within one process only one
backend is used, so bit-level reproducibility holds per backend.
"""
from __future__ import annotations

import os

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_DISABLED = os.environ.get("MPRTKIT_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by MPRTKIT_NO_NUMBA")
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - depends on environment
    HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


BACKEND = "numba" if HAS_NUMBA else "numpy"


# --------------------------------------------------------------------------
# NumPy implementations
# --------------------------------------------------------------------------

def _pad(x, padding):
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def conv2d_forward_numpy(x, w, b, padding):
    """x: (B, C, H, W), w: (O, C, kh, kw), b: (O,) -> (B, O, Ho, Wo)."""
    O, C, kh, kw = w.shape
    xp = _pad(x, padding)
    # (B, C, Ho, Wo, kh, kw) -> (B, Ho, Wo, C*kh*kw)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    B, _, Ho, Wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    out = cols @ w.reshape(O, -1).T + b
    return np.ascontiguousarray(out.reshape(B, Ho, Wo, O).transpose(0, 3, 1, 2))


def conv2d_backward_input_numpy(g, w, x_shape, padding):
    """Gradient of the conv output ``g`` (B, O, Ho, Wo) w.r.t. its input."""
    O, C, kh, kw = w.shape
    B, _, H, W = x_shape
    Ho, Wo = g.shape[2], g.shape[3]
    gm = g.transpose(0, 2, 3, 1).reshape(-1, O)
    dcols = (gm @ w.reshape(O, -1)).reshape(B, Ho, Wo, C, kh, kw)
    dxp = np.zeros((B, C, H + 2 * padding, W + 2 * padding))
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + Ho, j:j + Wo] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    if padding:
        dxp = dxp[:, :, padding:-padding, padding:-padding]
    return np.ascontiguousarray(dxp)


def conv2d_backward_params_numpy(g, x, w_shape, padding):
    O, C, kh, kw = w_shape
    xp = _pad(x, padding)
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    B, _, Ho, Wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(B * Ho * Wo, C * kh * kw)
    gm = g.transpose(0, 2, 3, 1).reshape(-1, O)
    dw = (gm.T @ cols).reshape(O, C, kh, kw)
    db = g.sum(axis=(0, 2, 3))
    return dw, db


def maxpool2d_forward_numpy(x, k):
    """Non-overlapping k x k max-pool. Returns (out, argmax) where argmax is the
    row-major offset inside each window; ties resolve to the first maximum."""
    B, C, H, W = x.shape
    Ho, Wo = H // k, W // k
    blocks = x.reshape(B, C, Ho, k, Wo, k).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, Ho, Wo, k * k)
    arg = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool2d_backward_numpy(g, arg, k, x_shape):
    B, C, H, W = x_shape
    Ho, Wo = H // k, W // k
    blocks = np.zeros((B, C, Ho, Wo, k * k))
    np.put_along_axis(blocks, arg[..., None], g[..., None], axis=-1)
    return np.ascontiguousarray(
        blocks.reshape(B, C, Ho, Wo, k, k).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)
    )


def histogram_counts_numpy(values, lo, hi, bins):
    """Equal-width bin counts on [lo, hi]; the right edge belongs to the last bin."""
    idx = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    np.clip(idx, 0, bins - 1, out=idx)
    return np.bincount(idx, minlength=bins).astype(np.int64)


# --------------------------------------------------------------------------
# Numba implementations
# --------------------------------------------------------------------------

@njit(cache=True, nogil=True)
def _pad_numba(x, padding):
    B, C, H, W = x.shape
    xp = np.zeros((B, C, H + 2 * padding, W + 2 * padding))
    xp[:, :, padding:padding + H, padding:padding + W] = x
    return xp


@njit(cache=True, nogil=True)
def conv2d_forward_numba(x, w, b, padding):
    xp = _pad_numba(x, padding)
    B, C, Hp, Wp = xp.shape
    O, _, kh, kw = w.shape
    Ho, Wo = Hp - kh + 1, Wp - kw + 1
    out = np.empty((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            acc = out[n, o]
            acc[:, :] = b[o]
            for c in range(C):
                for di in range(kh):
                    for dj in range(kw):
                        wv = w[o, c, di, dj]
                        for i in range(Ho):
                            row = xp[n, c, i + di]
                            for j in range(Wo):
                                acc[i, j] += wv * row[j + dj]
    return out


@njit(cache=True, nogil=True)
def _conv2d_backward_input_numba(g, w, B, H, W, padding):
    O, C, kh, kw = w.shape
    Ho, Wo = g.shape[2], g.shape[3]
    dxp = np.zeros((B, C, H + 2 * padding, W + 2 * padding))
    for n in range(B):
        for c in range(C):
            dst = dxp[n, c]
            for o in range(O):
                go = g[n, o]
                for di in range(kh):
                    for dj in range(kw):
                        wv = w[o, c, di, dj]
                        for i in range(Ho):
                            row = dst[i + di]
                            for j in range(Wo):
                                row[j + dj] += wv * go[i, j]
    return np.ascontiguousarray(dxp[:, :, padding:padding + H, padding:padding + W])


def conv2d_backward_input_numba(g, w, x_shape, padding):
    B, _, H, W = x_shape
    return _conv2d_backward_input_numba(g, w, B, H, W, padding)


@njit(cache=True, nogil=True)
def _conv2d_backward_params_numba(g, x, kh, kw, padding):
    xp = _pad_numba(x, padding)
    B, C = x.shape[0], x.shape[1]
    O, Ho, Wo = g.shape[1], g.shape[2], g.shape[3]
    dw = np.zeros((O, C, kh, kw))
    db = np.zeros(O)
    for n in range(B):
        for o in range(O):
            go = g[n, o]
            db[o] += go.sum()
            for c in range(C):
                for di in range(kh):
                    for dj in range(kw):
                        acc = 0.0
                        for i in range(Ho):
                            row = xp[n, c, i + di]
                            for j in range(Wo):
                                acc += go[i, j] * row[j + dj]
                        dw[o, c, di, dj] += acc
    return dw, db


def conv2d_backward_params_numba(g, x, w_shape, padding):
    return _conv2d_backward_params_numba(g, x, w_shape[2], w_shape[3], padding)


@njit(cache=True, nogil=True)
def _maxpool2d_forward_numba(x, k):
    B, C, H, W = x.shape
    Ho, Wo = H // k, W // k
    out = np.empty((B, C, Ho, Wo))
    arg = np.empty((B, C, Ho, Wo), dtype=np.int64)
    for n in range(B):
        for c in range(C):
            for i in range(Ho):
                for j in range(Wo):
                    best = x[n, c, i * k, j * k]
                    pos = 0
                    for di in range(k):
                        for dj in range(k):
                            v = x[n, c, i * k + di, j * k + dj]
                            if v > best:
                                best = v
                                pos = di * k + dj
                    out[n, c, i, j] = best
                    arg[n, c, i, j] = pos
    return out, arg


def maxpool2d_forward_numba(x, k):
    return _maxpool2d_forward_numba(x, k)


@njit(cache=True, nogil=True)
def _maxpool2d_backward_numba(g, arg, k, B, C, H, W):
    dx = np.zeros((B, C, H, W))
    Ho, Wo = g.shape[2], g.shape[3]
    for n in range(B):
        for c in range(C):
            for i in range(Ho):
                for j in range(Wo):
                    pos = arg[n, c, i, j]
                    dx[n, c, i * k + pos // k, j * k + pos % k] += g[n, c, i, j]
    return dx


def maxpool2d_backward_numba(g, arg, k, x_shape):
    B, C, H, W = x_shape
    return _maxpool2d_backward_numba(g, arg, k, B, C, H, W)


@njit(cache=True, nogil=True)
def histogram_counts_numba(values, lo, hi, bins):
    counts = np.zeros(bins, dtype=np.int64)
    span = hi - lo
    for v in values:
        idx = int(np.floor((v - lo) / span * bins))
        if idx < 0:
            idx = 0
        elif idx > bins - 1:
            idx = bins - 1
        counts[idx] += 1
    return counts


# --------------------------------------------------------------------------
# dispatch
# --------------------------------------------------------------------------

NUMPY_KERNELS = {
    "conv2d_forward": conv2d_forward_numpy,
    "conv2d_backward_input": conv2d_backward_input_numpy,
    "conv2d_backward_params": conv2d_backward_params_numpy,
    "maxpool2d_forward": maxpool2d_forward_numpy,
    "maxpool2d_backward": maxpool2d_backward_numpy,
    "histogram_counts": histogram_counts_numpy,
}

NUMBA_KERNELS = {
    "conv2d_forward": conv2d_forward_numba,
    "conv2d_backward_input": conv2d_backward_input_numba,
    "conv2d_backward_params": conv2d_backward_params_numba,
    "maxpool2d_forward": maxpool2d_forward_numba,
    "maxpool2d_backward": maxpool2d_backward_numba,
    "histogram_counts": histogram_counts_numba,
}

_ACTIVE = NUMBA_KERNELS if HAS_NUMBA else NUMPY_KERNELS

conv2d_forward = _ACTIVE["conv2d_forward"]
conv2d_backward_input = _ACTIVE["conv2d_backward_input"]
conv2d_backward_params = _ACTIVE["conv2d_backward_params"]
maxpool2d_forward = _ACTIVE["maxpool2d_forward"]
maxpool2d_backward = _ACTIVE["maxpool2d_backward"]
histogram_counts = _ACTIVE["histogram_counts"]
