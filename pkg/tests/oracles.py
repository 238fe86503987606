"""Independent reference implementations used only by the tests.

Each oracle takes the slow, obvious route (explicit loops, brute force,
textbook formulas) and shares no code with the package under test.
"""
from __future__ import annotations

import itertools
import math

import numpy as np


def central_differences(f, x, h=1e-5):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        hi = f(x)
        flat[i] = old - h
        lo = f(x)
        flat[i] = old
        gf[i] = (hi - lo) / (2 * h)
    return g


def conv2d_loops(x, w, b, padding):
    B, C, H, W = x.shape
    O, _, kh, kw = w.shape
    Ho, Wo = H + 2 * padding - kh + 1, W + 2 * padding - kw + 1
    out = np.zeros((B, O, Ho, Wo))
    for n in range(B):
        for o in range(O):
            for i in range(Ho):
                for j in range(Wo):
                    s = b[o]
                    for c in range(C):
                        for di in range(kh):
                            for dj in range(kw):
                                ii, jj = i + di - padding, j + dj - padding
                                if 0 <= ii < H and 0 <= jj < W:
                                    s += x[n, c, ii, jj] * w[o, c, di, dj]
                    out[n, o, i, j] = s
    return out


def wilcoxon_bruteforce(d):
    """Two-sided p by enumerating all 2^n sign assignments of the ranked |d|."""
    d = [v for v in d if v != 0]
    n = len(d)
    if n == 0:
        return 1.0
    absd = [abs(v) for v in d]
    order = sorted(range(n), key=lambda i: absd[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and absd[order[j + 1]] == absd[order[i]]:
            j += 1
        for k in range(i, j + 1):
            ranks[order[k]] = (i + j + 2) / 2.0
        i = j + 1
    w_obs = sum(r for r, v in zip(ranks, d) if v > 0)
    le = ge = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w <= w_obs + 1e-9:
            le += 1
        if w >= w_obs - 1e-9:
            ge += 1
    return min(1.0, 2.0 * min(le, ge) / 2 ** n)


def ranks_by_sort(values):
    """Average 1-based ranks by counting strictly-smaller / equal elements."""
    v = list(values)
    out = []
    for a in v:
        less = sum(1 for b in v if b < a)
        eq = sum(1 for b in v if b == a)
        out.append(less + (eq + 1) / 2.0)
    return np.array(out)


def ssim_loops(a, b, win=7, k1=0.01, k2=0.03, data_range=None):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if data_range is None:
        data_range = max(a.max(), b.max()) - min(a.min(), b.min())
    c1, c2 = (k1 * data_range) ** 2, (k2 * data_range) ** 2
    H, W = a.shape
    vals = []
    for i in range(H - win + 1):
        for j in range(W - win + 1):
            pa = a[i:i + win, j:j + win].ravel()
            pb = b[i:i + win, j:j + win].ravel()
            ma, mb = pa.mean(), pb.mean()
            va = np.var(pa, ddof=1)
            vb = np.var(pb, ddof=1)
            cov = np.sum((pa - ma) * (pb - mb)) / (pa.size - 1)
            vals.append(((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma ** 2 + mb ** 2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def histogram_entropy_loops(e, bins):
    v = np.asarray(e, dtype=np.float64).ravel()
    lo, hi = v.min(), v.max()
    counts = [0] * bins
    for x in v:
        if hi == lo:
            k = bins // 2
        else:
            k = int(math.floor((x - lo) / (hi - lo) * bins))
            k = min(max(k, 0), bins - 1)
        counts[k] += 1
    h = 0.0
    for c in counts:
        if c:
            p = c / v.size
            h -= p * math.log(p)
    return h


def joint_rank_ar_bruteforce(base, pert):
    """IEC_AR by explicit inspection: for each method, does its perturbed quality
    occupy a strictly worse joint rank than its base quality?

    Joint ranks (1 = best) over the 2k values are computed by counting, with
    ties sharing average ranks.
    """
    methods = sorted(base)
    pool = [base[m] for m in methods] + [pert[m] for m in methods]

    def rank(v):
        better = sum(1 for u in pool if u > v)
        eq = sum(1 for u in pool if u == v)
        return better + (eq + 1) / 2.0

    return sum(rank(pert[m]) > rank(base[m]) for m in methods) / len(methods)


def accuracy_by_count(model_predict, X, y):
    hits = 0
    for xi, yi in zip(X, y):
        if int(np.argmax(model_predict(xi[None])[0])) == int(yi):
            hits += 1
    return hits / len(y)
