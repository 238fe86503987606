"""Time the numba kernels against their numpy twins, plus one end-to-end MPRT run.

    python benchmarks/bench_kernels.py [--repeat 20]

The kernel table needs numba installed. The end-to-end row reflects whichever
backend the process imported (set MPRTKIT_NO_NUMBA=1 for the numpy path).
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from mprtkit import _kernels as K


def _time(fn, args, repeat):
    fn(*args)                                   # warm-up (JIT compile)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    x = rng.normal(size=(32, 4, 16, 16))
    w = rng.normal(size=(8, 4, 3, 3))
    b = rng.normal(size=8)
    y = K.NUMPY_KERNELS["conv2d_forward"](x, w, b, 1)
    px = rng.normal(size=(32, 8, 16, 16))
    out, arg = K.NUMPY_KERNELS["maxpool2d_forward"](px, 2)
    v = rng.normal(size=256 * 100)
    return {
        "conv2d_forward": (x, w, b, 1),
        "conv2d_backward_input": (y, w, x.shape, 1),
        "conv2d_backward_params": (y, x, w.shape, 1),
        "maxpool2d_forward": (px, 2),
        "maxpool2d_backward": (out, arg, 2, px.shape),
        "histogram_counts": (v, float(v.min()), float(v.max()), 100),
    }


def end_to_end(repeat):
    from mprtkit.attribution import MethodConfig
    from mprtkit.metrics import mprt
    from mprtkit.nn import toy_cnn

    model = toy_cnn(seed=0)
    X = np.random.default_rng(1).normal(size=(10, 1, 16, 16))
    return _time(lambda: mprt(model, X, MethodConfig("Gradient")), (), max(1, repeat // 5))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"active backend: {K.BACKEND}")
    if K.HAS_NUMBA:
        print(f"{'kernel':<26}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
        for name, a in cases(rng).items():
            tn = _time(K.NUMPY_KERNELS[name], a, args.repeat)
            tb = _time(K.NUMBA_KERNELS[name], a, args.repeat)
            print(f"{name:<26}{tn * 1e3:>10.3f}{tb * 1e3:>10.3f}{tn / tb:>8.1f}x")
    else:
        print("numba unavailable (or disabled); kernel comparison skipped")
    print(f"mprt Gradient, 10 samples, toy_cnn: {end_to_end(args.repeat) * 1e3:.1f} ms ({K.BACKEND})")


if __name__ == "__main__":
    main()
