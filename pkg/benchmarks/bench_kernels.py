"""Benchmark the compiled kernels against the pure-NumPy fallback.

Runs the hot paths (conv2d forward/backward, bilinear warp
forward/backward, and a full displacement-network forward+backward) on
both backends and prints the speedup. Usage:

    python benchmarks/bench_kernels.py [--size 192] [--repeats 5]
"""

import argparse
import importlib
import os
import time

import numpy as np


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _use_backend(name):
    os.environ["GROUPREG_BACKEND"] = name
    import groupreg.backend
    importlib.reload(groupreg.backend)
    return groupreg.backend


def bench_backend(name, size, repeats):
    backend = _use_backend(name)
    rng = np.random.default_rng(0)
    results = {}

    x = rng.standard_normal((1, 16, size, size)).astype(np.float32)
    k = rng.standard_normal((16, 16, 3, 3)).astype(np.float32)
    b = np.zeros(16, dtype=np.float32)
    y = backend.conv2d_forward(x, k, b, 1, 1)
    gy = np.ones_like(y)
    results["conv2d 16ch 3x3 fwd"] = _time(lambda: backend.conv2d_forward(x, k, b, 1, 1),
                                           repeats)
    results["conv2d 16ch 3x3 bwd"] = _time(lambda: backend.conv2d_backward(gy, x, k, 1, 1),
                                           repeats)

    src = rng.standard_normal((size, size))
    u = rng.standard_normal((2, size, size)) * 2
    w = backend.warp_forward(src, u)
    gw = np.ones_like(w)
    results["bilinear warp fwd"] = _time(lambda: backend.warp_forward(src, u), repeats)
    results["bilinear warp bwd"] = _time(lambda: backend.warp_backward(gw, src, u), repeats)

    from groupreg.model import RegistrationModel, predict_displacement
    from groupreg import tensor as T
    model = RegistrationModel(seed=0)
    t_img = rng.standard_normal((size, size)).astype(np.float32)
    s_img = rng.standard_normal((size, size)).astype(np.float32)

    def run_model():
        loss = T.mean_all(T.square(predict_displacement(model, t_img, s_img)))
        for p in model.parameters():
            p.zero_grad()
        loss.backward()

    results["network fwd+bwd"] = _time(run_model, max(repeats // 2, 1))
    return results


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=192)
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    py = bench_backend("python", args.size, args.repeats)
    try:
        comp = bench_backend("compiled", args.size, args.repeats)
    except ValueError:
        comp = None

    print(f"size {args.size}x{args.size}, best of {args.repeats}")
    print(f"{'kernel':24s} {'python':>11s} {'compiled':>11s} {'speedup':>8s}")
    for name, py_t in py.items():
        if comp is None:
            print(f"{name:24s} {py_t * 1e3:9.2f}ms {'n/a':>11s} {'n/a':>8s}")
        else:
            c_t = comp[name]
            print(f"{name:24s} {py_t * 1e3:9.2f}ms {c_t * 1e3:9.2f}ms "
                  f"{py_t / c_t:7.2f}x")


if __name__ == "__main__":
    main()
