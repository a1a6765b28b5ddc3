"""Compiled vs numpy kernels, and dense vs associative decoding.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import time

import numpy as np

from graphite import _fallback
from graphite import model as M

try:
    from graphite import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_kernels(repeat):
    rng = np.random.default_rng(0)
    n, k, count = 2708, 16, 10556
    x = rng.normal(size=(n, n))
    t = (rng.random((n, n)) < 0.002).astype(np.float64)
    z = rng.normal(size=(n, k))
    rows = rng.integers(0, n, count).astype(np.int64)
    cols = rng.integers(0, n, count).astype(np.int64)
    g = rng.normal(size=count)
    cases = [
        ("bce_logits n=2708", lambda m: m.bce_logits(x, t, 200.0, None)),
        ("pair_dot |E|=10556", lambda m: m.pair_dot(z, rows, cols)),
        ("pair_dot_backward", lambda m: m.pair_dot_backward(z, rows, cols, g)),
    ]
    print(f"{'kernel':24s} {'python s':>10s} {'compiled s':>11s} {'speedup':>8s}")
    for name, fn in cases:
        tp = best_of(lambda: fn(_fallback), repeat)
        if _kernels is None:
            print(f"{name:24s} {tp:10.4f} {'n/a':>11s}")
            continue
        tc = best_of(lambda: fn(_kernels), repeat)
        print(f"{name:24s} {tp:10.4f} {tc:11.4f} {tp / tc:8.1f}x")


def bench_decode(repeat):
    rng = np.random.default_rng(1)
    print(f"\n{'n':>6s} {'dense s':>9s} {'fast s':>9s}")
    for n in (1024, 2048, 4096):
        z = rng.normal(size=(n, 16))
        h = rng.normal(size=(n, 32))
        td = best_of(lambda: M.intermediate_graph(z).data @ h, repeat)
        tf = best_of(lambda: M.decode_fast(z, h), repeat)
        print(f"{n:6d} {td:9.4f} {tf:9.4f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    bench_kernels(a.repeat)
    bench_decode(a.repeat)
