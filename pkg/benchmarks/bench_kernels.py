"""Benchmark the compiled kernels against the pure-numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeats N]

Times im2col / col2im / max-pool forward+backward on a conv-net-sized
workload for both backends and prints the speedup of the compiled path.
"""

import argparse
import time

import numpy as np

from etfw.numcore import _slow

try:
    from etfw.numcore import _fast
except ImportError:
    _fast = None


def _time(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if _fast is None:
        print("compiled extension not built; nothing to compare")
        return

    rng = np.random.default_rng(0)
    x = rng.normal(size=(32, 32, 28, 28))
    kh = kw = 3
    stride, pad = 1, 1
    oh = (28 + 2 * pad - kh) // stride + 1
    ow = (28 + 2 * pad - kw) // stride + 1
    cols = rng.normal(size=(32 * oh * ow, 32 * kh * kw))
    xp = rng.normal(size=(32, 32, 28, 28))
    pout, parg = _slow.maxpool_forward(xp, 2, 2)
    g = rng.normal(size=pout.shape)

    cases = [
        ("im2col", lambda m: m.im2col(x, kh, kw, stride, pad)),
        ("col2im", lambda m: m.col2im(cols, x.shape, kh, kw, stride, pad)),
        ("maxpool_forward", lambda m: m.maxpool_forward(xp, 2, 2)),
        ("maxpool_backward", lambda m: m.maxpool_backward(g, parg, xp.shape, 2, 2)),
    ]

    print(f"{'kernel':<18} {'numpy (ms)':>12} {'cython (ms)':>12} {'speedup':>9}")
    for name, fn in cases:
        t_np = _time(lambda: fn(_slow), args.repeats)
        t_cy = _time(lambda: fn(_fast), args.repeats)
        print(f"{name:<18} {t_np * 1e3:>12.2f} {t_cy * 1e3:>12.2f} "
              f"{t_np / t_cy:>8.2f}x")


if __name__ == "__main__":
    main()
