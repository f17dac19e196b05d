"""Timing comparison of the compiled and pure-numpy kernel paths.

Runs each hot kernel on representative shapes and prints a table of
per-call times plus the speedup of the compiled path. Compilation time
is excluded by a warmup call per kernel and shape.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from amcr import kernels
from amcr.backend import NUMBA_AVAILABLE


def _time(fn, args, repeat):
    fn(*args)  # warmup; also triggers compilation for the numba path
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    x_small = rng.normal(size=(16, 32, 32))
    x_big = rng.normal(size=(48, 128, 128))
    k_small = rng.normal(size=(32, 16, 3, 3))
    k_big = rng.normal(size=(64, 48, 3, 3))
    dy_small = rng.normal(size=(32, 16, 16))
    dy_big = rng.normal(size=(64, 64, 64))

    cases = [
        ("conv2d fwd 16x32x32",
         (kernels.conv2d_forward_nb, kernels.conv2d_forward_np),
         (x_small, k_small, 2, 1)),
        ("conv2d fwd 48x128x128",
         (kernels.conv2d_forward_nb, kernels.conv2d_forward_np),
         (x_big, k_big, 2, 1)),
        ("conv2d bwd-in 16x32x32",
         (kernels.conv2d_backward_input_nb, kernels.conv2d_backward_input_np),
         (dy_small, k_small, 2, 1, 32, 32)),
        ("conv2d bwd-k 48x128x128",
         (kernels.conv2d_backward_kernel_nb, kernels.conv2d_backward_kernel_np),
         (dy_big, x_big, 2, 1, 3, 3)),
        ("adaptive pool 48x128x128",
         (kernels.adaptive_avg_pool_forward_nb,
          kernels.adaptive_avg_pool_forward_np),
         (x_big, 19, 19)),
        ("bilinear resize 3x480x640",
         (kernels.bilinear_resize_nb, kernels.bilinear_resize_np),
         (rng.normal(size=(3, 480, 640)), 224, 224)),
    ]

    print(f"{'kernel':<28} {'numba':>10} {'numpy':>10} {'speedup':>8}")
    for name, (fn_nb, fn_np), call_args in cases:
        t_np = _time(fn_np, call_args, args.repeat)
        if NUMBA_AVAILABLE:
            t_nb = _time(fn_nb, call_args, args.repeat)
            print(f"{name:<28} {t_nb * 1e3:>8.2f}ms {t_np * 1e3:>8.2f}ms "
                  f"{t_np / t_nb:>7.1f}x")
        else:
            print(f"{name:<28} {'n/a':>10} {t_np * 1e3:>8.2f}ms {'':>8}")


if __name__ == "__main__":
    main()
