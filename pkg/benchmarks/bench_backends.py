#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallbacks.

Times the two hot operations (Gaussian kernel matrices, multi-target
ADMM lasso) on a range of sizes and prints a comparison table.

Usage:
  python benchmarks/bench_backends.py [--repeats 5]
"""

import argparse
import time

import numpy as np

from zslembed import backends


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_kernel(repeats):
    rng = np.random.default_rng(0)
    print(f"\n{'gaussian_kernel':<34} {'python':>10} {'compiled':>10} {'ratio':>7}")
    for d, n, m in [(10, 500, 200), (50, 2000, 1000), (300, 2000, 1000), (50, 5000, 2000)]:
        points = rng.standard_normal((d, n))
        centers = rng.standard_normal((d, m))
        rows = {}
        for name in ("python", "compiled"):
            backends.set_backend(name)
            rows[name] = best_of(
                lambda: backends.gaussian_kernel(points, centers, 1.5), repeats
            )
        label = f"d={d} points={n} centers={m}"
        ratio = rows["python"] / rows["compiled"]
        print(f"{label:<34} {rows['python']:>9.4f}s {rows['compiled']:>9.4f}s {ratio:>6.2f}x")


def bench_lasso(repeats):
    rng = np.random.default_rng(1)
    print(f"\n{'lasso_admm':<34} {'python':>10} {'compiled':>10} {'ratio':>7}")
    for n, T, k in [(200, 10, 20), (500, 25, 100), (1000, 50, 300), (2000, 25, 300)]:
        design = rng.standard_normal((n, T))
        targets = rng.standard_normal((n, k))
        rows = {}
        for name in ("python", "compiled"):
            backends.set_backend(name)
            rows[name] = best_of(
                lambda: backends.lasso_admm(design, targets, 0.05), repeats
            )
        label = f"n={n} dim={T} targets={k}"
        ratio = rows["python"] / rows["compiled"]
        print(f"{label:<34} {rows['python']:>9.4f}s {rows['compiled']:>9.4f}s {ratio:>6.2f}x")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()
    if not backends.have_compiled():
        raise SystemExit("compiled extension not built; nothing to compare")
    original = backends.get_backend()
    try:
        bench_kernel(args.repeats)
        bench_lasso(args.repeats)
    finally:
        backends.set_backend(original)


if __name__ == "__main__":
    main()
