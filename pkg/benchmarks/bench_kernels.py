"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat N]

Shapes follow the desk preset (spatial graphs: many groups of K=4 rows)
and the paper preset (K=10 objects, T=20 frames, 512 channels). Every
pair of outputs is checked for bit equality before timing.
"""
import argparse
import time

import numpy as np

from krst import kernels

KNN_CASES = [
    ("desk spatial", (32 * 4, 4, 64), 2),
    ("desk temporal", (32, 4, 64), 3),
    ("paper spatial", (64 * 20, 10, 512), 6),
    ("paper temporal", (64, 20, 512), 16),
    ("holistic", (16, 200, 64), 120),
]
SCATTER_CASES = [
    ("desk gather-grad", (512, 64), 2048),
    ("paper gather-grad", (12800, 512), 76800),
]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_knn(repeat, rng):
    for label, shape, k in KNN_CASES:
        x = rng.normal(size=shape)
        a = kernels.knn_numpy(x, k)
        b = kernels.knn_numba(x, k)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1]), label
        t_np = best_of(lambda: kernels.knn_numpy(x, k), repeat)
        t_nb = best_of(lambda: kernels.knn_numba(x, k), repeat)
        yield "knn", label, shape, t_np, t_nb


def bench_scatter(repeat, rng):
    for label, (rows, width), m in SCATTER_CASES:
        idx = rng.integers(0, rows, size=m)
        src = rng.normal(size=(m, width))
        a = kernels.scatter_add_rows_numpy(np.zeros((rows, width)), idx, src)
        b = kernels.scatter_add_rows_numba(np.zeros((rows, width)), idx, src)
        assert np.array_equal(a, b), label
        t_np = best_of(lambda: kernels.scatter_add_rows_numpy(np.zeros((rows, width)), idx, src), repeat)
        t_nb = best_of(lambda: kernels.scatter_add_rows_numba(np.zeros((rows, width)), idx, src), repeat)
        yield "scatter_add", label, (rows, width, m), t_np, t_nb


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    rng = np.random.default_rng(0)
    # compile outside the timed region
    kernels.knn_numba(rng.normal(size=(1, 3, 2)), 2)
    kernels.scatter_add_rows_numba(np.zeros((2, 2)), np.array([0, 1]), np.ones((2, 2)))
    print(f"{'kernel':<12} {'case':<18} {'shape':<20} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for rows in (bench_knn(args.repeat, rng), bench_scatter(args.repeat, rng)):
        for kernel, label, shape, t_np, t_nb in rows:
            print(f"{kernel:<12} {label:<18} {str(shape):<20} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
