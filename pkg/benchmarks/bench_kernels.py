#!/usr/bin/env python3
"""Benchmark the numba kernels against the pure-numpy fallback.

Kernel timings run both implementations in-process. With --end-to-end,
a T=5 continual run is timed in a subprocess per backend (the backend is
chosen at import time via CONTINUAL_OOD_BACKEND).

Usage:
  python3 benchmarks/bench_kernels.py [--end-to-end]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from continual_ood._kernels import (
    backend_name,
    knn_mean_distance,
    knn_mean_distance_numpy,
    triangular_solve_rows_numpy,
)


def timeit(fn, *args, repeat=3):
    best = float("inf")
    for _ in range(repeat):
        begin = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - begin)
    return best


def bench_knn():
    rng = np.random.default_rng(0)
    print(f"active backend: {backend_name()}")
    print(f"{'n_train':>8} {'n_query':>8} {'dim':>5} {'k':>3} "
          f"{'active (s)':>11} {'numpy (s)':>10} {'speedup':>8}")
    for n, m, d, k in [
        (500, 500, 16, 2),
        (2000, 1000, 16, 2),
        (2000, 2500, 32, 2),
        (4000, 2000, 64, 10),
    ]:
        train = rng.normal(size=(n, d))
        queries = rng.normal(size=(m, d))
        knn_mean_distance(train, queries[:4], k)  # trigger any jit compile
        t_active = timeit(knn_mean_distance, train, queries, k)
        t_numpy = timeit(knn_mean_distance_numpy, train, queries, k)
        print(f"{n:>8} {m:>8} {d:>5} {k:>3} {t_active:>11.4f} {t_numpy:>10.4f} "
              f"{t_numpy / t_active:>7.1f}x")


def bench_whiten():
    from continual_ood._kernels import triangular_solve_rows

    rng = np.random.default_rng(1)
    print(f"\ntriangular row solves ({backend_name()} vs numpy)")
    for n, d in [(2000, 16), (2000, 32), (5000, 64)]:
        a = rng.normal(size=(d, d))
        lower = np.linalg.cholesky(a @ a.T + d * np.eye(d))
        rows = rng.normal(size=(n, d))
        triangular_solve_rows(lower, rows[:4])
        t_active = timeit(triangular_solve_rows, lower, rows)
        t_numpy = timeit(triangular_solve_rows_numpy, lower, rows)
        print(f"  n={n:<6} d={d:<4} active {t_active:.4f}s  numpy {t_numpy:.4f}s  "
              f"{t_numpy / t_active:.1f}x")


END_TO_END_SNIPPET = """
import time
from continual_ood._kernels import backend_name
from continual_ood.engine import ExperimentConfig
from continual_ood.experiment import run_experiment
from continual_ood.presets import two_layer

train, id_pool, ood_pool = two_layer(seed=4)
config = ExperimentConfig(T=5, K=100, pi=0.1, k=2, M=16, seed=3)
run_experiment(config, train, id_pool, ood_pool)  # warm any jit caches
begin = time.perf_counter()
run_experiment(config, train, id_pool, ood_pool)
print(f"{backend_name()}: {time.perf_counter() - begin:.2f}s")
"""


def bench_end_to_end():
    print("\nfull T=5 continual run (N_train=2000, d=(16,32), K=100)")
    for backend in ("numba", "numpy"):
        env = dict(os.environ, CONTINUAL_OOD_BACKEND=backend)
        result = subprocess.run(
            [sys.executable, "-c", END_TO_END_SNIPPET],
            env=env,
            capture_output=True,
            text=True,
        )
        out = result.stdout.strip() or result.stderr.strip().splitlines()[-1]
        print(f"  {out}")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--end-to-end", action="store_true",
                        help="also time full runs per backend (subprocesses)")
    args = parser.parse_args()
    bench_knn()
    bench_whiten()
    if args.end_to_end:
        bench_end_to_end()
