"""Benchmark the numba kernels against their pure-numpy twins.

Usage: python benchmarks/bench_kernels.py [--train]

Times the negative log-likelihood and gradient kernels over a range of
dataset sizes, then (with --train) a full training run on each backend.
Set TELECARE_NO_NUMBA=1 to confirm the numpy path is the one the package
falls back to; this script itself always times both when numba compiled.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from telecare import kernels
from telecare.risk import LabeledDataset, TrainConfig, train

SIZES = [(1_000, 10), (20_000, 10), (200_000, 10)]
REPS = 20


def make_problem(n: int, dim: int, seed: int = 0):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, dim))
    X[:, 0] = 1.0
    y = (rng.random(n) > 0.5).astype(np.float64)
    w = rng.normal(scale=0.5, size=dim)
    return w, X, y


def time_fn(fn, *args, reps: int = REPS) -> float:
    fn(*args)  # warm any JIT compilation out of the measurement
    start = time.perf_counter()
    for _ in range(reps):
        fn(*args)
    return (time.perf_counter() - start) / reps


def bench_kernels() -> None:
    if kernels.nll_numba is None:
        print("numba backend not compiled (disabled or unavailable); nothing to compare")
        return
    print(f"{'n':>8} {'kernel':>8} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8}")
    for n, dim in SIZES:
        w, X, y = make_problem(n, dim)
        for name, np_fn, nb_fn in (
            ("nll", kernels.nll_numpy, kernels.nll_numba),
            ("grad", kernels.grad_numpy, kernels.grad_numba),
        ):
            t_np = time_fn(np_fn, w, X, y, 1e-4)
            t_nb = time_fn(nb_fn, w, X, y, 1e-4)
            print(f"{n:>8} {name:>8} {t_np * 1e3:>10.3f} {t_nb * 1e3:>10.3f} {t_np / t_nb:>8.1f}x")


def bench_train() -> None:
    rng = np.random.default_rng(1)
    n = 5_000
    X = np.ones((n, 10))
    X[:, 1:] = rng.normal(size=(n, 9))
    X[: n // 2, 1] -= 2.5
    X[n // 2 :, 1] += 2.5
    y = np.array([0.0] * (n // 2) + [1.0] * (n // 2))
    data = LabeledDataset(X=X, y=y)
    cfg = TrainConfig(l2=1e-4, max_iters=800)

    backends = [("numpy", kernels.nll_numpy, kernels.grad_numpy)]
    if kernels.nll_numba is not None:
        backends.append(("numba", kernels.nll_numba, kernels.grad_numba))

    saved = (kernels.logistic_nll, kernels.logistic_grad)
    try:
        for name, nll_fn, grad_fn in backends:
            kernels.logistic_nll, kernels.logistic_grad = nll_fn, grad_fn
            train(data, cfg)  # warm-up
            start = time.perf_counter()
            _, report = train(data, cfg)
            elapsed = time.perf_counter() - start
            print(
                f"train[{name}]: {elapsed:.3f}s for {report.iterations} iterations "
                f"(accuracy {report.accuracy:.3f})"
            )
    finally:
        kernels.logistic_nll, kernels.logistic_grad = saved


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--train", action="store_true", help="also time full training runs")
    args = parser.parse_args()
    print(f"active package backend: {kernels.BACKEND}")
    bench_kernels()
    if args.train:
        bench_train()
