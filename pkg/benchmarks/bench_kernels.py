"""Time the compiled and numpy kernel backends on the same inputs.

    python3 benchmarks/bench_kernels.py [--n 2000] [--repeat 5] [--threads 0]

Prints one row per kernel with the best-of-``repeat`` wall time for each
backend and the speed-up of the compiled one.  A full exemplar fit is timed
with each backend swapped in as well.
"""

import argparse
import os
import time

import numpy as np

from npmle import _pykernels, kernels, solver

try:
    from npmle import _ckernels
except ImportError:
    _ckernels = None


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(n, threads, rng):
    x = rng.normal(scale=3, size=(n, 2))
    logw = np.log(rng.dirichlet(np.ones(n)))
    f = rng.uniform(0.5, 1.5, n)
    dvec = rng.normal(size=n) * 0.3
    ow = np.full(n, 1.0 / n)
    start = np.ascontiguousarray(x[rng.choice(n, 8, replace=False)])
    return {
        "neg_half_sqdist": lambda m: m.neg_half_sqdist(x, x, threads),
        "mixture_logsumexp": lambda m: m.mixture_logsumexp(x, x, logw, True, threads),
        "line_search": lambda m: m.line_search(f, dvec, ow, 1.0, 50),
        "lloyd (k=8)": lambda m: m.lloyd(x, start.copy(), 300),
    }


def time_fit(impl, n, repeat, rng):
    x = rng.normal(scale=3, size=(n, 2))
    saved = kernels._impl
    kernels._impl = impl
    try:
        return best_of(lambda: solver.fit(x), repeat)
    finally:
        kernels._impl = saved


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--threads", type=int, default=0, help="0 = all cores")
    args = p.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    threads = args.threads or os.cpu_count() or 1
    rng = np.random.default_rng(0)
    print(f"n={args.n}  threads={threads}  best of {args.repeat}")
    print(f"{'kernel':<22}{'cython (s)':>12}{'numpy (s)':>12}{'speed-up':>10}")
    for name, fn in cases(args.n, threads, rng).items():
        tc = best_of(lambda: fn(_ckernels), args.repeat)
        tp = best_of(lambda: fn(_pykernels), args.repeat)
        print(f"{name:<22}{tc:>12.5f}{tp:>12.5f}{tp / tc:>9.1f}x")
    n_fit = min(args.n, 1000)
    tc = time_fit(_ckernels, n_fit, 1, np.random.default_rng(1))
    tp = time_fit(_pykernels, n_fit, 1, np.random.default_rng(1))
    print(f"{f'fit (n={n_fit})':<22}{tc:>12.5f}{tp:>12.5f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
