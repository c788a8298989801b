"""Time the compiled and pure-Python Jacobi SVD kernels on the same inputs.

Usage: python3 benchmarks/bench_svd.py [--sizes 8 16 32 64] [--repeat 3]
"""
import argparse
import time

import numpy as np

from gfsa_lab.numerics import available_backends, svd


def best_time(m, backend, repeat):
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        svd(m, backend=backend)
        best = min(best, time.perf_counter() - start)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[8, 16, 32, 64])
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    backends = available_backends()
    rng = np.random.default_rng(args.seed)
    print("n," + ",".join(f"{b}_seconds" for b in backends) + ",max_sigma_diff")
    for n in args.sizes:
        m = rng.random((n, n))
        m /= m.sum(axis=1, keepdims=True)
        times = [best_time(m, b, args.repeat) for b in backends]
        sigmas = [svd(m, backend=b).sigma for b in backends]
        diff = max(np.abs(s - sigmas[0]).max() for s in sigmas)
        print(f"{n}," + ",".join(f"{t:.6f}" for t in times) + f",{diff:.3g}")
    if "cython" not in backends:
        print("# compiled kernel not built; only the pure-Python backend was timed")


if __name__ == "__main__":
    main()
