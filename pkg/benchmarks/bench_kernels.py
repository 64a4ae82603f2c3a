"""Timing of the compiled kernels against the numpy fallback.

Run::

    python benchmarks/bench_kernels.py [--M 20000] [--J 10] [--d 16] [--repeat 20]

Prints the best-of-``repeat`` wall time of each kernel for both backends
and the speed-up of the compiled one.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from alphamix import _pykernels

try:
    from alphamix import _ckernels
except ImportError:
    _ckernels = None


def make_inputs(M, J, d, seed=0):
    rng = np.random.default_rng(seed)
    points = rng.normal(size=(M, d))
    means = rng.normal(size=(J, d))
    A = rng.normal(size=(J, d, d))
    chols = np.linalg.cholesky(A @ np.swapaxes(A, 1, 2) + d * np.eye(d))
    values = rng.normal(size=(M, J))
    offsets = rng.normal(size=J)
    return points, means, chols, values, offsets


def best_time(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--M", type=int, default=20000)
    parser.add_argument("--J", type=int, default=10)
    parser.add_argument("--d", type=int, default=16)
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args(argv)
    points, means, chols, values, offsets = make_inputs(args.M, args.J, args.d)
    backends = [("numpy", _pykernels)]
    if _ckernels is not None:
        backends.append(("cython", _ckernels))
    else:
        print("compiled kernels not built; timing the numpy fallback only")
    print(f"M={args.M} J={args.J} d={args.d} repeat={args.repeat}")
    timings = {}
    for name, mod in backends:
        t_maha = best_time(lambda: mod.mahalanobis_sq(points, means, chols), args.repeat)
        t_lse = best_time(lambda: mod.logsumexp_rows(values, offsets), args.repeat)
        timings[name] = (t_maha, t_lse)
        print(f"{name:>7}  mahalanobis_sq {1e3 * t_maha:9.3f} ms   logsumexp_rows {1e3 * t_lse:9.3f} ms")
    if "cython" in timings:
        (pm, pl), (cm, cl) = timings["numpy"], timings["cython"]
        print(f"speed-up  mahalanobis_sq {pm / cm:6.2f}x   logsumexp_rows {pl / cl:6.2f}x")


if __name__ == "__main__":
    main()
