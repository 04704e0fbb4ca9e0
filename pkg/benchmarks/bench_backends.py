#!/usr/bin/env python3
"""Benchmark the compiled suffix-array kernels against the pure-Python
fallback: build time and query throughput across corpus sizes.

Usage: python3 benchmarks/bench_backends.py [--sizes 10000,100000,...]
"""

import argparse
import time

import numpy as np

from ostd import _sais_py

try:
    from ostd import _sais
except ImportError:
    _sais = None


def time_build(impl, tokens, alphabet):
    t0 = time.perf_counter()
    sa = impl.build_suffix_array(tokens, alphabet)
    return time.perf_counter() - t0, sa


def time_queries(impl, tokens, sa, patterns):
    t0 = time.perf_counter()
    for pattern in patterns:
        impl.count_range(tokens, sa, pattern)
    return time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--sizes", default="10000,50000,200000,500000")
    parser.add_argument("--alphabet", type=int, default=50_000)
    parser.add_argument("--queries", type=int, default=2_000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)

    backends = [("python", _sais_py)]
    if _sais is not None:
        backends.insert(0, ("cython", _sais))
    else:
        print("compiled extension not built; benchmarking the fallback only")

    header = f"{'tokens':>10} {'backend':>8} {'build (s)':>10} {'queries/s':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for m in sizes:
        tokens = rng.integers(0, args.alphabet, size=m).astype(np.uint32)
        patterns = [
            rng.integers(0, args.alphabet, size=rng.integers(1, 6)).astype(np.uint32)
            for _ in range(args.queries)
        ]
        build_times = {}
        reference_sa = None
        for name, impl in backends:
            build_s, sa = time_build(impl, tokens, args.alphabet)
            if reference_sa is None:
                reference_sa = sa
            elif not np.array_equal(sa, reference_sa):
                raise SystemExit(f"backend {name} disagrees with reference output")
            query_s = time_queries(impl, tokens, sa, patterns)
            build_times[name] = build_s
            speedup = ""
            if name != backends[0][0]:
                speedup = f"{build_s / build_times[backends[0][0]]:.1f}x"
            print(
                f"{m:>10} {name:>8} {build_s:>10.3f} "
                f"{args.queries / query_s:>12.0f} {speedup:>8}"
            )


if __name__ == "__main__":
    main()
