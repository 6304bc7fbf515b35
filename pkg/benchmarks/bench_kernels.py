"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from kgextrap import _pykernels, kernels


def cases(rng):
    n = 20_000
    values = rng.normal(size=(n, 32))
    index = rng.integers(2_000, size=n)
    trip = np.stack([rng.integers(300, size=600), rng.integers(40, size=600), rng.integers(300, size=600)], axis=1)
    deg = rng.integers(1, 6, size=5_000)
    indptr = np.concatenate([[0], np.cumsum(deg)]).astype(np.int64)
    indices = rng.integers(5_000, size=indptr[-1]).astype(np.int64)
    uniforms = rng.random(2_000)
    return {
        "segment_sum (20k x 32 rows)": lambda k: k.segment_sum(values, index, 2_000),
        "rpg_adjacency (600 triples)": lambda k: k.rpg_adjacency(trip[:, 0], trip[:, 1], trip[:, 2], 40),
        "random_walk (2k steps)": lambda k: k.random_walk(indptr, indices, 0, uniforms),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    compiled = kernels.compiled_backend()
    if compiled is None:
        print("compiled kernels not built; only the fallback can be timed")
    print(f"{'kernel':30s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=args.repeat)) * 1e3
        if compiled is None:
            print(f"{name:30s} {py:10.2f} {'-':>10s} {'-':>8s}")
            continue
        cy = min(timeit.repeat(lambda: fn(compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:30s} {py:10.2f} {cy:10.2f} {py / cy:7.1f}x")


if __name__ == "__main__":
    main()
