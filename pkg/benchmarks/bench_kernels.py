"""Compiled kernels versus the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Times the two CSR matvecs and the branch-and-bound on identical inputs and
prints one line per kernel with both timings and the speedup.
"""

import argparse
import timeit

import numpy as np

from ntc import _kernels_py
from ntc.bench import GeneratorSpec, generate
from ntc.oracle import branch_order

try:
    from ntc import _kernels as compiled
except ImportError:
    compiled = None


def csr_case(rng, k, u, density):
    mask = rng.random((k, u)) < density
    indptr = np.zeros(k + 1, dtype=np.int64)
    np.cumsum(mask.sum(axis=1), out=indptr[1:])
    indices = np.nonzero(mask)[1].astype(np.int32)
    return indptr, indices, rng.normal(size=u), rng.normal(size=k)


def bnb_case(seed, dims, n):
    _, d, _ = generate(GeneratorSpec(dims, 1, n, 0.0, seed))
    g = np.random.default_rng(seed).normal(size=d.u)
    order, leaf = branch_order(g, d)
    return (d.U.astype(np.int64), g, np.asarray(dims, dtype=np.int64), order, leaf, 0.0,
            np.zeros(sum(dims), np.int8))


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if compiled is None:
        raise SystemExit("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
    rng = np.random.default_rng(0)
    indptr, indices, x, w = csr_case(rng, 200, 10_000, 0.05)
    cases = {
        "csr_binary_matvec 200x10000": lambda m: m.csr_binary_matvec(indptr, indices, x),
        "csr_binary_rmatvec 200x10000": lambda m: m.csr_binary_rmatvec(indptr, indices, w, 10_000),
    }
    for dims, n in (((6, 6, 6), 150), ((8, 8, 8), 300), ((6, 6, 6, 6), 600)):
        bargs = bnb_case(1, dims, n)
        cases[f"bnb_vertex_min {'x'.join(map(str, dims))} n={n}"] = \
            lambda m, a=bargs: m.bnb_vertex_min(*a)
    print(f"{'kernel':<34}{'compiled s':>12}{'python s':>12}{'speedup':>10}")
    for name, fn in cases.items():
        tc = best_of(lambda: fn(compiled), args.repeat)
        tp = best_of(lambda: fn(_kernels_py), args.repeat)
        print(f"{name:<34}{tc:>12.5f}{tp:>12.5f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
