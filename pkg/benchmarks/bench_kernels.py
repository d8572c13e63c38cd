"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--rows 200000] [--repeat 5]

Each line reports the best-of-``repeat`` wall time per backend and the
speedup.  Outputs are checked for agreement before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from sphereforge import kernels
from sphereforge.polycore import monomial_exponents


def best_of(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rows: int):
    g = np.random.default_rng(7)
    x5 = g.standard_normal((rows, 5))
    x3 = g.standard_normal((rows, 3))
    exps5 = np.concatenate([monomial_exponents(s, 5) for s in range(6)])
    exps3 = monomial_exponents(5, 3)
    table5 = kernels.hermite_table(x5, 5)
    table5_t = np.ascontiguousarray(table5.transpose(1, 2, 0))
    chain = kernels.product_chain(exps5)
    proj = g.standard_normal((rows, 11))
    w = np.full(11, 1 / 11)
    y = np.ones(rows)
    return [
        ("power_table 3x5", lambda b: kernels.power_table(x3, 5, backend=b)),
        ("hermite_table 5x5", lambda b: kernels.hermite_table(x5, 5, backend=b)),
        ("monomial_features deg5 d3", lambda b: kernels.monomial_features(x3, exps3, backend=b)),
        ("table_products 252 feats", lambda b: kernels.table_products(table5, exps5, backend=b)),
        ("table_products_fm 252 feats", lambda b: kernels.table_products_fm(table5_t, exps5, backend=b)),
        ("chained_products_fm 252 feats", lambda b: kernels.chained_products_fm(table5_t, y, chain, backend=b)),
        ("sign_mixture r=11", lambda b: kernels.sign_mixture(proj, w, backend=b)),
    ]


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--rows", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if kernels.BACKEND != "cython":
        raise SystemExit("compiled kernels are not built; run `pip install -e .` first")
    print(f"{'kernel':32s} {'python':>10s} {'cython':>10s} {'speedup':>8s}")
    for name, fn in cases(args.rows):
        a, b = fn("python"), fn("cython")
        if not np.allclose(a, b, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        tp = best_of(lambda: fn("python"), args.repeat)
        tc = best_of(lambda: fn("cython"), args.repeat)
        print(f"{name:32s} {tp * 1e3:9.1f}ms {tc * 1e3:9.1f}ms {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
