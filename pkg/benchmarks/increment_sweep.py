"""Brute-force sweep of the one-step increment ratio.

For random unit-norm ``p`` and uniform ``y`` it records the smallest
``(p(z) - p(y)) / (delta * |grad_o p(y)|^2)`` at ``delta = 1 / N_{2t,d}^2``.
The acceptance suite asserts a ratio of at least 0.5; this sweep is the
evidence for that bound.  Output: benchmarks/increment_sweep.json.

    python benchmarks/increment_sweep.py [--pairs 100000]
"""
from __future__ import annotations

import argparse
import json
import pathlib

import numpy as np

from sphereforge import rng
from sphereforge.design_uniform import default_delta, increment_check
from sphereforge.polycore import random_unit_poly

CASES = [(2, 1), (2, 3), (3, 1), (3, 3), (3, 5), (4, 3), (5, 3)]


def sweep(d: int, t: int, pairs: int, seed: int, per_poly: int = 100) -> dict:
    delta = default_delta(t, d)
    worst = np.inf
    ratios = []
    for i in range(pairs // per_poly):
        p = random_unit_poly(t, d, rng.stream(seed, "sweep-poly", d, t, i))
        y = rng.uniform_sphere(rng.stream(seed, "sweep-points", d, t, i), per_poly, d)
        lhs, rhs = increment_check(p, y, delta)
        keep = rhs > 1e-300
        r = lhs[keep] / rhs[keep]
        ratios.append(r)
        worst = min(worst, float(r.min()))
    allr = np.concatenate(ratios)
    return {
        "d": d,
        "t": t,
        "delta": delta,
        "pairs": int(allr.size),
        "min_ratio": worst,
        "q001_ratio": float(np.quantile(allr, 0.001)),
        "median_ratio": float(np.median(allr)),
    }


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--pairs", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=20260)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).with_suffix(".json")))
    args = ap.parse_args()
    rows = [sweep(d, t, args.pairs, args.seed) for d, t in CASES]
    for r in rows:
        print(f"d={r['d']} t={r['t']} pairs={r['pairs']} min={r['min_ratio']:.4f} median={r['median_ratio']:.4f}")
    pathlib.Path(args.out).write_text(json.dumps({"seed": args.seed, "cases": rows}, indent=1, sort_keys=True) + "\n")


if __name__ == "__main__":
    main()
