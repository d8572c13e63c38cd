"""Lower bound on the smallest achievable max displacement for random starts.

For each seeded start ``y`` (d=3, t=3, r=500) this solves the linearized
problem: minimize ``s`` over tangent steps ``u_i`` with ``|u_i| <= s`` such
that the first-order change of every odd orthonormal basis mean cancels the
starting residual.  The Euclidean ball is relaxed to a circumscribed
32-gon, so the LP optimum never exceeds the linearized optimum.  The solver's
actual displacement on the same seed is recorded alongside.

Needs scipy's HiGHS.  About 5 s per seed.

    python benchmarks/displacement_floor.py [--seeds 100]
"""
from __future__ import annotations

import argparse
import json
import pathlib
import warnings

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix, hstack, identity, kron

from sphereforge.design_uniform import (
    PerturbConfig,
    ScaleWarning,
    _basis_gradients,
    _odd_blocks,
    _tangent_frames,
    pairwise_mean,
    random_start,
    solve_uniform_design,
)

FACETS = 16


def linear_floor(y: np.ndarray, t: int) -> float:
    r, d = y.shape
    if d != 3:
        raise ValueError("the polygon relaxation assumes a 2-D tangent plane")
    blocks = _odd_blocks(t, d)
    frames = _tangent_frames(y)
    res = np.concatenate([pairwise_mean(b.evaluate(y)) for b in blocks])
    jac = np.vstack(
        [np.einsum("nkd,nde->kne", _basis_gradients(b.t, d, y), frames).reshape(b.size, -1) / r for b in blocks]
    )
    ang = np.pi * np.arange(FACETS) / FACETS
    dirs = np.vstack([np.c_[np.cos(ang), np.sin(ang)], -np.c_[np.cos(ang), np.sin(ang)]])
    # |<dir_j, u_i>| <= s for every point i and facet j
    a_ub = hstack([kron(identity(r), csr_matrix(dirs)), csr_matrix(-np.ones((r * dirs.shape[0], 1)))]).tocsr()
    a_eq = np.c_[jac, np.zeros(jac.shape[0])]
    cost = np.zeros(2 * r + 1)
    cost[-1] = 1.0
    sol = linprog(cost, A_ub=a_ub, b_ub=np.zeros(a_ub.shape[0]), A_eq=a_eq, b_eq=-res,
                  bounds=[(None, None)] * (2 * r + 1), method="highs")
    if sol.status != 0:
        raise RuntimeError(sol.message)
    return float(sol.x[-1])


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--r", type=int, default=500)
    ap.add_argument("--out", default=str(pathlib.Path(__file__).with_suffix(".json")))
    args = ap.parse_args()
    warnings.simplefilter("ignore", ScaleWarning)
    rows = []
    for seed in range(args.seeds):
        y = random_start(args.r, 3, seed)
        _, rep = solve_uniform_design(y, 3, PerturbConfig(tolerance=1e-8))
        rows.append({"seed": seed, "floor": linear_floor(y, 3), "solver": rep.max_displacement})
        print(f"seed {seed:3d}  floor {rows[-1]['floor']:.4f}  solver {rows[-1]['solver']:.4f}", flush=True)
    floor = np.array([r["floor"] for r in rows])
    solver = np.array([r["solver"] for r in rows])
    summary = {
        "d": 3,
        "t": 3,
        "r": args.r,
        "seeds": args.seeds,
        "floor_at_most_0.1": int((floor <= 0.1).sum()),
        "solver_at_most_0.1": int((solver <= 0.1).sum()),
        "floor_median": float(np.median(floor)),
        "solver_median": float(np.median(solver)),
        "rows": rows,
    }
    pathlib.Path(args.out).write_text(json.dumps(summary, indent=1) + "\n")
    print({k: v for k, v in summary.items() if k != "rows"})


if __name__ == "__main__":
    main()
