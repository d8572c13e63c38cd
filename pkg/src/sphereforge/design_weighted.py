"""Weighted designs: points plus non-negative weights that cancel every odd
polynomial of degree below ``k``.

Feasibility of the weights is a linear program.  :func:`solve_weights`
runs a phase-1 simplex (Bland's rule) and returns either weights or a
polynomial that is strictly positive at every point, which proves no
weights exist.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
from scipy.spatial import cKDTree

from sphereforge import records
from sphereforge.config import DEFAULT
from sphereforge.errors import DegenerateLPError, DimensionError, NonUnitError, RecordError
from sphereforge.polycore import dim_homogeneous, features, monomial_exponents, orthonormal_basis


def _check_unit(pts: np.ndarray) -> None:
    err = np.abs(np.linalg.norm(pts, axis=1) - 1.0)
    if err.size and err.max() > DEFAULT.unit_norm:
        raise NonUnitError(f"point {int(err.argmax())} is off the sphere by {err.max():.3g}")


@dataclass(frozen=True, eq=False)
class WeightedDesign:
    points: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        w = np.array(self.weights, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise DimensionError(f"points must be a non-empty (r, d) array, got shape {pts.shape}")
        if w.shape != (pts.shape[0],):
            raise DimensionError(f"{w.shape[0] if w.ndim == 1 else w.shape} weights for {pts.shape[0]} points")
        _check_unit(pts)
        if w.min() < 0:
            raise ValueError("weights must be non-negative")
        if abs(math.fsum(w) - 1.0) > DEFAULT.weight_sum:
            raise ValueError(f"weights sum to {math.fsum(w)!r}, expected 1")
        pts.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def r(self) -> int:
        return self.points.shape[0]

    @classmethod
    def uniform(cls, points) -> "WeightedDesign":
        pts = np.asarray(points, dtype=np.float64)
        return cls(pts, np.full(pts.shape[0], 1.0 / pts.shape[0]))

    def to_record(self) -> dict:
        return {
            "d": self.d,
            "r": self.r,
            "points": [float(v) for v in self.points.ravel()],
            "weights": [float(v) for v in self.weights],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "WeightedDesign":
        records.require(rec, "d", "r", "points", "weights")
        d, r = rec["d"], rec["r"]
        if not (isinstance(d, int) and isinstance(r, int)) or d < 1 or r < 1:
            raise RecordError("d and r must be positive integers")
        if len(rec["points"]) != d * r:
            raise RecordError(f"expected {d * r} point coordinates for d={d}, r={r}, found {len(rec['points'])}")
        if len(rec["weights"]) != r:
            raise RecordError(f"expected {r} weights, found {len(rec['weights'])}")
        try:
            return cls(np.reshape(np.asarray(rec["points"], dtype=np.float64), (r, d)), rec["weights"])
        except (ValueError, TypeError) as exc:
            raise RecordError(f"invalid design: {exc}") from exc


@dataclass(frozen=True, eq=False)
class FarkasCertificate:
    """Odd polynomial ``q`` (coefficients over :func:`odd_monomials`) with ``q > 0`` at every point."""

    d: int
    k: int
    coeffs: np.ndarray = field(repr=False)
    margin: float

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("a certificate needs a positive margin")

    def terms(self) -> dict:
        return {
            tuple(int(a) for a in alpha): float(c)
            for alpha, c in zip(odd_monomials(self.k, self.d), self.coeffs)
            if c != 0.0
        }

    def __call__(self, points) -> np.ndarray:
        return odd_features(points, self.k) @ self.coeffs

    def to_record(self) -> dict:
        return {"d": self.d, "k": self.k, "coeffs": [float(c) for c in self.coeffs], "margin": float(self.margin)}


def odd_monomials(k: int, d: int) -> np.ndarray:
    """Exponents of all odd-degree monomials of degree below ``k``, by degree then graded-lex."""
    blocks = [monomial_exponents(s, d) for s in range(1, k, 2)]
    if not blocks:
        return np.zeros((0, d), dtype=np.intp)
    return np.concatenate(blocks, axis=0)


def count_odd_monomials(k: int, d: int) -> int:
    return sum(dim_homogeneous(s, d) for s in range(1, k, 2))


def odd_features(points, k: int) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    d = pts.shape[1]
    blocks = [features(pts, s, d) for s in range(1, k, 2)]
    if not blocks:
        return np.zeros((pts.shape[0], 0))
    return np.concatenate(blocks, axis=1)


def odd_constraint_matrix(points, k: int) -> np.ndarray:
    """Row 0 is all ones; then one row per odd monomial of degree below ``k``."""
    if k < 2:
        raise ValueError("k must be at least 2")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise DimensionError("need a non-empty (r, d) array of points")
    return np.vstack([np.ones((1, pts.shape[0])), odd_features(pts, k).T])


def _refactor(full: np.ndarray, b: np.ndarray, cost: np.ndarray, basis: list) -> np.ndarray:
    """Rebuild the tableau from scratch for ``basis`` to shed accumulated round-off."""
    m = full.shape[0]
    bmat = full[:, basis]
    body = np.linalg.solve(bmat, np.column_stack([full, b]))
    tab = np.empty((m + 1, full.shape[1] + 1))
    tab[:m] = body
    tab[m, :-1] = cost - cost[basis] @ body[:, :-1]
    tab[m, -1] = -cost[basis] @ body[:, -1]
    return tab


def _phase_one(a: np.ndarray, b: np.ndarray, pivot_tol: float, max_pivots: int, refresh: int = 25):
    """Minimize the sum of artificials for ``a x = b, x >= 0`` (``b >= 0``).

    Returns the final tableau and basis.  Columns ``0..n-1`` are structural,
    ``n..n+m-1`` artificial; the last column is the right-hand side and the
    last row holds reduced costs with minus the objective in its corner.
    """
    m, n = a.shape
    full = np.hstack([a, np.eye(m)])
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    basis = list(range(n, n + m))
    tab = _refactor(full, b, cost, basis)
    since = 0
    for _ in range(max_pivots):
        # Bland: lowest-index improving column
        cand = np.flatnonzero(tab[m, :-1] < -pivot_tol)
        if cand.size == 0:
            if since == 0:
                return tab, basis
            tab = _refactor(full, b, cost, basis)
            since = 0
            continue
        col = int(cand[0])
        colv = tab[:m, col]
        rows = np.flatnonzero(colv > pivot_tol)
        if rows.size == 0:
            # phase 1 is bounded below by zero, so this only arises from round-off
            raise DegenerateLPError("unbounded direction in a bounded phase-1 problem")
        ratios = np.maximum(tab[rows, -1], 0.0) / colv[rows]
        best = ratios.min()
        ties = rows[ratios <= best + pivot_tol * max(1.0, best)]
        row = int(min(ties, key=lambda i: basis[i]))
        tab[row] /= tab[row, col]
        piv = tab[row].copy()
        for i in range(m + 1):
            if i != row and tab[i, col] != 0.0:
                tab[i] -= tab[i, col] * piv
        basis[row] = col
        since += 1
        if since >= refresh:
            tab = _refactor(full, b, cost, basis)
            since = 0
    raise DegenerateLPError(f"simplex did not terminate within {max_pivots} pivots")


def solve_weights(points, k: int, tol=DEFAULT):
    """Weights making every odd polynomial of degree below ``k`` average to zero,
    or a :class:`FarkasCertificate` proving none exist.

    Raises :class:`DegenerateLPError` when neither verdict clears its tolerance.
    """
    pts = np.asarray(points, dtype=np.float64)
    a = odd_constraint_matrix(pts, k)
    _check_unit(pts)
    m, r = a.shape
    b = np.zeros(m)
    b[0] = 1.0
    tab, basis = _phase_one(a, b, tol.lp_pivot, max_pivots=50 * (m + r) + 1000)
    art = [i for i, j in enumerate(basis) if j >= r]
    infeas = float(np.sum(np.maximum(tab[art, -1], 0.0)))

    if infeas <= tol.lp_feasibility:
        cols = sorted(j for j in basis if j < r)
        w = np.zeros(r)
        if cols:
            sol, *_ = np.linalg.lstsq(a[:, cols], b, rcond=None)
            w[cols] = sol
        w = np.clip(w, 0.0, None)
        resid = np.abs(a @ w - b).max()
        if resid <= tol.lp_feasibility and w.sum() > 0:
            w = w / math.fsum(w)
            return WeightedDesign(pts, w)
        # the basic solution itself is the fallback if refinement drifted
        w = np.zeros(r)
        for i, j in enumerate(basis):
            if j < r:
                w[j] = max(tab[i, -1], 0.0)
        if np.abs(a @ w - b).max() <= tol.lp_feasibility:
            return WeightedDesign(pts, w / math.fsum(w))
        raise DegenerateLPError(f"phase 1 reached zero infeasibility but weights miss by {resid:.3g}")

    # reduced cost of artificial j equals 1 - y_j, where y are the phase-1 duals
    y = 1.0 - tab[m, r : r + m]
    if y[0] <= 0:
        raise DegenerateLPError("phase-1 duals do not separate the constraint from the points")
    coeffs = -y[1:] / y[0]
    q_vals = odd_features(pts, k) @ coeffs
    margin = float(q_vals.min())
    if margin > tol.certificate_margin * max(np.linalg.norm(coeffs), 1.0):
        return FarkasCertificate(pts.shape[1], k, coeffs, margin)
    raise DegenerateLPError(
        f"infeasibility {infeas:.3g} exceeds tolerance but the certificate margin is only {margin:.3g}"
    )


@dataclass(frozen=True)
class ResidualReport:
    """Largest weighted average of a sphere-orthonormal basis polynomial, per odd degree."""

    per_degree: dict
    monomial_means: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(self.per_degree.values(), default=0.0)

    def passes(self, tol: float) -> bool:
        return self.max_residual <= tol

    def to_record(self) -> dict:
        return {
            "per_degree": {str(s): float(v) for s, v in sorted(self.per_degree.items())},
            "max_residual": float(self.max_residual),
        }


def odd_degree_residuals(points, weights, degrees) -> dict:
    pts = np.asarray(points, dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    out = {}
    for s in degrees:
        if s % 2 == 0:
            raise ValueError(f"degree {s} is even")
        vals = w @ orthonormal_basis(s, pts.shape[1]).evaluate(pts)
        out[s] = float(np.abs(vals).max())
    return out


def verify_weighted_design(design: WeightedDesign, k: int) -> ResidualReport:
    """Residuals for every odd degree below ``k``."""
    degrees = list(range(1, k, 2))
    per = odd_degree_residuals(design.points, design.weights, degrees)
    means = {}
    for s in degrees:
        f = design.weights @ features(design.points, s, design.d)
        means[s] = {tuple(int(a) for a in alpha): float(v) for alpha, v in zip(monomial_exponents(s, design.d), f)}
    return ResidualReport(per, means)


def min_separation(points) -> float:
    """min over pairs i != j of min(|v_i - v_j|, |v_i + v_j|)."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] < 2:
        raise ValueError("need at least two points")
    r = pts.shape[0]
    tree = cKDTree(np.vstack([pts, -pts]))
    kq = min(4, 2 * r)
    dist, idx = tree.query(pts, k=kq)
    own = np.arange(r)[:, None]
    mask = (idx != own) & (idx != own + r)
    best = np.where(mask, dist, np.inf).min(axis=1)
    # rows where every returned neighbour was excluded cannot occur for kq >= 3
    return float(best.min())


def evenly_spaced_circle(k: int, phase: float = 0.0) -> WeightedDesign:
    """``k`` points at angles ``phase + 2 pi i / k`` with equal weights (``k`` odd)."""
    if k < 3 or k % 2 == 0:
        raise ValueError(f"k must be odd and at least 3, got {k}")
    ang = phase + 2.0 * np.pi * np.arange(k) / k
    return WeightedDesign.uniform(np.column_stack([np.cos(ang), np.sin(ang)]))
