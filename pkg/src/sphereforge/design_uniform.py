"""Equal-weight odd designs built by nudging random points along a
polynomial's tangential gradient.

Given unit points ``y_i`` and a degree-``t`` polynomial ``p``, the map

    z_i = (y_i + delta * grad_o p(y_i)) / |y_i + delta * grad_o p(y_i)|

moves each point a distance at most ``delta * |grad_o p(y_i)|``.  The solver
searches over ``p`` (always applying the map to the original ``y``) for a
set of ``z`` whose average of every odd polynomial of degree at most ``t``
vanishes.  A Gauss-Newton pass on the point coordinates takes over if that
search stalls.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from sphereforge import rng as rngmod
from sphereforge.config import DEFAULT
from sphereforge.design_weighted import min_separation, odd_degree_residuals
from sphereforge.errors import DimensionError, NonUnitError
from sphereforge.polycore import (
    HomogeneousPoly,
    _derivative_maps,
    dim_homogeneous,
    features,
    monomial_exponents,
    orthonormal_basis,
    sphere_moment,
    tangential_gradient,
)


class ScaleWarning(UserWarning):
    """The point count is below the size for which existence is guaranteed."""


def default_delta(t: int, d: int) -> float:
    return 1.0 / dim_homogeneous(2 * t, d) ** 2


@dataclass(frozen=True)
class PerturbConfig:
    """``delta=None`` resolves to ``1 / N_{2t,d}^2``.  ``damping`` shrinks a
    rejected step; ``max_iterations`` caps each solver phase."""

    delta: float | None = None
    damping: float = 0.5
    max_iterations: int = 10_000
    tolerance: float = DEFAULT.design_residual
    gauss_newton: bool = True

    def __post_init__(self):
        if self.delta is not None and not self.delta > 0:
            raise ValueError("delta must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be non-negative")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")

    def resolved(self, t: int, d: int) -> "PerturbConfig":
        return self if self.delta is not None else replace(self, delta=default_delta(t, d))

    def as_dict(self) -> dict:
        return {
            "delta": self.delta,
            "damping": self.damping,
            "max_iterations": self.max_iterations,
            "tolerance": self.tolerance,
            "gauss_newton": self.gauss_newton,
        }


@dataclass(frozen=True)
class DesignSolveReport:
    residuals: dict
    iterations: int
    max_displacement: float
    separation_before: float
    separation_after: float
    converged: bool
    phase: str
    delta: float
    delta_raised: bool
    poly_norm: float
    poly_in_unit_ball: bool
    max_gradient_norm: float
    notes: tuple = field(default_factory=tuple)

    def to_record(self) -> dict:
        return {
            "residuals": {str(s): float(v) for s, v in sorted(self.residuals.items())},
            "iterations": self.iterations,
            "max_displacement": float(self.max_displacement),
            "separation_before": float(self.separation_before),
            "separation_after": float(self.separation_after),
            "converged": self.converged,
            "phase": self.phase,
            "delta": float(self.delta),
            "delta_raised": self.delta_raised,
            "poly_norm": float(self.poly_norm),
            "poly_in_unit_ball": self.poly_in_unit_ball,
            "max_gradient_norm": float(self.max_gradient_norm),
            "notes": list(self.notes),
        }


def _unit_points(y, tol: float = DEFAULT.unit_norm) -> np.ndarray:
    arr = np.asarray(y, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"expected an (r, d) array of points, got shape {arr.shape}")
    err = np.abs(np.linalg.norm(arr, axis=1) - 1.0)
    if err.size and err.max() > tol:
        raise NonUnitError(f"point {int(err.argmax())} is off the sphere by {err.max():.3g}")
    return arr


def pairwise_mean(a: np.ndarray) -> np.ndarray:
    """Mean over axis 0 with numpy's pairwise summation (order fixed by shape only)."""
    a = np.asarray(a)
    return np.ascontiguousarray(np.moveaxis(a, 0, -1)).sum(axis=-1) / a.shape[0]


def perturb_map(y, p: HomogeneousPoly, delta: float) -> np.ndarray:
    y = _unit_points(y)
    if y.shape[1] != p.d:
        raise DimensionError(f"points have dimension {y.shape[1]}, polynomial has {p.d}")
    step = delta * tangential_gradient(p, y)
    u = y + step
    z = u / np.linalg.norm(u, axis=1, keepdims=True)
    # stationary points stay bit-identical instead of picking up renormalization rounding
    still = ~step.any(axis=1)
    z[still] = y[still]
    return z


def design_residual(points, t: int) -> dict:
    """Per odd degree ``s <= t``: largest uniform average of a sphere-orthonormal
    basis polynomial of degree ``s``."""
    if t % 2 == 0 or t < 1:
        raise ValueError(f"t must be a positive odd integer, got {t}")
    pts = _unit_points(points)
    w = np.full(pts.shape[0], 1.0 / pts.shape[0])
    return odd_degree_residuals(pts, w, range(1, t + 1, 2))


def increment_check(p: HomogeneousPoly, y, delta: float, *, allow_large_delta: bool = False, norm_tol: float = 1e-8):
    """``(p(z) - p(y), delta * |grad_o p(y)|^2)`` with ``z`` the perturbed point.

    Works on one point or an (n, d) array.  ``delta`` above ``1 / N_{2t,d}^2``
    is rejected unless ``allow_large_delta``.
    """
    if abs(p.norm() - 1.0) > norm_tol:
        raise ValueError(f"p must have unit norm, got {p.norm():.12g}")
    limit = default_delta(p.t, p.d)
    if delta > limit * (1 + 1e-12) and not allow_large_delta:
        raise ValueError(f"delta={delta:g} exceeds 1/N_(2t,d)^2 = {limit:g}")
    arr = np.asarray(y, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    g = tangential_gradient(p, arr)
    z = perturb_map(arr, p, delta)
    lhs = p(z) - p(arr)
    rhs = delta * np.sum(g * g, axis=1)
    if single:
        return float(lhs[0]), float(rhs[0])
    return lhs, rhs


def _basis_gradients(t: int, d: int, x: np.ndarray) -> np.ndarray:
    """Gradients of every orthonormal basis polynomial of degree ``t``: shape (n, N, d)."""
    basis = orthonormal_basis(t, d)
    feats = features(x, t - 1, d)
    cols = [feats @ (m @ basis.coeffs) for m in _derivative_maps(t, d)]
    return np.stack(cols, axis=2)


class _CoefficientProblem:
    """Residual and Jacobian of ``c -> mean_i b(z_i(c))`` for the degree-``t`` basis ``b``."""

    def __init__(self, y: np.ndarray, t: int, delta: float):
        self.y = y
        self.t = t
        self.d = y.shape[1]
        self.delta = delta
        self.basis = orthonormal_basis(t, self.d)
        g = _basis_gradients(t, self.d, y)
        self.tan = g - np.einsum("nkd,nd->nk", g, y)[:, :, None] * y[:, None, :]

    def points(self, c: np.ndarray):
        u = self.y + self.delta * np.einsum("k,nkd->nd", c, self.tan)
        nu = np.linalg.norm(u, axis=1, keepdims=True)
        return u / nu, nu

    def residual(self, c: np.ndarray) -> np.ndarray:
        z, _ = self.points(c)
        return pairwise_mean(self.basis.evaluate(z))

    def jacobian(self, c: np.ndarray) -> np.ndarray:
        z, nu = self.points(c)
        gb = _basis_gradients(self.t, self.d, z)
        proj = gb - np.einsum("nkd,nd->nk", gb, z)[:, :, None] * z[:, None, :]
        proj = proj / nu[:, :, None]
        return self.delta * np.einsum("nkd,njd->kj", proj, self.tan) / self.y.shape[0]


def _newton_phase(prob: _CoefficientProblem, cfg: PerturbConfig, target: float):
    n = prob.basis.size
    c = np.zeros(n)
    res = prob.residual(c)
    err = np.abs(res).max()
    it = 0
    while err > target and it < cfg.max_iterations:
        it += 1
        jac = prob.jacobian(c)
        try:
            step = np.linalg.solve(jac, -res)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(jac, -res, rcond=None)[0]
        lam = 1.0
        accepted = False
        while lam > 1e-8:
            c_new = c + lam * step
            res_new = prob.residual(c_new)
            err_new = np.abs(res_new).max()
            if err_new < err:
                accepted = True
                break
            lam *= cfg.damping
        if not accepted:
            break
        c, res, err = c_new, res_new, err_new
    return c, it, err


def _odd_blocks(t: int, d: int):
    return [orthonormal_basis(s, d) for s in range(1, t + 1, 2)]


def _tangent_frames(z: np.ndarray) -> np.ndarray:
    """Orthonormal tangent frames at each point, shape (r, d, d-1), via Householder reflections."""
    r, d = z.shape
    e = np.zeros(d)
    e[0] = 1.0
    s = np.where(z[:, :1] >= 0, 1.0, -1.0)
    v = z + s * e
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    h = np.eye(d)[None] - 2.0 * v[:, :, None] * v[:, None, :]
    # columns 1..d-1 of the reflection are orthogonal to its column 0, which is -s*z
    return h[:, :, 1:]


def _gauss_newton_phase(z: np.ndarray, t: int, cfg: PerturbConfig, target: float):
    r, d = z.shape
    blocks = _odd_blocks(t, d)

    def resid(pts):
        return np.concatenate([pairwise_mean(b.evaluate(pts)) for b in blocks])

    res = resid(z)
    err = np.abs(res).max()
    it = 0
    while err > target and it < cfg.max_iterations:
        it += 1
        frames = _tangent_frames(z)
        rows = []
        for b in blocks:
            if b.t == 0:
                continue
            g = _basis_gradients(b.t, d, z)
            rows.append(np.einsum("nkd,nde->kne", g, frames).reshape(b.size, -1) / r)
        jac = np.vstack(rows)
        gram = jac @ jac.T
        try:
            step = -jac.T @ np.linalg.solve(gram, res)
        except np.linalg.LinAlgError:
            step = -jac.T @ np.linalg.lstsq(gram, res, rcond=None)[0]
        step = np.einsum("nde,ne->nd", frames, step.reshape(r, d - 1))
        lam = 1.0
        accepted = False
        while lam > 1e-8:
            cand = z + lam * step
            cand /= np.linalg.norm(cand, axis=1, keepdims=True)
            res_new = resid(cand)
            err_new = np.abs(res_new).max()
            if err_new < err:
                accepted = True
                break
            lam *= cfg.damping
        if not accepted:
            break
        z, res, err = cand, res_new, err_new
    return z, it, err


def _already_design_report(y, residuals, cfg: PerturbConfig, t: int, d: int) -> DesignSolveReport:
    sep = min_separation(y) if y.shape[0] >= 2 else math.inf
    return DesignSolveReport(
        residuals=residuals,
        iterations=0,
        max_displacement=0.0,
        separation_before=sep,
        separation_after=sep,
        converged=True,
        phase="none",
        delta=cfg.delta,
        delta_raised=cfg.delta > default_delta(t, d) * (1 + 1e-12),
        poly_norm=0.0,
        poly_in_unit_ball=True,
        max_gradient_norm=0.0,
        notes=("start points already meet the tolerance",),
    )


def solve_uniform_design(y, t: int, config: PerturbConfig | None = None):
    """Perturb ``y`` into an equal-weight design for all odd degrees ``<= t``.

    Returns ``(z, report)``.  A run that misses the tolerance returns its best
    iterate with ``converged=False``.
    """
    if t % 2 == 0 or t < 1:
        raise ValueError(f"t must be a positive odd integer, got {t}")
    y = _unit_points(y)
    r, d = y.shape
    if d < 2:
        raise DimensionError("points must have dimension at least 2")
    cfg = (config or PerturbConfig()).resolved(t, d)
    floor = dim_homogeneous(2 * t, d)
    start = design_residual(y, t)
    if max(start.values()) <= cfg.tolerance:
        # nothing to solve, so the point-count floor does not apply
        return y.copy(), _already_design_report(y, start, cfg, t, d)
    if r < floor:
        raise ValueError(f"r={r} is below N_(2t,d)={floor}; the system is underdetermined")
    if r < floor**5:
        warnings.warn(f"r={r} is below N_(2t,d)^5={floor**5}; convergence is not guaranteed", ScaleWarning, stacklevel=2)
    delta = cfg.delta
    raised = delta > default_delta(t, d) * (1 + 1e-12)
    # a degree-t odd design is also one for every odd degree below t
    target = cfg.tolerance / 4
    sep_before = min_separation(y) if r >= 2 else math.inf

    prob = _CoefficientProblem(y, t, delta)
    c, iters, _ = _newton_phase(prob, cfg, target)
    z, _ = prob.points(c)
    p = prob.basis.combine(c)
    grad_norms = np.linalg.norm(tangential_gradient(p, y), axis=1)
    phase = "coefficient"
    notes = []
    residuals = design_residual(z, t)
    if max(residuals.values()) > cfg.tolerance and cfg.gauss_newton:
        notes.append("coefficient search stalled; refined point coordinates directly")
        z, gn_iters, _ = _gauss_newton_phase(z, t, cfg, target)
        iters += gn_iters
        phase = "gauss-newton"
        residuals = design_residual(z, t)
    disp = float(np.linalg.norm(z - y, axis=1).max()) if r else 0.0
    converged = max(residuals.values()) <= cfg.tolerance
    report = DesignSolveReport(
        residuals=residuals,
        iterations=iters,
        max_displacement=disp,
        separation_before=sep_before,
        separation_after=min_separation(z) if r >= 2 else math.inf,
        converged=converged,
        phase=phase,
        delta=delta,
        delta_raised=raised,
        poly_norm=float(np.linalg.norm(c)),
        poly_in_unit_ball=bool(np.linalg.norm(c) <= 1.0),
        max_gradient_norm=float(grad_norms.max()) if r else 0.0,
        notes=tuple(notes),
    )
    return z, report


def concentration_check(r: int, t: int, d: int, eta: float, trials: int, seed: int = 0) -> float:
    """Fraction of trials in which some unit-norm ``p`` of degree ``t`` has its
    empirical mean over ``r`` uniform points off the sphere mean by more than ``eta``.

    The supremum over the unit ball of the degree-``t`` space equals the
    Euclidean norm of the centred empirical mean of an orthonormal basis.
    """
    if r < 1 or trials < 1:
        raise ValueError("r and trials must be positive")
    basis = orthonormal_basis(t, d)
    exps = [tuple(int(a) for a in row) for row in basis_exponents(t, d)]
    moments = np.array([sphere_moment(a, d) for a in exps])
    centre = basis.coeffs.T @ moments
    fails = 0
    for trial in range(trials):
        x = rngmod.uniform_sphere(rngmod.stream(seed, "concentration", trial), r, d)
        dev = pairwise_mean(basis.evaluate(x)) - centre
        fails += bool(np.linalg.norm(dev) > eta)
    return fails / trials


def basis_exponents(t: int, d: int) -> np.ndarray:
    return monomial_exponents(t, d)


def random_start(r: int, d: int, seed: int) -> np.ndarray:
    """The documented starting configuration for a seeded solve."""
    return rngmod.uniform_sphere(rngmod.stream(seed, "design-start"), r, d)
