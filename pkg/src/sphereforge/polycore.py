"""Homogeneous polynomials on the unit sphere.

A homogeneous polynomial of degree ``t`` in ``d`` variables is stored as a
coefficient vector over the degree-``t`` monomials in graded-lexicographic
order: exponent tuples of one degree are listed in descending
lexicographic order, so ``x1**t`` comes first and ``xd**t`` last.  The same
ordering is used by every module and every serialized record.

Inner products are taken against the uniform measure on S^{d-1}; moments
of that measure have the closed form

    E[x^a] = prod_i (a_i - 1)!! / prod_{j < |a|/2} (d + 2j)

when every ``a_i`` is even, and vanish otherwise.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

from sphereforge import kernels
from sphereforge.config import DEFAULT
from sphereforge.errors import ConditioningError, DimensionError, NonUnitError

_INT64_MAX = 2**63 - 1


def dim_homogeneous(t: int, d: int) -> int:
    """Number of degree-``t`` monomials in ``d`` variables, C(t+d-1, d-1)."""
    if t < 0 or d < 1:
        raise ValueError(f"need t >= 0 and d >= 1, got t={t}, d={d}")
    n = math.comb(t + d - 1, d - 1)
    if n > _INT64_MAX:
        raise OverflowError(f"N_(t={t}, d={d}) exceeds the int64 range")
    return n


def _compositions(t: int, d: int):
    if d == 1:
        yield (t,)
        return
    for first in range(t, -1, -1):
        for rest in _compositions(t - first, d - 1):
            yield (first,) + rest


@lru_cache(maxsize=None)
def monomial_exponents(t: int, d: int) -> np.ndarray:
    """Exponent matrix of shape (N_{t,d}, d) in graded-lex order."""
    dim_homogeneous(t, d)
    out = np.array(list(_compositions(t, d)), dtype=np.intp).reshape(-1, d)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def _index(t: int, d: int) -> dict:
    return {tuple(int(v) for v in row): i for i, row in enumerate(monomial_exponents(t, d))}


def double_factorial(n: int) -> int:
    """n!! with the convention (-1)!! = 0!! = 1."""
    if n <= 0:
        return 1
    return math.prod(range(n, 0, -2))


def _sphere_moment_exact(alpha: tuple, d: int) -> Fraction:
    if any(a % 2 for a in alpha):
        return Fraction(0)
    num = math.prod(double_factorial(a - 1) for a in alpha)
    den = math.prod(d + 2 * j for j in range(sum(alpha) // 2))
    return Fraction(num, den)


def sphere_moment(alpha: Iterable[int], d: int) -> float:
    """E[prod x_i^alpha_i] for x uniform on S^{d-1}."""
    alpha = tuple(int(a) for a in alpha)
    if len(alpha) != d:
        raise DimensionError(f"multi-index has length {len(alpha)}, expected {d}")
    if any(a < 0 for a in alpha):
        raise ValueError("exponents must be non-negative")
    return float(_sphere_moment_exact(alpha, d))


@lru_cache(maxsize=None)
def cross_moments(s: int, t: int, d: int) -> np.ndarray:
    """Matrix of sphere moments ``E[x^a x^b]`` for ``|a| = s``, ``|b| = t``."""
    ea, eb = monomial_exponents(s, d), monomial_exponents(t, d)
    cache: dict = {}
    out = np.empty((len(ea), len(eb)))
    for i, a in enumerate(ea):
        for j, b in enumerate(eb):
            key = tuple(int(u) for u in a + b)
            if key not in cache:
                cache[key] = float(_sphere_moment_exact(key, d))
            out[i, j] = cache[key]
    out.setflags(write=False)
    return out


def gram_matrix(t: int, d: int) -> np.ndarray:
    """Gram matrix of the degree-``t`` monomials under the sphere inner product."""
    return np.array(cross_moments(t, t, d))


@dataclass(frozen=True, eq=False)
class HomogeneousPoly:
    """Element of P^d_t, the degree-``t`` homogeneous polynomials in ``d`` variables."""

    d: int
    t: int
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=np.float64).reshape(-1)
        n = dim_homogeneous(self.t, self.d)
        if c.shape[0] != n:
            raise DimensionError(f"expected {n} coefficients for t={self.t}, d={self.d}, got {c.shape[0]}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, d: int, t: int) -> "HomogeneousPoly":
        return cls(d, t, np.zeros(dim_homogeneous(t, d)))

    @classmethod
    def from_terms(cls, d: int, t: int, terms: Mapping[tuple, float]) -> "HomogeneousPoly":
        idx = _index(t, d)
        c = np.zeros(len(idx))
        for alpha, v in terms.items():
            alpha = tuple(int(a) for a in alpha)
            if alpha not in idx:
                raise DimensionError(f"{alpha} is not a degree-{t} exponent in {d} variables")
            c[idx[alpha]] += v
        return cls(d, t, c)

    @classmethod
    def monomial(cls, alpha: Iterable[int]) -> "HomogeneousPoly":
        alpha = tuple(int(a) for a in alpha)
        return cls.from_terms(len(alpha), sum(alpha), {alpha: 1.0})

    @property
    def exponents(self) -> np.ndarray:
        return monomial_exponents(self.t, self.d)

    def terms(self) -> dict:
        return {tuple(int(v) for v in e): float(c) for e, c in zip(self.exponents, self.coeffs) if c != 0.0}

    def __call__(self, x) -> np.ndarray | float:
        return evaluate(self, x)

    def __add__(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        _check_same_space(self, other)
        return HomogeneousPoly(self.d, self.t, self.coeffs + other.coeffs)

    def __sub__(self, other: "HomogeneousPoly") -> "HomogeneousPoly":
        _check_same_space(self, other)
        return HomogeneousPoly(self.d, self.t, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "HomogeneousPoly":
        return HomogeneousPoly(self.d, self.t, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "HomogeneousPoly":
        return HomogeneousPoly(self.d, self.t, -self.coeffs)

    def partial(self, i: int) -> "HomogeneousPoly":
        """Derivative in ``x_i``; the derivative of a constant is the zero constant."""
        if not 0 <= i < self.d:
            raise DimensionError(f"variable index {i} out of range for d={self.d}")
        if self.t == 0:
            return HomogeneousPoly.zero(self.d, 0)
        return HomogeneousPoly(self.d, self.t - 1, _derivative_maps(self.t, self.d)[i] @ self.coeffs)

    def laplacian(self) -> "HomogeneousPoly":
        if self.t < 2:
            return HomogeneousPoly.zero(self.d, 0)
        maps = _derivative_maps(self.t, self.d)
        maps2 = _derivative_maps(self.t - 1, self.d)
        c = sum(maps2[i] @ (maps[i] @ self.coeffs) for i in range(self.d))
        return HomogeneousPoly(self.d, self.t - 2, c)

    def norm(self) -> float:
        return math.sqrt(max(sphere_inner(self, self), 0.0))

    def to_record(self) -> dict:
        return {
            "kind": "polynomial",
            "format_version": 1,
            "ordering": "graded-lex (descending lexicographic within degree)",
            "d": self.d,
            "t": self.t,
            "coefficients": [float(c) for c in self.coeffs],
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "HomogeneousPoly":
        return cls(int(rec["d"]), int(rec["t"]), np.array(rec["coefficients"], dtype=np.float64))

    def dumps(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)

    @classmethod
    def loads(cls, text: str) -> "HomogeneousPoly":
        return cls.from_record(json.loads(text))


def _check_same_space(p: HomogeneousPoly, q: HomogeneousPoly) -> None:
    if p.d != q.d or p.t != q.t:
        raise DimensionError(f"polynomials live in P^{p.d}_{p.t} and P^{q.d}_{q.t}")


@lru_cache(maxsize=None)
def _derivative_maps(t: int, d: int) -> tuple:
    # maps[i] sends degree-t coefficients to the coefficients of d/dx_i
    src = monomial_exponents(t, d)
    dst = _index(t - 1, d)
    maps = []
    for i in range(d):
        m = np.zeros((len(dst), len(src)))
        for j, alpha in enumerate(src):
            if alpha[i] > 0:
                beta = list(int(a) for a in alpha)
                beta[i] -= 1
                m[dst[tuple(beta)], j] = alpha[i]
        m.setflags(write=False)
        maps.append(m)
    return tuple(maps)


def _points(x, d: int) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    if arr.ndim != 2 or arr.shape[1] != d:
        raise DimensionError(f"points have shape {np.shape(x)}, expected (..., {d})")
    return arr, single


def features(x, t: int, d: int) -> np.ndarray:
    """Values of every degree-``t`` monomial at the rows of ``x``, shape (n, N_{t,d})."""
    arr, _ = _points(x, d)
    if t == 0:
        return np.ones((arr.shape[0], 1))
    return kernels.monomial_features(arr, monomial_exponents(t, d))


def evaluate(p: HomogeneousPoly, x):
    """Evaluate ``p`` at a point (shape (d,)) or at many points (shape (n, d))."""
    arr, single = _points(x, p.d)
    vals = features(arr, p.t, p.d) @ p.coeffs
    return float(vals[0]) if single else vals


def gradient(p: HomogeneousPoly, x) -> np.ndarray:
    arr, single = _points(x, p.d)
    if p.t == 0:
        g = np.zeros_like(arr)
    else:
        maps = _derivative_maps(p.t, p.d)
        dc = np.stack([m @ p.coeffs for m in maps], axis=1)
        g = features(arr, p.t - 1, p.d) @ dc
    return g[0] if single else g


def _check_unit(arr: np.ndarray, tol: float) -> None:
    err = np.abs(np.linalg.norm(arr, axis=1) - 1.0)
    if np.any(err > tol):
        raise NonUnitError(f"point off the unit sphere by {err.max():.3g} (tolerance {tol:g})")


def tangential_gradient(p: HomogeneousPoly, y, tol: float = DEFAULT.unit_norm) -> np.ndarray:
    """Component of the gradient orthogonal to the radial direction at unit ``y``."""
    arr, single = _points(y, p.d)
    _check_unit(arr, tol)
    g = gradient(p, arr)
    out = g - np.sum(g * arr, axis=1, keepdims=True) * arr
    return out[0] if single else out


def sphere_inner(p: HomogeneousPoly, q: HomogeneousPoly) -> float:
    """E[p(x) q(x)] over the uniform sphere.  Degrees must share parity."""
    if p.d != q.d:
        raise DimensionError(f"dimension mismatch: {p.d} vs {q.d}")
    if (p.t - q.t) % 2:
        raise ValueError(
            f"degrees {p.t} and {q.t} have mixed parity; homogenize explicitly with homogenize()"
        )
    return float(p.coeffs @ cross_moments(p.t, q.t, p.d) @ q.coeffs)


def multiply(p: HomogeneousPoly, q: HomogeneousPoly) -> HomogeneousPoly:
    if p.d != q.d:
        raise DimensionError(f"dimension mismatch: {p.d} vs {q.d}")
    terms: dict = {}
    for a, ca in p.terms().items():
        for b, cb in q.terms().items():
            key = tuple(x + y for x, y in zip(a, b))
            terms[key] = terms.get(key, 0.0) + ca * cb
    return HomogeneousPoly.from_terms(p.d, p.t + q.t, terms)


def norm_squared_power(d: int, k: int) -> HomogeneousPoly:
    """(x_1^2 + ... + x_d^2)^k as a degree-2k homogeneous polynomial."""
    terms = {}
    for alpha in monomial_exponents(k, d):
        coef = math.factorial(k) / math.prod(math.factorial(int(a)) for a in alpha)
        terms[tuple(2 * int(a) for a in alpha)] = coef
    return HomogeneousPoly.from_terms(d, 2 * k, terms)


def homogenize(p: HomogeneousPoly, k: int) -> HomogeneousPoly:
    """``||x||^{2k} p(x)``: same values on the sphere, degree raised by 2k."""
    if k < 0:
        raise ValueError("k must be non-negative")
    if k == 0:
        return p
    return multiply(p, norm_squared_power(p.d, k))


@dataclass(frozen=True, eq=False)
class OrthonormalBasis:
    """Sphere-orthonormal basis of P^d_t; column ``j`` of ``coeffs`` is the j-th basis polynomial."""

    d: int
    t: int
    coeffs: np.ndarray = field(repr=False)

    @property
    def size(self) -> int:
        return self.coeffs.shape[1]

    @property
    def polys(self) -> list:
        return [HomogeneousPoly(self.d, self.t, self.coeffs[:, j]) for j in range(self.size)]

    def evaluate(self, x) -> np.ndarray:
        """Values of all basis polynomials, shape (n, N)."""
        return features(x, self.t, self.d) @ self.coeffs

    def expand(self, p: HomogeneousPoly) -> np.ndarray:
        """Coordinates of ``p`` in this basis."""
        _check_same_space(p, HomogeneousPoly.zero(self.d, self.t))
        return self.coeffs.T @ gram_matrix(self.t, self.d) @ p.coeffs

    def combine(self, a) -> HomogeneousPoly:
        return HomogeneousPoly(self.d, self.t, self.coeffs @ np.asarray(a, dtype=np.float64))


@lru_cache(maxsize=None)
def orthonormal_basis(t: int, d: int, max_condition: float = DEFAULT.gram_condition) -> OrthonormalBasis:
    """Orthonormal basis via the symmetric inverse square root of the Gram matrix."""
    g = gram_matrix(t, d)
    w, v = np.linalg.eigh(g)
    if w[0] <= 0 or w[-1] / w[0] > max_condition:
        raise ConditioningError(
            f"Gram matrix for t={t}, d={d} has condition {w[-1] / max(w[0], 1e-300):.3g} "
            f"(limit {max_condition:g})"
        )
    c = (v / np.sqrt(w)) @ v.T
    c.setflags(write=False)
    return OrthonormalBasis(d, t, c)


def random_unit_poly(t: int, d: int, rng: np.random.Generator) -> HomogeneousPoly:
    """A random element of the unit sphere of P^d_t (rotation-invariant in basis coordinates)."""
    basis = orthonormal_basis(t, d)
    a = rng.standard_normal(basis.size)
    return basis.combine(a / np.linalg.norm(a))


@dataclass(frozen=True, eq=False)
class GradedPoly:
    """A sum of homogeneous parts of different degrees in the same variables."""

    d: int
    parts: dict = field(default_factory=dict)

    def __post_init__(self):
        for deg, p in self.parts.items():
            if p.d != self.d or p.t != deg:
                raise DimensionError(f"part of degree {deg} does not match dimension {self.d}")

    @classmethod
    def from_terms(cls, d: int, terms: Mapping[tuple, float]) -> "GradedPoly":
        by_deg: dict = {}
        for alpha, c in terms.items():
            by_deg.setdefault(sum(alpha), {})[tuple(alpha)] = c
        return cls(d, {deg: HomogeneousPoly.from_terms(d, deg, t) for deg, t in sorted(by_deg.items())})

    @property
    def degree(self) -> int:
        live = [deg for deg, p in self.parts.items() if np.any(p.coeffs != 0)]
        return max(live) if live else 0

    def __call__(self, x):
        arr, single = _points(x, self.d)
        out = np.zeros(arr.shape[0])
        for p in self.parts.values():
            out += evaluate(p, arr)
        return float(out[0]) if single else out

    def __add__(self, other: "GradedPoly") -> "GradedPoly":
        if other.d != self.d:
            raise DimensionError("dimension mismatch")
        parts = dict(self.parts)
        for deg, p in other.parts.items():
            parts[deg] = parts[deg] + p if deg in parts else p
        return GradedPoly(self.d, dict(sorted(parts.items())))

    def __mul__(self, scalar: float) -> "GradedPoly":
        return GradedPoly(self.d, {deg: p * scalar for deg, p in self.parts.items()})

    __rmul__ = __mul__

    def terms(self) -> dict:
        out = {}
        for p in self.parts.values():
            out.update(p.terms())
        return out
