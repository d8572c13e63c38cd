"""Gaussian-side moment machinery.

Normalized probabilists' Hermite polynomials ``h_n = He_n / sqrt(n!)``,
the Hermite coefficients of ``sign`` (with ``sign(0) = +1``), and the
correlation ``E_{z ~ N_m}[p(z) sign(<v, z>)]`` viewed as a polynomial in
the unit vector ``v``.

Two independent routes compute that correlation:

* :func:`gaussian_corr_sign` splits ``z = s v + zeta`` with ``s = <v, z>``
  and ``zeta`` Gaussian on the orthogonal complement, Taylor-expands ``p``
  along ``v`` and pairs one-dimensional sign moments of ``s`` with Gaussian
  moments of ``zeta``.
* :func:`corr_polynomial_in_v` expands ``p`` in the product Hermite basis
  and uses ``E[sign(<v, z>) H_J(z)] = c_|J| sqrt(|J|! / J!) v^J``.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from sphereforge.errors import DimensionError, NonUnitError
from sphereforge.polycore import GradedPoly, HomogeneousPoly, double_factorial, monomial_exponents

SQRT_2PI = math.sqrt(2.0 * math.pi)


def hermite_1d(n: int, x):
    """Normalized Hermite polynomial ``h_n(x)``; vectorized over ``x``."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, dtype=np.float64)
    prev, cur = np.ones_like(x), x.copy()
    if n == 0:
        out = prev
    else:
        for j in range(1, n):
            prev, cur = cur, x * cur - j * prev
        out = cur / math.sqrt(math.factorial(n))
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def hermite_e_power_coeffs(n: int) -> tuple:
    """Coefficients of He_n in the power basis, index = power."""
    c = [0] * (n + 1)
    for m in range(n // 2 + 1):
        c[n - 2 * m] = (-1) ** m * math.factorial(n) // (math.factorial(m) * math.factorial(n - 2 * m) * 2**m)
    return tuple(c)


def hermite_e_at_zero(n: int) -> int:
    if n % 2:
        return 0
    return (-1) ** (n // 2) * double_factorial(n - 1)


def sign_hermite_coeff(k: int) -> float:
    """E[sign(x) h_k(x)] for x ~ N(0, 1)."""
    if k < 0:
        raise ValueError("degree must be non-negative")
    if k % 2 == 0:
        return 0.0
    # He_{k-1}(0)^2 / k! kept exact so large k neither overflows nor loses digits
    h0 = hermite_e_at_zero(k - 1)
    ratio = Fraction(h0 * h0, math.factorial(k))
    return math.copysign(2.0 * math.sqrt(float(ratio)) / SQRT_2PI, 1 if h0 > 0 else -1)


@dataclass(frozen=True, eq=False)
class HermiteCoeffTable:
    max_degree: int
    coeffs: np.ndarray = field(repr=False)

    def partial_energy(self) -> np.ndarray:
        """Cumulative sums of squared coefficients (Parseval partial sums)."""
        return np.cumsum(self.coeffs**2)


@lru_cache(maxsize=None)
def sign_coeff_table(max_degree: int) -> HermiteCoeffTable:
    c = np.array([sign_hermite_coeff(k) for k in range(max_degree + 1)])
    c.setflags(write=False)
    return HermiteCoeffTable(max_degree, c)


def gaussian_monomial_moment(alpha) -> float:
    """E[prod z_i^alpha_i] for z ~ N(0, I)."""
    alpha = tuple(int(a) for a in alpha)
    if any(a < 0 for a in alpha):
        raise ValueError("exponents must be non-negative")
    if any(a % 2 for a in alpha):
        return 0.0
    return float(math.prod(double_factorial(a - 1) for a in alpha))


def half_sign_moment(n: int) -> float:
    """E[s^n sign(s)] for s ~ N(0, 1), i.e. E|s|^n for odd n and 0 for even n."""
    if n % 2 == 0:
        return 0.0
    m = (n - 1) // 2
    return 2.0**m * math.factorial(m) * math.sqrt(2.0 / math.pi)


def _check_unit_vector(v: np.ndarray, tol: float) -> None:
    if abs(np.linalg.norm(v) - 1.0) > tol:
        raise NonUnitError(f"v has norm {np.linalg.norm(v):.15g}, expected 1")


def _directional(p: HomogeneousPoly, v: np.ndarray) -> HomogeneousPoly:
    out = p.partial(0) * v[0]
    for i in range(1, p.d):
        out = out + p.partial(i) * v[i]
    return out


def _projected_gaussian_mean(q: HomogeneousPoly, proj: np.ndarray) -> float:
    # E[q(zeta)] for zeta ~ N(0, proj) equals ((L/2)^j q / j!) with L = sum_ab proj_ab d_a d_b
    if q.t % 2:
        return 0.0
    cur = q
    for _ in range(q.t // 2):
        nxt = None
        for a in range(q.d):
            da = cur.partial(a)
            for b in range(q.d):
                if proj[a, b] == 0.0:
                    continue
                term = da.partial(b) * proj[a, b]
                nxt = term if nxt is None else nxt + term
        cur = nxt if nxt is not None else HomogeneousPoly.zero(q.d, cur.t - 2)
    j = q.t // 2
    return float(cur.coeffs[0]) / (2.0**j * math.factorial(j))


def gaussian_corr_sign(p: HomogeneousPoly | GradedPoly, v, tol: float = 1e-12) -> float:
    """E_{z ~ N_m}[p(z) sign(<v, z>)] computed analytically for unit ``v``."""
    v = np.asarray(v, dtype=np.float64)
    parts = p.parts.values() if isinstance(p, GradedPoly) else [p]
    total = 0.0
    for part in parts:
        if v.shape != (part.d,):
            raise DimensionError(f"v has shape {v.shape}, expected ({part.d},)")
        _check_unit_vector(v, tol)
        proj = np.eye(part.d) - np.outer(v, v)
        cur = part
        for k in range(part.t + 1):
            if k % 2 == 1 and (part.t - k) % 2 == 0:
                total += half_sign_moment(k) / math.factorial(k) * _projected_gaussian_mean(cur, proj)
            if k < part.t:
                cur = _directional(cur, v)
    return total


def _power_to_hermite(n: int, j: int) -> float:
    # coefficient of h_j in the expansion of x^n
    if j > n or (n - j) % 2:
        return 0.0
    m = (n - j) // 2
    return math.factorial(n) / (2**m * math.factorial(m) * math.sqrt(math.factorial(j)))


def hermite_expansion(p: HomogeneousPoly | GradedPoly) -> dict:
    """Coefficients ``{J: a_J}`` with ``p = sum_J a_J H_J``."""
    terms = p.terms()
    out: dict = {}
    for alpha, c in terms.items():
        choices = [range(a, -1, -2) for a in alpha]
        for J in itertools.product(*choices):
            coef = c * math.prod(_power_to_hermite(a, j) for a, j in zip(alpha, J))
            out[J] = out.get(J, 0.0) + coef
    return out


def hermite_poly(J) -> GradedPoly:
    """``H_J(z) = prod_i h_{J_i}(z_i)`` as a sum of homogeneous parts."""
    J = tuple(int(j) for j in J)
    factors = []
    for j in J:
        c = hermite_e_power_coeffs(j)
        s = 1.0 / math.sqrt(math.factorial(j))
        factors.append([(e, c[e] * s) for e in range(j + 1) if c[e] != 0])
    terms: dict = {}
    for combo in itertools.product(*factors):
        alpha = tuple(e for e, _ in combo)
        terms[alpha] = terms.get(alpha, 0.0) + math.prod(c for _, c in combo)
    return GradedPoly.from_terms(len(J), terms)


def hermite_sign_corr_coeff(J) -> float:
    """``c_|J| sqrt(|J|! / J!)``: the coefficient of ``v^J`` in ``E[sign(<v,z>) H_J(z)]``."""
    k = sum(J)
    return sign_hermite_coeff(k) * math.sqrt(math.factorial(k) / math.prod(math.factorial(j) for j in J))


def corr_polynomial_in_v(p: HomogeneousPoly | GradedPoly) -> GradedPoly:
    """Polynomial ``q`` with ``q(v) = E[p(z) sign(<v, z>)]`` for every unit ``v``."""
    d = p.d
    terms: dict = {}
    for J, a in hermite_expansion(p).items():
        if sum(J) % 2 == 0:
            continue
        terms[J] = terms.get(J, 0.0) + a * hermite_sign_corr_coeff(J)
    if not terms:
        deg = p.t if isinstance(p, HomogeneousPoly) else max(p.parts, default=0)
        return GradedPoly(d, {deg: HomogeneousPoly.zero(d, deg)})
    return GradedPoly.from_terms(d, terms)


def odd_hermite_indices(m: int, k: int) -> list:
    """Multi-indices J in ``m`` variables with odd ``|J| < k``, ordered by degree then graded-lex."""
    out = []
    for s in range(1, k, 2):
        out.extend(tuple(int(a) for a in row) for row in monomial_exponents(s, m))
    return out


@lru_cache(maxsize=None)
def _odd_corr_polys(m: int, k: int) -> tuple:
    return tuple((J, corr_polynomial_in_v(hermite_poly(J))) for J in odd_hermite_indices(m, k))


def gaussian_residuals(points, weights, k: int) -> dict:
    """Per odd degree ``s < k``: max over ``|J| = s`` of ``|E_z[g(z) H_J(z)]|``."""
    points = np.asarray(points, dtype=np.float64)
    weights = np.asarray(weights, dtype=np.float64)
    m = points.shape[1]
    out: dict = {}
    for J, q in _odd_corr_polys(m, k):
        val = abs(float(weights @ q(points)))
        s = sum(J)
        out[s] = max(out.get(s, 0.0), val)
    return out


def mixture_gaussian_residual(design, k: int) -> float:
    """Largest correlation of ``g(z) = sum_l w_l sign(<v_l, z>)`` with an odd Hermite
    basis polynomial of degree below ``k``.  Zero exactly when ``g`` matches the
    null's low-degree moments."""
    if k < 1:
        raise ValueError("k must be at least 1")
    res = gaussian_residuals(design.points, design.weights, k)
    return max(res.values(), default=0.0)
