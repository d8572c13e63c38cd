"""Hot kernels with a compiled core and a numpy fallback.

The compiled extension is used when it imports; setting the environment
variable ``SPHEREFORGE_PURE_PYTHON=1`` forces the fallback.  The table
kernels agree bit for bit across backends; ``sign_mixture`` may differ in
the last ulp because the fallback sums through BLAS.
"""
from __future__ import annotations

import os

import numpy as np

from sphereforge import _pykernels

_ext = None
if os.environ.get("SPHEREFORGE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from sphereforge import _ckernels as _ext
    except ImportError:  # extension not built
        _ext = None

BACKEND = "cython" if _ext is not None else "python"
_NO_EXT = object()


def _as_points(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a 2-D array of points, got shape {x.shape}")
    return x


def _csr(exps: np.ndarray):
    nz = exps != 0
    counts = nz.sum(axis=1)
    indptr = np.zeros(exps.shape[0] + 1, dtype=np.intp)
    np.cumsum(counts, out=indptr[1:])
    rows, cols = np.nonzero(nz)
    return indptr, cols.astype(np.intp), exps[rows, cols].astype(np.intp)


def power_table(x, maxdeg: int, backend: str | None = None) -> np.ndarray:
    """Table ``T[a, i, j] = x[a, i] ** j`` for ``j <= maxdeg``."""
    x = _as_points(x)
    if _pick(backend) is _ext:
        return _ext.power_table(x, int(maxdeg))
    return _pykernels.power_table(x, int(maxdeg))


def hermite_table(x, maxdeg: int, backend: str | None = None) -> np.ndarray:
    """Table ``T[a, i, j] = h_j(x[a, i])`` of normalized Hermite values."""
    x = _as_points(x)
    if _pick(backend) is _ext:
        return _ext.hermite_table(x, int(maxdeg))
    return _pykernels.hermite_table(x, int(maxdeg))


def table_products(table, exps, backend: str | None = None) -> np.ndarray:
    """``out[a, j] = prod_i table[a, i, exps[j, i]]``.

    With a power table this evaluates monomials, with a Hermite table the
    product Hermite polynomials ``H_J``.  Requires ``table[:, :, 0] == 1``.
    """
    table = np.ascontiguousarray(table, dtype=np.float64)
    exps = np.asarray(exps, dtype=np.intp)
    if exps.ndim != 2 or exps.shape[1] != table.shape[1]:
        raise ValueError("exponent matrix does not match table dimension")
    if exps.size and exps.max() >= table.shape[2]:
        raise ValueError("exponent exceeds table degree")
    if _pick(backend) is _ext:
        return _ext.table_products_csr(table, *_csr(exps))
    return _pykernels.table_products(table, exps)


def table_products_fm(table_t, exps, backend: str | None = None) -> np.ndarray:
    """Feature-major variant: ``table_t[i, e, a]`` in, ``out[j, a]`` out.

    The inner loop runs over contiguous samples, which suits long batches.
    """
    table_t = np.ascontiguousarray(table_t, dtype=np.float64)
    exps = np.asarray(exps, dtype=np.intp)
    if exps.ndim != 2 or exps.shape[1] != table_t.shape[0]:
        raise ValueError("exponent matrix does not match table dimension")
    if exps.size and exps.max() >= table_t.shape[1]:
        raise ValueError("exponent exceeds table degree")
    if _pick(backend) is _ext:
        return _ext.table_products_fm(table_t, *_csr(exps))
    return _pykernels.table_products_fm(table_t, exps)


def product_chain(exps: np.ndarray):
    """Parent links for building each row of ``exps`` (row 0 must be zero) from an
    earlier row by one factor: ``(parent, coord, deg)``."""
    exps = np.asarray(exps, dtype=np.intp)
    index = {tuple(r): j for j, r in enumerate(exps)}
    m = exps.shape[0]
    parent = np.zeros(m, dtype=np.intp)
    coord = np.zeros(m, dtype=np.intp)
    deg = np.zeros(m, dtype=np.intp)
    if m and exps[0].any():
        raise ValueError("row 0 must be the zero exponent")
    for j in range(1, m):
        i = int(np.flatnonzero(exps[j])[0])
        p = exps[j].copy()
        p[i] = 0
        if tuple(p) not in index:
            raise ValueError(f"row {j} has no parent row {tuple(p)}")
        parent[j] = index[tuple(p)]
        if parent[j] >= j:
            raise ValueError("rows must be ordered so every parent comes first")
        coord[j], deg[j] = i, exps[j, i]
    return parent, coord, deg


def chained_products_fm(table_t, base, chain, backend: str | None = None) -> np.ndarray:
    """Feature-major products built one factor at a time along ``chain``
    (from :func:`product_chain`); row 0 equals ``base``."""
    table_t = np.ascontiguousarray(table_t, dtype=np.float64)
    base = np.ascontiguousarray(base, dtype=np.float64)
    parent, coord, deg = chain
    if _pick(backend) is _ext:
        return _ext.chained_products_fm(table_t, base, parent, coord, deg)
    return _pykernels.chained_products_fm(table_t, base, parent, coord, deg)


def monomial_features(x, exps, backend: str | None = None) -> np.ndarray:
    exps = np.asarray(exps, dtype=np.intp)
    x = _as_points(x)
    maxdeg = int(exps.max()) if exps.size else 0
    return table_products(power_table(x, maxdeg, backend), exps, backend)


def sign_mixture(proj, weights, backend: str | None = None) -> np.ndarray:
    """``sum_l weights[l] * sign(proj[a, l])`` with ``sign(0) = +1``."""
    proj = np.ascontiguousarray(proj, dtype=np.float64)
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    if _pick(backend) is _ext:
        return _ext.sign_mixture(proj, weights)
    return _pykernels.sign_mixture(proj, weights)


def _pick(backend):
    if backend is None:
        return _ext if _ext is not None else _NO_EXT
    if backend == "python":
        return _NO_EXT
    if backend == "cython":
        if _ext is None:
            raise RuntimeError("compiled kernels are not available")
        return _ext
    raise ValueError(f"unknown backend {backend!r}")
