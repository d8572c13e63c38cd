"""Pure numpy implementations of the hot kernels.

Selected automatically when the compiled extension is unavailable, and
kept as the reference the compiled kernels are tested against.
"""
from __future__ import annotations

import math

import numpy as np


def power_table(x: np.ndarray, maxdeg: int) -> np.ndarray:
    n, d = x.shape
    out = np.empty((n, d, maxdeg + 1))
    out[:, :, 0] = 1.0
    for j in range(1, maxdeg + 1):
        out[:, :, j] = out[:, :, j - 1] * x
    return out


def hermite_table(x: np.ndarray, maxdeg: int) -> np.ndarray:
    # He_{j+1} = x He_j - j He_{j-1}, then scale by 1/sqrt(j!)
    n, d = x.shape
    out = np.empty((n, d, maxdeg + 1))
    out[:, :, 0] = 1.0
    if maxdeg >= 1:
        out[:, :, 1] = x
    for j in range(1, maxdeg):
        out[:, :, j + 1] = x * out[:, :, j] - j * out[:, :, j - 1]
    # same rounding as the compiled kernel: multiply by 1/sqrt of a running float product
    f = 1.0
    for j in range(1, maxdeg + 1):
        f *= j
        if j >= 2:
            out[:, :, j] *= 1.0 / math.sqrt(f)
    return out


def table_products(table: np.ndarray, exps: np.ndarray) -> np.ndarray:
    n, d, _ = table.shape
    m = exps.shape[0]
    out = np.ones((n, m))
    for i in range(d):
        col = exps[:, i]
        if np.any(col):
            out *= table[:, i, :][:, col]
    return out


def sign_mixture(proj: np.ndarray, weights: np.ndarray) -> np.ndarray:
    signs = np.where(proj >= 0.0, 1.0, -1.0)
    return signs @ weights


def table_products_fm(table_t: np.ndarray, exps: np.ndarray) -> np.ndarray:
    d, _, n = table_t.shape
    out = np.ones((exps.shape[0], n))
    for j, row in enumerate(exps):
        for i in np.flatnonzero(row):
            out[j] *= table_t[i, row[i]]
    return out


def chained_products_fm(table_t, base, parent, coord, deg) -> np.ndarray:
    out = np.empty((parent.shape[0], table_t.shape[2]))
    out[0] = base
    for j in range(1, parent.shape[0]):
        np.multiply(out[parent[j]], table_t[coord[j], deg[j]], out=out[j])
    return out
