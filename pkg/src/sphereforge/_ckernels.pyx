# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels.  Same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def power_table(const double[:, ::1] x, int maxdeg):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], a, i
    cdef int j
    out = np.empty((n, d, maxdeg + 1))
    cdef double[:, :, ::1] o = out
    cdef double v
    with nogil:
        for a in range(n):
            for i in range(d):
                v = x[a, i]
                o[a, i, 0] = 1.0
                for j in range(1, maxdeg + 1):
                    o[a, i, j] = o[a, i, j - 1] * v
    return out


def hermite_table(const double[:, ::1] x, int maxdeg):
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1], a, i
    cdef int j
    out = np.empty((n, d, maxdeg + 1))
    cdef double[:, :, ::1] o = out
    scale_arr = np.ones(maxdeg + 1)
    cdef double[::1] scale = scale_arr
    cdef double f = 1.0
    for j in range(1, maxdeg + 1):
        f *= j
        scale[j] = 1.0 / sqrt(f)
    cdef double v, hm, h, hp
    with nogil:
        for a in range(n):
            for i in range(d):
                v = x[a, i]
                o[a, i, 0] = 1.0
                if maxdeg >= 1:
                    o[a, i, 1] = v
                hm = 1.0
                h = v
                for j in range(1, maxdeg):
                    hp = v * h - j * hm
                    hm = h
                    h = hp
                    o[a, i, j + 1] = hp * scale[j + 1]
    return out


def table_products_csr(const double[:, :, ::1] table,
                       const Py_ssize_t[::1] indptr,
                       const Py_ssize_t[::1] coords,
                       const Py_ssize_t[::1] degs):
    cdef Py_ssize_t n = table.shape[0]
    cdef Py_ssize_t m = indptr.shape[0] - 1
    cdef Py_ssize_t a, j, k
    cdef double acc
    out = np.empty((n, m))
    cdef double[:, ::1] o = out
    with nogil:
        for a in range(n):
            for j in range(m):
                acc = 1.0
                for k in range(indptr[j], indptr[j + 1]):
                    acc = acc * table[a, coords[k], degs[k]]
                o[a, j] = acc
    return out


def sign_mixture(const double[:, ::1] proj, const double[::1] weights):
    cdef Py_ssize_t n = proj.shape[0], r = proj.shape[1], a, l
    cdef double acc
    out = np.empty(n)
    cdef double[::1] o = out
    with nogil:
        for a in range(n):
            acc = 0.0
            for l in range(r):
                if proj[a, l] >= 0.0:
                    acc = acc + weights[l]
                else:
                    acc = acc - weights[l]
            o[a] = acc
    return out


def table_products_fm(const double[:, :, ::1] table_t,
                      const Py_ssize_t[::1] indptr,
                      const Py_ssize_t[::1] coords,
                      const Py_ssize_t[::1] degs):
    # table_t[i, e, a]; output is feature-major, out[j, a]
    cdef Py_ssize_t n = table_t.shape[2]
    cdef Py_ssize_t m = indptr.shape[0] - 1
    cdef Py_ssize_t a, j, k
    cdef const double[::1] row
    out = np.empty((m, n))
    cdef double[:, ::1] o = out
    with nogil:
        for j in range(m):
            for a in range(n):
                o[j, a] = 1.0
            for k in range(indptr[j], indptr[j + 1]):
                row = table_t[coords[k], degs[k]]
                for a in range(n):
                    o[j, a] = o[j, a] * row[a]
    return out


def chained_products_fm(const double[:, :, ::1] table_t,
                        const double[::1] base,
                        const Py_ssize_t[::1] parent,
                        const Py_ssize_t[::1] coord,
                        const Py_ssize_t[::1] deg):
    # row 0 is base; row j = row parent[j] * table_t[coord[j], deg[j]]
    cdef Py_ssize_t n = table_t.shape[2]
    cdef Py_ssize_t m = parent.shape[0]
    cdef Py_ssize_t a, j
    out = np.empty((m, n))
    cdef double[:, ::1] o = out
    cdef const double[::1] row
    with nogil:
        for a in range(n):
            o[0, a] = base[a]
        for j in range(1, m):
            row = table_t[coord[j], deg[j]]
            for a in range(n):
                o[j, a] = o[parent[j], a] * row[a]
    return out
