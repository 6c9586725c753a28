# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops; same API as _pykernels."""
from libc.math cimport fabs, INFINITY

import numpy as np

cdef enum:
    SIMPLEX_OPTIMAL = 0
    SIMPLEX_UNBOUNDED = 1
    SIMPLEX_MAXITER = 2


cdef void _pivot(double[:, ::1] T, Py_ssize_t row, Py_ssize_t col) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t nr = T.shape[0]
    cdef Py_ssize_t nc = T.shape[1]
    cdef double p = T[row, col]
    cdef double f
    for j in range(nc):
        T[row, j] /= p
    for i in range(nr):
        if i == row:
            continue
        f = T[i, col]
        if f != 0.0:
            for j in range(nc):
                T[i, j] -= f * T[row, j]
            T[i, col] = 0.0


def pivot(double[:, ::1] T, Py_ssize_t row, Py_ssize_t col):
    _pivot(T, row, col)


cdef int _simplex(double[:, ::1] T, long[::1] basis, Py_ssize_t n_allowed,
                  long max_iter, double tol, long bland_after, long* n_it) noexcept nogil:
    cdef Py_ssize_t m = T.shape[0] - 1
    cdef Py_ssize_t rhs = T.shape[1] - 1
    cdef Py_ssize_t i, j, col, row
    cdef long degenerate = 0
    cdef bint bland = False
    cdef double best, ratio, rmin, a, amax
    n_it[0] = 0
    while n_it[0] < max_iter:
        col = -1
        best = -tol
        for j in range(n_allowed):
            if T[m, j] < best:
                col = j
                if bland:
                    break
                best = T[m, j]
        if col < 0:
            return SIMPLEX_OPTIMAL
        rmin = INFINITY
        for i in range(m):
            a = T[i, col]
            if a > tol:
                ratio = T[i, rhs] / a
                if ratio < rmin:
                    rmin = ratio
        if rmin == INFINITY:
            return SIMPLEX_UNBOUNDED
        # among ratio ties take the largest pivot element (tiny pivots on
        # degenerate rows wreck the tableau); under Bland take the lowest
        # basis index among the well-conditioned ties
        amax = 0.0
        for i in range(m):
            a = T[i, col]
            if a > tol and T[i, rhs] / a <= rmin + tol and a > amax:
                amax = a
                row = i
        if bland:
            row = -1
            for i in range(m):
                a = T[i, col]
                if a >= 1e-6 * amax and a > tol and T[i, rhs] / a <= rmin + tol:
                    if row < 0 or basis[i] < basis[row]:
                        row = i
        if rmin <= tol:
            degenerate += 1
            if degenerate > bland_after:
                bland = True
        else:
            degenerate = 0
        _pivot(T, row, col)
        basis[row] = col
        # round-off can push a degenerate basic variable slightly negative;
        # left alone, the ratio test then picks negative steps and cycles
        for i in range(m):
            if T[i, rhs] < 0.0 and T[i, rhs] > -tol:
                T[i, rhs] = 0.0
        n_it[0] += 1
    return SIMPLEX_MAXITER


def simplex_iterate(double[:, ::1] T, long[::1] basis, Py_ssize_t n_allowed,
                    long max_iter, double tol, long bland_after):
    cdef long n_it = 0
    cdef int status
    with nogil:
        status = _simplex(T, basis, n_allowed, max_iter, tol, bland_after, &n_it)
    return status, n_it


cdef void _chol_solve(double[:, ::1] L, double[::1] b, double[::1] out) noexcept nogil:
    cdef Py_ssize_t n = L.shape[0]
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = out[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


def admm_iterate(double[:, ::1] P, double[::1] q, double[:, ::1] A, double[::1] l,
                 double[::1] u, double[::1] rho, double sigma, double alpha,
                 double[:, ::1] L, double[::1] x, double[::1] z, double[::1] y,
                 double[::1] x_prev, double[::1] y_prev, long n_iter):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t m = z.shape[0]
    cdef Py_ssize_t i, j
    cdef long it
    cdef double s, zr, zn
    cdef double[::1] rhs = np.empty(n)
    cdef double[::1] xt = np.empty(n)
    cdef double[::1] w = np.empty(m)
    with nogil:
        for it in range(n_iter):
            for j in range(n):
                x_prev[j] = x[j]
                rhs[j] = sigma * x[j] - q[j]
            for i in range(m):
                y_prev[i] = y[i]
                w[i] = rho[i] * z[i] - y[i]
            for i in range(m):
                s = w[i]
                if s != 0.0:
                    for j in range(n):
                        rhs[j] += A[i, j] * s
            _chol_solve(L, rhs, xt)
            for j in range(n):
                x[j] = alpha * xt[j] + (1.0 - alpha) * x[j]
            for i in range(m):
                s = 0.0
                for j in range(n):
                    s += A[i, j] * xt[j]
                zr = alpha * s + (1.0 - alpha) * z[i]
                zn = zr + y[i] / rho[i]
                if zn < l[i]:
                    zn = l[i]
                elif zn > u[i]:
                    zn = u[i]
                y[i] += rho[i] * (zr - zn)
                z[i] = zn
