# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dense boundary-integral kernels.

Same contract as :mod:`febe._kernels_py`; see that module for the
definitions of ``F``, ``I0`` and ``I1``.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport atan2, log, sqrt, fmax

cnp.import_array()

cdef double TINY = 1e-300


cdef inline void _local(double x, double y, double ax, double ay, double bx, double by,
                        double *L, double *tx, double *ty, double *xi, double *eta) noexcept nogil:
    cdef double dx = bx - ax, dy = by - ay
    L[0] = sqrt(dx * dx + dy * dy)
    tx[0] = dx / L[0]
    ty[0] = dy / L[0]
    xi[0] = (x - ax) * tx[0] + (y - ay) * ty[0]
    eta[0] = (x - ax) * ty[0] - (y - ay) * tx[0]


def slp_galerkin(double[:, ::1] xq, double[::1] wq, long[::1] owner, Py_ssize_t nrows,
                 double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t nq = xq.shape[0], m = a.shape[0], q, j
    out_arr = np.zeros((nrows, m))
    cdef double[:, ::1] out = out_arr
    cdef double L, tx, ty, xi, eta, ra2, rb2, theta, w
    with nogil:
        for q in range(nq):
            w = wq[q]
            for j in range(m):
                _local(xq[q, 0], xq[q, 1], a[j, 0], a[j, 1], b[j, 0], b[j, 1],
                       &L, &tx, &ty, &xi, &eta)
                ra2 = xi * xi + eta * eta
                rb2 = (L - xi) * (L - xi) + eta * eta
                theta = atan2(eta * L, eta * eta - xi * (L - xi))
                out[owner[q], j] += w * (0.5 * ((L - xi) * log(fmax(rb2, TINY))
                                                + xi * log(fmax(ra2, TINY))) - L + eta * theta)
    return out_arr


def dlp_galerkin(double[:, ::1] xq, double[::1] wq, long[::1] owner, Py_ssize_t nrows,
                 double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t nq = xq.shape[0], m = a.shape[0], q, j, i
    k0_arr = np.zeros((nrows, m))
    k1_arr = np.zeros((nrows, m))
    cdef double[:, ::1] k0 = k0_arr
    cdef double[:, ::1] k1 = k1_arr
    cdef double L, tx, ty, xi, eta, ra2, rb2, i0, i1, w
    with nogil:
        for q in range(nq):
            w = wq[q]
            i = owner[q]
            for j in range(m):
                if j == i:
                    continue
                _local(xq[q, 0], xq[q, 1], a[j, 0], a[j, 1], b[j, 0], b[j, 1],
                       &L, &tx, &ty, &xi, &eta)
                ra2 = xi * xi + eta * eta
                rb2 = (L - xi) * (L - xi) + eta * eta
                i0 = -atan2(eta * L, eta * eta - xi * (L - xi))
                i1 = (-0.5 * eta * (log(fmax(rb2, TINY)) - log(fmax(ra2, TINY))) + xi * i0) / L
                k0[i, j] += w * (i0 - i1)
                k1[i, j] += w * i1
    return k0_arr, k1_arr


def slp_grad_apply(double[:, ::1] x, long[::1] own, double[:, ::1] a, double[:, ::1] b,
                   double[::1] dens):
    cdef Py_ssize_t n = x.shape[0], m = a.shape[0], k, j
    out_arr = np.zeros((n, 2))
    cdef double[:, ::1] out = out_arr
    cdef double L, tx, ty, xi, eta, ra2, rb2, dxi, deta, gx, gy
    with nogil:
        for k in range(n):
            gx = 0.0
            gy = 0.0
            for j in range(m):
                _local(x[k, 0], x[k, 1], a[j, 0], a[j, 1], b[j, 0], b[j, 1],
                       &L, &tx, &ty, &xi, &eta)
                ra2 = xi * xi + eta * eta
                rb2 = (L - xi) * (L - xi) + eta * eta
                dxi = 0.5 * (log(fmax(ra2, TINY)) - log(fmax(rb2, TINY)))
                if j == own[k]:
                    deta = 0.0
                else:
                    deta = atan2(eta * L, eta * eta - xi * (L - xi))
                gx += dens[j] * (dxi * tx + deta * ty)
                gy += dens[j] * (dxi * ty - deta * tx)
            out[k, 0] = gx
            out[k, 1] = gy
    return out_arr


def dlp_grad_apply(double[:, ::1] x, long[::1] own, double[:, ::1] a, double[:, ::1] b,
                   double[::1] d_start, double[::1] d_end):
    cdef Py_ssize_t n = x.shape[0], m = a.shape[0], k, j
    out_arr = np.zeros((n, 2))
    cdef double[:, ::1] out = out_arr
    cdef double L, tx, ty, xi, eta, ra2, rb2, la, lb, i0, c1
    cdef double d0xi, d0eta, d1xi, d1eta, gxi, geta, gx, gy
    with nogil:
        for k in range(n):
            gx = 0.0
            gy = 0.0
            for j in range(m):
                if j == own[k]:
                    continue
                _local(x[k, 0], x[k, 1], a[j, 0], a[j, 1], b[j, 0], b[j, 1],
                       &L, &tx, &ty, &xi, &eta)
                ra2 = fmax(xi * xi + eta * eta, TINY)
                rb2 = fmax((L - xi) * (L - xi) + eta * eta, TINY)
                la = log(ra2)
                lb = log(rb2)
                i0 = -atan2(eta * L, eta * eta - xi * (L - xi))
                d0xi = eta / rb2 - eta / ra2
                d0eta = (L - xi) / rb2 + xi / ra2
                d1xi = eta * d0eta + i0 + xi * d0xi
                d1eta = -0.5 * (lb - la) - eta * eta / rb2 + eta * eta / ra2 + xi * d0eta
                c1 = (d_end[j] - d_start[j]) / L
                gxi = d_start[j] * d0xi + c1 * d1xi
                geta = d_start[j] * d0eta + c1 * d1eta
                gx += gxi * tx + geta * ty
                gy += gxi * ty - geta * tx
            out[k, 0] = gx
            out[k, 1] = gy
    return out_arr
