# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Native implementations of the hot kernels (see pykern.py for semantics)."""

import numpy as np

from libc.math cimport exp, log

DEF QMIN = 1e-12


def sq_dists(double[:, ::1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff
    out_arr = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    for i in range(n):
        out[i, i] = 0.0
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = x[i, k] - x[j, k]
                acc += diff * diff
            out[i, j] = acc
            out[j, i] = acc
    return out_arr


def tsne_forces(double[:, ::1] y, double[:, ::1] p_grad, double[:, ::1] p_kl):
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t d = y.shape[1]
    cdef Py_ssize_t i, j, k
    cdef double acc, diff, s, q, w, pij, kl
    num_arr = np.empty((n, n), dtype=np.float64)
    grad_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] num = num_arr
    cdef double[:, ::1] grad = grad_arr

    s = 0.0
    for i in range(n):
        num[i, i] = 0.0
        for j in range(i + 1, n):
            acc = 0.0
            for k in range(d):
                diff = y[i, k] - y[j, k]
                acc += diff * diff
            acc = 1.0 / (1.0 + acc)
            num[i, j] = acc
            num[j, i] = acc
            s += 2.0 * acc

    kl = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            q = num[i, j] / s
            w = (p_grad[i, j] - q) * num[i, j]
            for k in range(d):
                grad[i, k] += 4.0 * w * (y[i, k] - y[j, k])
            pij = p_kl[i, j]
            if pij > 0.0:
                kl += pij * log(pij / max(q, QMIN))
    return grad_arr, kl


def mixture_logpdf(double[:, ::1] queries, double[:, ::1] supports,
                   double a00, double a10, double a11, double log_norm):
    cdef Py_ssize_t n = queries.shape[0]
    cdef Py_ssize_t m = supports.shape[0]
    cdef Py_ssize_t i, j
    cdef double dx, dy, u1, u2, e, best, acc
    out_arr = np.empty(n, dtype=np.float64)
    buf_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] buf = buf_arr
    for i in range(n):
        best = -1e308
        for j in range(m):
            dx = queries[i, 0] - supports[j, 0]
            dy = queries[i, 1] - supports[j, 1]
            u1 = a00 * dx
            u2 = a10 * dx + a11 * dy
            e = -0.5 * (u1 * u1 + u2 * u2)
            buf[j] = e
            if e > best:
                best = e
        acc = 0.0
        for j in range(m):
            acc += exp(buf[j] - best)
        out[i] = best + log(acc) + log_norm
    return out_arr
