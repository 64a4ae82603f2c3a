# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the batched density kernels in ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, INFINITY, isfinite

cnp.import_array()


def mahalanobis_sq(points, means, chols):
    cdef double[:, ::1] Y = np.ascontiguousarray(points, dtype=np.float64)
    cdef double[:, ::1] Mu = np.ascontiguousarray(means, dtype=np.float64)
    cdef double[:, :, ::1] L = np.ascontiguousarray(chols, dtype=np.float64)
    cdef Py_ssize_t M = Y.shape[0], d = Y.shape[1], J = Mu.shape[0]
    cdef Py_ssize_t m, j, a, b
    cdef double acc, total
    out_arr = np.empty((M, J), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double[::1] z = np.empty(d, dtype=np.float64)
    with nogil:
        for m in range(M):
            for j in range(J):
                total = 0.0
                for a in range(d):
                    acc = Y[m, a] - Mu[j, a]
                    for b in range(a):
                        acc = acc - L[j, a, b] * z[b]
                    z[a] = acc / L[j, a, a]
                    total = total + z[a] * z[a]
                out[m, j] = total
    return out_arr


def logsumexp_rows(values, offsets):
    cdef double[:, ::1] V = np.ascontiguousarray(values, dtype=np.float64)
    cdef double[::1] c = np.ascontiguousarray(offsets, dtype=np.float64)
    cdef Py_ssize_t M = V.shape[0], J = V.shape[1]
    cdef Py_ssize_t m, j
    cdef double peak, s, x
    out_arr = np.empty(M, dtype=np.float64)
    cdef double[::1] out = out_arr
    with nogil:
        for m in range(M):
            peak = -INFINITY
            for j in range(J):
                x = V[m, j] + c[j]
                if x > peak:
                    peak = x
            if not isfinite(peak):
                out[m] = peak
                continue
            s = 0.0
            for j in range(J):
                x = V[m, j] + c[j]
                if x > -INFINITY:
                    s = s + exp(x - peak)
            out[m] = peak + log(s)
    return out_arr
