# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pairwise kernels for Riesz-type convolution kernels.

All routines take C-contiguous float64 arrays. ``j`` is the zero-based
coordinate index of the Riesz kernel ``z_j / |z|^(n+1)`` and ``n`` its
homogeneity order. Every routine returns the number of target/source pairs
closer than ``min_sep`` so the caller can raise on degenerate input.
"""

from cython.parallel cimport prange
from libc.math cimport sqrt, pow


cdef inline double _inv_pow(double r2, double half_exp) noexcept nogil:
    # r2 ** (-half_exp), with the n = 1 case kept exact
    if half_exp == 1.0:
        return 1.0 / r2
    return pow(r2, -half_exp)


def riesz_block(const double[:, ::1] targets, const double[:, ::1] sources,
                int j, double n, double[:, ::1] out, double min_sep,
                int nthreads=1):
    cdef Py_ssize_t nt = targets.shape[0], ns = sources.shape[0]
    cdef Py_ssize_t m = targets.shape[1]
    cdef Py_ssize_t i, s, c
    cdef double r2, d, dj, inv
    cdef double half = 0.5 * (n + 1.0)
    cdef double sep2 = min_sep * min_sep
    cdef long bad = 0
    for i in prange(nt, nogil=True, num_threads=nthreads, schedule="static"):
        for s in range(ns):
            r2 = 0.0
            dj = 0.0
            for c in range(m):
                d = targets[i, c] - sources[s, c]
                r2 = r2 + d * d
                if c == j:
                    dj = d
            if r2 <= sep2:
                bad += 1
                out[i, s] = 0.0
            else:
                out[i, s] = dj * _inv_pow(r2, half)
    return bad


def riesz_apply(const double[:, ::1] targets, const double[:, ::1] sources,
                const double[:, ::1] coeffs, int j, double n,
                double[:, ::1] out, double min_sep, int nthreads=1):
    """out[i, f] += sum_s K_j(t_i - s_s) * coeffs[s, f]."""
    cdef Py_ssize_t nt = targets.shape[0], ns = sources.shape[0]
    cdef Py_ssize_t m = targets.shape[1], nf = coeffs.shape[1]
    cdef Py_ssize_t i, s, c, f
    cdef double r2, d, dj, k
    cdef double half = 0.5 * (n + 1.0)
    cdef double sep2 = min_sep * min_sep
    cdef long bad = 0
    for i in prange(nt, nogil=True, num_threads=nthreads, schedule="static"):
        for s in range(ns):
            r2 = 0.0
            dj = 0.0
            for c in range(m):
                d = targets[i, c] - sources[s, c]
                r2 = r2 + d * d
                if c == j:
                    dj = d
            if r2 <= sep2:
                bad += 1
                continue
            k = dj * _inv_pow(r2, half)
            for f in range(nf):
                out[i, f] += k * coeffs[s, f]
    return bad


def riesz_grad_block(const double[:, ::1] targets, const double[:, ::1] sources,
                     int j, double n, double[:, :, ::1] out, double min_sep,
                     int nthreads=1):
    """out[c, i, s] = (d/dz_c) K_j evaluated at t_i - s_s."""
    cdef Py_ssize_t nt = targets.shape[0], ns = sources.shape[0]
    cdef Py_ssize_t m = targets.shape[1]
    cdef Py_ssize_t i, s, c
    cdef double r2, d, dj, inv, cross
    cdef double half = 0.5 * (n + 1.0)
    cdef double sep2 = min_sep * min_sep
    cdef long bad = 0
    for i in prange(nt, nogil=True, num_threads=nthreads, schedule="static"):
        for s in range(ns):
            r2 = 0.0
            for c in range(m):
                d = targets[i, c] - sources[s, c]
                r2 = r2 + d * d
            if r2 <= sep2:
                bad += 1
                for c in range(m):
                    out[c, i, s] = 0.0
                continue
            inv = _inv_pow(r2, half)
            dj = targets[i, j] - sources[s, j]
            cross = (n + 1.0) * dj * inv / r2
            for c in range(m):
                d = targets[i, c] - sources[s, c]
                out[c, i, s] = -cross * d
            out[j, i, s] = out[j, i, s] + inv
    return bad


def riesz_grad_apply(const double[:, ::1] targets, const double[:, ::1] sources,
                     const double[:, ::1] coeffs, int j, double n,
                     double[:, :, ::1] out, double min_sep, int nthreads=1):
    """out[i, c, f] += sum_s (d/dz_c) K_j(t_i - s_s) * coeffs[s, f]."""
    cdef Py_ssize_t nt = targets.shape[0], ns = sources.shape[0]
    cdef Py_ssize_t m = targets.shape[1], nf = coeffs.shape[1]
    cdef Py_ssize_t i, s, c, f
    cdef double r2, d, dj, inv, cross, g
    cdef double half = 0.5 * (n + 1.0)
    cdef double sep2 = min_sep * min_sep
    cdef long bad = 0
    for i in prange(nt, nogil=True, num_threads=nthreads, schedule="static"):
        for s in range(ns):
            r2 = 0.0
            for c in range(m):
                d = targets[i, c] - sources[s, c]
                r2 = r2 + d * d
            if r2 <= sep2:
                bad += 1
                continue
            inv = _inv_pow(r2, half)
            dj = targets[i, j] - sources[s, j]
            cross = (n + 1.0) * dj * inv / r2
            for c in range(m):
                g = -cross * (targets[i, c] - sources[s, c])
                if c == j:
                    g = g + inv
                for f in range(nf):
                    out[i, c, f] += g * coeffs[s, f]
    return bad
