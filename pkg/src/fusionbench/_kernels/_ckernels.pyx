# cython: language_level=3
"""Compiled hot loops. Every function mirrors one in ``_pykernels``."""

import numpy as np

cimport numpy as cnp
from libc.stdint cimport uint64_t

cnp.import_array()

cdef uint64_t GAMMA = 0x9E3779B97F4A7C15ULL


cdef inline uint64_t _mix(uint64_t z) nogil:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL
    return z ^ (z >> 31)


def mix64(uint64_t z):
    return _mix(z)


def splitmix_block(uint64_t key, uint64_t start, Py_ssize_t n):
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    cdef Py_ssize_t i
    with nogil:
        for i in range(n):
            o[i] = _mix(key + (start + <uint64_t>i + 1) * GAMMA)
    return out


def count_sketch(const double[:, ::1] x, const cnp.intp_t[::1] h, const double[::1] s, Py_ssize_t d):
    cdef Py_ssize_t B = x.shape[0], n = x.shape[1], b, i
    out = np.zeros((B, d), dtype=np.float64)
    cdef double[:, ::1] y = out
    with nogil:
        for b in range(B):
            for i in range(n):
                y[b, h[i]] += s[i] * x[b, i]
    return out


def count_sketch_t(const double[:, ::1] g, const cnp.intp_t[::1] h, const double[::1] s):
    cdef Py_ssize_t B = g.shape[0], n = h.shape[0], b, i
    out = np.empty((B, n), dtype=np.float64)
    cdef double[:, ::1] y = out
    with nogil:
        for b in range(B):
            for i in range(n):
                y[b, i] = s[i] * g[b, h[i]]
    return out


def circconv(const double[:, ::1] a, const double[:, ::1] bb):
    """out[k] = sum_j a[j] * b[(k - j) mod d], row by row."""
    cdef Py_ssize_t B = a.shape[0], d = a.shape[1], r, k, j
    cdef double acc
    out = np.empty((B, d), dtype=np.float64)
    cdef double[:, ::1] y = out
    with nogil:
        for r in range(B):
            for k in range(d):
                acc = 0.0
                for j in range(k + 1):
                    acc += a[r, j] * bb[r, k - j]
                for j in range(k + 1, d):
                    acc += a[r, j] * bb[r, k - j + d]
                y[r, k] = acc
    return out


def circcorr(const double[:, ::1] g, const double[:, ::1] bb):
    """out[j] = sum_k g[k] * b[(k - j) mod d], row by row."""
    cdef Py_ssize_t B = g.shape[0], d = g.shape[1], r, k, j
    cdef double acc
    out = np.empty((B, d), dtype=np.float64)
    cdef double[:, ::1] y = out
    with nogil:
        for r in range(B):
            for j in range(d):
                acc = 0.0
                for k in range(j):
                    acc += g[r, k] * bb[r, k - j + d]
                for k in range(j, d):
                    acc += g[r, k] * bb[r, k - j]
                y[r, j] = acc
    return out
