# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled CSR kernels.

All routines walk rows in ascending order and edges in storage order, so the
floating point reduction order is fixed and results are reproducible.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp

cnp.import_array()

ctypedef cnp.int64_t idx_t


def spmm(const idx_t[::1] indptr, const idx_t[::1] indices, const double[::1] weights,
         const double[:, ::1] h):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = h.shape[1]
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, c
    cdef idx_t e, j
    cdef double w
    with nogil:
        for i in range(n):
            for e in range(indptr[i], indptr[i + 1]):
                j = indices[e]
                w = weights[e]
                for c in range(d):
                    out[i, c] += w * h[j, c]
    return out_arr


def segment_sum(const idx_t[::1] indptr, const double[:, ::1] v):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = v.shape[1]
    out_arr = np.zeros((n, d), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, c
    cdef idx_t e
    with nogil:
        for i in range(n):
            for e in range(indptr[i], indptr[i + 1]):
                for c in range(d):
                    out[i, c] += v[e, c]
    return out_arr


def segment_softmax(const idx_t[::1] indptr, const double[::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out_arr = np.zeros(x.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef idx_t e, lo, hi
    cdef double m, total
    with nogil:
        for i in range(n):
            lo = indptr[i]
            hi = indptr[i + 1]
            if lo == hi:
                continue
            m = x[lo]
            for e in range(lo + 1, hi):
                if x[e] > m:
                    m = x[e]
            total = 0.0
            for e in range(lo, hi):
                out[e] = exp(x[e] - m)
                total += out[e]
            for e in range(lo, hi):
                out[e] /= total
    return out_arr


def segment_softmax_backward(const idx_t[::1] indptr, const double[::1] s, const double[::1] g):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    out_arr = np.zeros(s.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i
    cdef idx_t e
    cdef double dot
    with nogil:
        for i in range(n):
            dot = 0.0
            for e in range(indptr[i], indptr[i + 1]):
                dot += s[e] * g[e]
            for e in range(indptr[i], indptr[i + 1]):
                out[e] = s[e] * (g[e] - dot)
    return out_arr


def edge_rowdot(const idx_t[::1] indptr, const idx_t[::1] indices, const double[:, ::1] g,
                const double[:, ::1] h):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t d = g.shape[1]
    out_arr = np.zeros(indices.shape[0], dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef Py_ssize_t i, c
    cdef idx_t e, j
    cdef double acc
    with nogil:
        for i in range(n):
            for e in range(indptr[i], indptr[i + 1]):
                j = indices[e]
                acc = 0.0
                for c in range(d):
                    acc += g[i, c] * h[j, c]
                out[e] = acc
    return out_arr


def bfs_all_pairs(const idx_t[::1] indptr, const idx_t[::1] indices):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    dist_arr = np.full((n, n), -1, dtype=np.int64)
    queue_arr = np.empty(max(n, 1), dtype=np.int64)
    cdef idx_t[:, ::1] dist = dist_arr
    cdef idx_t[::1] queue = queue_arr
    cdef Py_ssize_t s, head, tail
    cdef idx_t u, w, e
    with nogil:
        for s in range(n):
            dist[s, s] = 0
            queue[0] = s
            head = 0
            tail = 1
            while head < tail:
                u = queue[head]
                head += 1
                for e in range(indptr[u], indptr[u + 1]):
                    w = indices[e]
                    if dist[s, w] < 0:
                        dist[s, w] = dist[s, u] + 1
                        queue[tail] = w
                        tail += 1
    return dist_arr
