# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled pool-adjacent-violators kernels.

Must stay arithmetically identical to ``mgfr._fallback`` (same summation order),
so both backends return bit-identical projections.
"""
import numpy as np
cimport numpy as cnp
from libc.stdlib cimport malloc, free

cnp.import_array()


cdef void _pava_row(const double[::1] g, double[::1] out, double* sums,
                    double* counts, Py_ssize_t* starts) noexcept nogil:
    cdef Py_ssize_t n = g.shape[0]
    cdef Py_ssize_t nb = 0, i, b, end
    cdef double v
    for i in range(n):
        sums[nb] = g[i]
        counts[nb] = 1.0
        starts[nb] = i
        nb += 1
        while nb > 1 and sums[nb - 2] / counts[nb - 2] > sums[nb - 1] / counts[nb - 1]:
            sums[nb - 2] += sums[nb - 1]
            counts[nb - 2] += counts[nb - 1]
            nb -= 1
    for b in range(nb):
        end = starts[b + 1] if b + 1 < nb else n
        v = sums[b] / counts[b]
        for i in range(starts[b], end):
            out[i] = v


def pava(g):
    """Project a 1-D array onto the nondecreasing cone."""
    cdef const double[::1] src = np.ascontiguousarray(g, dtype=np.float64)
    cdef Py_ssize_t n = src.shape[0]
    res = np.empty(n, dtype=np.float64)
    if n == 0:
        return res
    cdef double[::1] out = res
    cdef double* sums = <double*> malloc(n * sizeof(double))
    cdef double* counts = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* starts = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    if sums == NULL or counts == NULL or starts == NULL:
        free(sums); free(counts); free(starts)
        raise MemoryError()
    try:
        with nogil:
            _pava_row(src, out, sums, counts, starts)
    finally:
        free(sums); free(counts); free(starts)
    return res


def pava_rows(G):
    """Row-wise :func:`pava` on a 2-D array."""
    cdef const double[:, ::1] src = np.ascontiguousarray(G, dtype=np.float64)
    cdef Py_ssize_t k = src.shape[0], n = src.shape[1], r
    res = np.empty((k, n), dtype=np.float64)
    if k == 0 or n == 0:
        return res
    cdef double[:, ::1] out = res
    cdef double* sums = <double*> malloc(n * sizeof(double))
    cdef double* counts = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t* starts = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    if sums == NULL or counts == NULL or starts == NULL:
        free(sums); free(counts); free(starts)
        raise MemoryError()
    try:
        with nogil:
            for r in range(k):
                _pava_row(src[r], out[r], sums, counts, starts)
    finally:
        free(sums); free(counts); free(starts)
    return res
