# cython: language_level=3
"""Compiled inner loops for time-tag processing."""

import numpy as np
cimport numpy as cnp
from libc.stdint cimport int64_t

cnp.import_array()


def cross_histogram(const int64_t[::1] tags_a, const int64_t[::1] tags_b,
                    int64_t lo, int64_t bin_width, Py_ssize_t nbins):
    """Histogram of ``t_b - t_a`` over ``[lo, lo + nbins * bin_width)``.

    Two-pointer sweep over sorted inputs.
    """
    cdef cnp.ndarray[cnp.int64_t, ndim=1] out = np.zeros(nbins, dtype=np.int64)
    cdef int64_t[::1] counts = out
    cdef Py_ssize_t na = tags_a.shape[0]
    cdef Py_ssize_t nb = tags_b.shape[0]
    cdef Py_ssize_t i, j, start = 0
    cdef int64_t hi = lo + bin_width * nbins
    cdef int64_t ta, dt
    with nogil:
        for i in range(na):
            ta = tags_a[i]
            while start < nb and tags_b[start] - ta < lo:
                start += 1
            j = start
            while j < nb:
                dt = tags_b[j] - ta
                if dt >= hi:
                    break
                counts[(dt - lo) // bin_width] += 1
                j += 1
    return out


def dead_time_mask(const int64_t[::1] tags, int64_t dead_time):
    """Boolean mask of tags kept by a non-paralyzable detector."""
    cdef Py_ssize_t n = tags.shape[0]
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] out = np.zeros(n, dtype=np.uint8)
    cdef cnp.uint8_t[::1] keep = out
    cdef Py_ssize_t i
    cdef int64_t last
    if n == 0:
        return out.view(np.bool_)
    with nogil:
        keep[0] = 1
        last = tags[0]
        for i in range(1, n):
            if tags[i] - last >= dead_time:
                keep[i] = 1
                last = tags[i]
    return out.view(np.bool_)
