# cython: language_level=3
"""Compiled kernels: patch differencing and per-site cosine dissimilarity.

Frame pairs are independent, so the outer loop parallelizes without
changing results for any thread count.
"""

import numpy as np

cimport numpy as cnp
from cython.parallel cimport prange
from libc.math cimport fabs, sqrt

cnp.import_array()

ctypedef fused pixel_t:
    cnp.uint8_t
    cnp.float32_t
    cnp.float64_t

ctypedef fused feat_t:
    cnp.float32_t
    cnp.float64_t


cdef inline double _cell_abs_diff(const pixel_t[:, :, :, ::1] fr, Py_ssize_t ta,
                                  Py_ssize_t y0, Py_ssize_t y1,
                                  Py_ssize_t x0, Py_ssize_t x1) noexcept nogil:
    cdef Py_ssize_t c, y, x
    cdef double acc = 0.0
    for c in range(fr.shape[1]):
        for y in range(y0, y1):
            for x in range(x0, x1):
                acc += fabs(<double> fr[ta + 1, c, y, x] - <double> fr[ta, c, y, x])
    return acc


def patch_mean_abs_diff(const pixel_t[:, :, :, ::1] frames, int patch, int num_threads=1):
    cdef Py_ssize_t t = frames.shape[0]
    cdef Py_ssize_t c = frames.shape[1]
    cdef Py_ssize_t h = frames.shape[2]
    cdef Py_ssize_t w = frames.shape[3]
    cdef Py_ssize_t gh = (h + patch - 1) // patch
    cdef Py_ssize_t gw = (w + patch - 1) // patch
    out_arr = np.empty((t - 1, gh, gw), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ti, gy, gx, y0, y1, x0, x1
    cdef double cnt
    cdef int threads = max(num_threads, 1)
    for ti in prange(t - 1, nogil=True, schedule="static", num_threads=threads):
        for gy in range(gh):
            y0 = gy * patch
            y1 = min(y0 + patch, h)
            for gx in range(gw):
                x0 = gx * patch
                x1 = min(x0 + patch, w)
                cnt = <double> (c * (y1 - y0) * (x1 - x0))
                out[ti, gy, gx] = _cell_abs_diff(frames, ti, y0, y1, x0, x1) / cnt
    return out_arr


cdef inline double _site_cos_diff(const feat_t[:, :, :, ::1] grid, Py_ssize_t ta,
                                  Py_ssize_t y, Py_ssize_t x) noexcept nogil:
    cdef Py_ssize_t k
    cdef double a, b, dot = 0.0, na = 0.0, nb = 0.0, sim, d
    for k in range(grid.shape[3]):
        a = <double> grid[ta, y, x, k]
        b = <double> grid[ta + 1, y, x, k]
        dot += a * b
        na += a * a
        nb += b * b
    if na > 0.0 and nb > 0.0:
        # sqrt of the product so identical/antipodal inputs hit exactly 0 and 2
        sim = dot / sqrt(na * nb)
    else:
        sim = 0.0
    d = 1.0 - sim
    if d < 0.0:
        d = 0.0
    elif d > 2.0:
        d = 2.0
    return d


def cosine_dissimilarity(const feat_t[:, :, :, ::1] grid, int num_threads=1):
    cdef Py_ssize_t t = grid.shape[0]
    cdef Py_ssize_t gh = grid.shape[1]
    cdef Py_ssize_t gw = grid.shape[2]
    out_arr = np.empty((t - 1, gh, gw), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t ti, y, x
    cdef int threads = max(num_threads, 1)
    for ti in prange(t - 1, nogil=True, schedule="static", num_threads=threads):
        for y in range(gh):
            for x in range(gw):
                out[ti, y, x] = _site_cos_diff(grid, ti, y, x)
    return out_arr
