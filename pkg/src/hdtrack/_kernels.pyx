# cython: language_level=3
"""Compiled bilinear sampling and homography warping.

Mirrors ``_kernels_py`` exactly; ``hdtrack.kernels`` picks one at import.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, isfinite, fabs

cnp.import_array()

cdef enum:
    ZERO = 0
    CLAMP = 1
    CIRCULAR_VERTICAL = 2


cdef inline double _fetch(const double[:, ::1] img, Py_ssize_t ix, Py_ssize_t iy,
                          int policy) noexcept nogil:
    cdef Py_ssize_t h = img.shape[0]
    cdef Py_ssize_t w = img.shape[1]
    if policy == CLAMP:
        if ix < 0:
            ix = 0
        elif ix >= w:
            ix = w - 1
        if iy < 0:
            iy = 0
        elif iy >= h:
            iy = h - 1
        return img[iy, ix]
    if policy == CIRCULAR_VERTICAL:
        iy = iy % h
        if iy < 0:
            iy += h
    if ix < 0 or ix >= w or iy < 0 or iy >= h:
        return 0.0
    return img[iy, ix]


cdef inline double _bilinear(const double[:, ::1] img, double u, double v,
                             int policy) noexcept nogil:
    cdef double x0f, y0f, fx, fy
    cdef Py_ssize_t x0, y0
    if not (isfinite(u) and isfinite(v)):
        return 0.0
    x0f = floor(u)
    y0f = floor(v)
    fx = u - x0f
    fy = v - y0f
    x0 = <Py_ssize_t>x0f
    y0 = <Py_ssize_t>y0f
    return ((1.0 - fy) * ((1.0 - fx) * _fetch(img, x0, y0, policy)
                          + fx * _fetch(img, x0 + 1, y0, policy))
            + fy * ((1.0 - fx) * _fetch(img, x0, y0 + 1, policy)
                    + fx * _fetch(img, x0 + 1, y0 + 1, policy)))


def sample_bilinear(const double[:, ::1] img, u, v, int policy=ZERO):
    cdef cnp.ndarray[double, ndim=1] uu = np.ascontiguousarray(u, dtype=np.float64).ravel()
    cdef cnp.ndarray[double, ndim=1] vv = np.ascontiguousarray(v, dtype=np.float64).ravel()
    cdef Py_ssize_t n = uu.shape[0], i
    if vv.shape[0] != n:
        raise ValueError("u and v must have the same size")
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double[::1] us = uu
    cdef double[::1] vs = vv
    with nogil:
        for i in range(n):
            o[i] = _bilinear(img, us[i], vs[i], policy)
    return out.reshape(np.shape(u))


def warp_homography(const double[:, ::1] img, const double[:, ::1] H,
                    Py_ssize_t out_h, Py_ssize_t out_w, int policy=ZERO):
    out = np.empty((out_h, out_w), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t r, c
    cdef double x, y, w
    cdef double h00 = H[0, 0], h01 = H[0, 1], h02 = H[0, 2]
    cdef double h10 = H[1, 0], h11 = H[1, 1], h12 = H[1, 2]
    cdef double h20 = H[2, 0], h21 = H[2, 1], h22 = H[2, 2]
    with nogil:
        for r in range(out_h):
            for c in range(out_w):
                w = h20 * c + h21 * r + h22
                if fabs(w) < 1e-12:
                    o[r, c] = 0.0
                    continue
                x = (h00 * c + h01 * r + h02) / w
                y = (h10 * c + h11 * r + h12) / w
                o[r, c] = _bilinear(img, x, y, policy)
    return out
