# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops.

Every kernel here has a numpy twin in ``_fallback`` with identical results
(same arithmetic order, same tie-breaking), so the backend choice never
changes an output bit.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def slic_assign(const double[:, :, ::1] lab,
                const double[:, ::1] centers,
                const cnp.int64_t[:, ::1] bounds,
                double ratio,
                cnp.int64_t[:, ::1] labels,
                double[:, ::1] dist):
    """One SLIC assignment sweep, in place.

    ``centers`` rows are (L, a, b, row, col); ``bounds`` rows are the
    half-open search window (y0, y1, x0, x1). Centers are visited in
    ascending order and a pixel moves only on a strictly smaller distance,
    so ties go to the lowest label.
    """
    cdef Py_ssize_t k, y, x
    cdef Py_ssize_t n = centers.shape[0]
    cdef double cl, ca, cb, cy, cx, dl, da, db, dy, dx, d
    for k in range(n):
        cl = centers[k, 0]
        ca = centers[k, 1]
        cb = centers[k, 2]
        cy = centers[k, 3]
        cx = centers[k, 4]
        for y in range(bounds[k, 0], bounds[k, 1]):
            dy = <double>y - cy
            for x in range(bounds[k, 2], bounds[k, 3]):
                dl = lab[y, x, 0] - cl
                da = lab[y, x, 1] - ca
                db = lab[y, x, 2] - cb
                dx = <double>x - cx
                d = (dl * dl + da * da + db * db) + (dy * dy + dx * dx) * ratio
                if d < dist[y, x]:
                    dist[y, x] = d
                    labels[y, x] = k


def csr_matvec(const cnp.int64_t[::1] indptr,
               const cnp.int64_t[::1] indices,
               const double[::1] data,
               const double[::1] x):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef Py_ssize_t i, p
    cdef double acc
    out = np.zeros(n, dtype=np.float64)
    cdef double[::1] y = out
    for i in range(n):
        acc = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            acc = acc + data[p] * x[indices[p]]
        y[i] = acc
    return out


def label_components(const cnp.int64_t[:, ::1] labels):
    """4-connected components of equal-label regions.

    Components are numbered in raster order of their first pixel.
    Returns (component map, component count).
    """
    cdef Py_ssize_t h = labels.shape[0]
    cdef Py_ssize_t w = labels.shape[1]
    comp_arr = np.full((h, w), -1, dtype=np.int64)
    cdef cnp.int64_t[:, ::1] comp = comp_arr
    stack_arr = np.empty(h * w, dtype=np.int64)
    cdef cnp.int64_t[::1] stack = stack_arr
    cdef Py_ssize_t y, x, cy, cx, top, idx
    cdef cnp.int64_t lab, n_comp = 0
    for y in range(h):
        for x in range(w):
            if comp[y, x] >= 0:
                continue
            lab = labels[y, x]
            comp[y, x] = n_comp
            stack[0] = y * w + x
            top = 1
            while top > 0:
                top -= 1
                idx = stack[top]
                cy = idx // w
                cx = idx - cy * w
                if cy > 0 and comp[cy - 1, cx] < 0 and labels[cy - 1, cx] == lab:
                    comp[cy - 1, cx] = n_comp
                    stack[top] = idx - w
                    top += 1
                if cy < h - 1 and comp[cy + 1, cx] < 0 and labels[cy + 1, cx] == lab:
                    comp[cy + 1, cx] = n_comp
                    stack[top] = idx + w
                    top += 1
                if cx > 0 and comp[cy, cx - 1] < 0 and labels[cy, cx - 1] == lab:
                    comp[cy, cx - 1] = n_comp
                    stack[top] = idx - 1
                    top += 1
                if cx < w - 1 and comp[cy, cx + 1] < 0 and labels[cy, cx + 1] == lab:
                    comp[cy, cx + 1] = n_comp
                    stack[top] = idx + 1
                    top += 1
            n_comp += 1
    return comp_arr, int(n_comp)
