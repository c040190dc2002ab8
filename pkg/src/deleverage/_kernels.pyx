# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled lattice scan for the grid-search oracle."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def grid_scan(double[:, ::1] obj_p, double[::1] obj_q,
              double[:, ::1] con_p, double[::1] con_q, double con_c,
              double[::1] lo, double[::1] step, long points,
              long start, long stop):
    """Minimize ``y'Py + q'y`` over lattice indices ``[start, stop)`` subject to
    ``y'Gy + c'y + c0 <= 0``.  Returns ``(index, value)``; index -1 if none.
    Ties go to the largest index, i.e. the point that trades least."""
    cdef Py_ssize_t m = lo.shape[0]
    cdef Py_ssize_t i, j
    cdef long k, rem, best_k = -1
    cdef double best = INFINITY, f, g, fi, gi
    cdef cnp.ndarray[cnp.int64_t, ndim=1] digits_arr = np.zeros(m, dtype=np.int64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] y_arr = np.zeros(m)
    cdef double[::1] y = y_arr
    cdef cnp.int64_t[::1] dig = digits_arr

    rem = start
    for i in range(m - 1, -1, -1):
        dig[i] = rem % points
        rem //= points
    with nogil:
        for i in range(m):
            y[i] = lo[i] + dig[i] * step[i]
        for k in range(start, stop):
            f = 0.0
            g = con_c
            for i in range(m):
                fi = obj_q[i]
                gi = con_q[i]
                for j in range(m):
                    fi = fi + obj_p[i, j] * y[j]
                    gi = gi + con_p[i, j] * y[j]
                f = f + fi * y[i]
                g = g + gi * y[i]
            if g <= 0.0 and f <= best:
                best = f
                best_k = k
            # odometer increment, last coordinate fastest
            i = m - 1
            while i >= 0:
                dig[i] += 1
                if dig[i] < points:
                    y[i] = lo[i] + dig[i] * step[i]
                    break
                dig[i] = 0
                y[i] = lo[i]
                i -= 1
    return best_k, best
