# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled per-row covered-information log-ratio."""
import numpy as np

from libc.math cimport exp, log, INFINITY


cdef inline double _lse(const double* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i
    cdef double m = -INFINITY, s = 0.0
    for i in range(n):
        if a[i] > m:
            m = a[i]
    if m == -INFINITY:
        return -INFINITY
    for i in range(n):
        s += exp(a[i] - m)
    return m + log(s)


# below this a shifted partial sum may have lost precision to subnormals
DEF TINY = 1e-280


cdef inline double _row(const double* d, const double[:, ::1] F, const double* e,
                        Py_ssize_t xb, Py_ssize_t yb, double* t) noexcept nogil:
    """``log f + log d'Fe - log d'F_y - log F_x e`` for one row.

    All three sums are read off one pass over the B x B cells
    ``d[b] + F[b, c] + e[c]``: the full table, its column ``yb`` and its
    row ``xb``.  That pass is the O(B^2) part.
    """
    cdef Py_ssize_t Bx = F.shape[0], By = F.shape[1], b, c
    cdef double m = -INFINITY, s = 0.0, s_row = 0.0, s_col = 0.0, v, w
    cdef double num, den_y, den_x
    for b in range(Bx):
        for c in range(By):
            v = d[b] + F[b, c] + e[c]
            if v > m:
                m = v
    if m == -INFINITY:
        return -INFINITY
    for b in range(Bx):
        for c in range(By):
            w = exp(d[b] + F[b, c] + e[c] - m)
            s += w
            if c == yb:
                s_col += w
            if b == xb:
                s_row += w
    num = m + log(s)
    if s_col > TINY:
        den_y = m + log(s_col) - e[yb]
    else:
        for b in range(Bx):
            t[b] = d[b] + F[b, yb]
        den_y = _lse(t, Bx)
    if s_row > TINY:
        den_x = m + log(s_row) - d[xb]
    else:
        for c in range(By):
            t[c] = F[xb, c] + e[c]
        den_x = _lse(t, By)
    return F[xb, yb] + num - den_y - den_x


def log_ratio_rows(const double[:, ::1] log_d,
                   const double[:, ::1] log_F,
                   const double[:, ::1] log_e,
                   const Py_ssize_t[::1] xbin,
                   const Py_ssize_t[::1] ybin):
    cdef Py_ssize_t M = log_d.shape[0], k
    out = np.empty(M, dtype=np.float64)
    cdef double[::1] res = out
    cdef double[::1] t = np.empty(max(log_F.shape[0], log_F.shape[1], 1), dtype=np.float64)
    with nogil:
        for k in range(M):
            res[k] = _row(&log_d[k, 0], log_F, &log_e[k, 0], xbin[k], ybin[k], &t[0])
    return out


def gaussian_log_ratio_rows(const double[::1] node_x,
                            const double[::1] xs,
                            const double[::1] field_x,
                            const double[::1] node_y,
                            const double[::1] ys,
                            const double[::1] field_y,
                            const double[:, ::1] log_F,
                            const Py_ssize_t[::1] xbin,
                            const Py_ssize_t[::1] ybin,
                            double clamp):
    """Same ratio with ``d[b] = node_x[b] - field_x * xs[b]`` built per row."""
    cdef Py_ssize_t M = field_x.shape[0], Bx = xs.shape[0], By = ys.shape[0], k, b
    cdef double v
    out = np.empty(M, dtype=np.float64)
    cdef double[::1] res = out
    cdef double[::1] t = np.empty(max(Bx, By, 1), dtype=np.float64)
    cdef double[::1] d = np.empty(max(Bx, 1), dtype=np.float64)
    cdef double[::1] e = np.empty(max(By, 1), dtype=np.float64)
    with nogil:
        for k in range(M):
            for b in range(Bx):
                v = node_x[b] - field_x[k] * xs[b]
                d[b] = v if v > clamp else clamp
            for b in range(By):
                v = node_y[b] - field_y[k] * ys[b]
                e[b] = v if v > clamp else clamp
            res[k] = _row(&d[0], log_F, &e[0], xbin[k], ybin[k], &t[0])
    return out
