# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled simulation kernel.

Mirrors pyloop.segment_loop statement for statement; both backends must keep
the arithmetic and its evaluation order identical so that trajectories agree
bit for bit whichever one is loaded.
"""

from libc.math cimport exp, nextafter
from libc.stdint cimport int64_t


cdef inline double _expit(double x) nogil:
    cdef double e
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


cdef inline double _upper_level(double c) nogil:
    cdef double u = 1.0 - c
    while 1.0 - u < c:
        u = nextafter(u, 0.0)
    return u


cdef inline double _smoother(double x, double c, double e) nogil:
    cdef double upper = _upper_level(c)
    cdef double k, p
    if x <= -e:
        return c
    if x >= e:
        return upper
    k = 0.5 - c
    p = 0.5 + (k * x * (3.0 * e * e - x * x)) / (2.0 * e * e * e)
    if x > 0.0:
        if p < 0.5:
            p = 0.5
        if p > upper:
            p = upper
        return p
    if x < 0.0:
        if p < c:
            p = c
        if p > 0.5:
            p = 0.5
        return p
    return 0.5


cdef inline double _value(double[::1] a, double[::1] y, double[:, ::1] w,
                          int64_t src, int64_t tt) nogil:
    if src == 0:
        return a[tt - 1]
    if src == 1:
        return y[tt - 1]
    return w[tt - 1, src - 2]


def segment_loop(double y_int, double y_treat,
                 int64_t[::1] y_src, int64_t[::1] y_lag, double[::1] y_coef,
                 signed char[::1] w_kind, double[::1] w_int, double[::1] w_sd,
                 int64_t[::1] w_off, int64_t[::1] w_src, int64_t[::1] w_lag,
                 double[::1] w_coef, int64_t[::1] w_ucol, int64_t[::1] w_zcol,
                 int64_t[::1] ctx_src, int64_t[::1] ctx_lag, Py_ssize_t n_base,
                 double[::1] a, double[::1] y, double[:, ::1] w, double[:, ::1] ctx,
                 double[::1] g1, double[::1] blip, signed char[::1] d,
                 double[:, ::1] u, double[:, ::1] z,
                 Py_ssize_t t_start, Py_ssize_t t_end, int mode,
                 double[::1] c_arr, double[::1] e_arr,
                 double beta0, double beta_a,
                 double[::1] beta_c, double[::1] beta_ac,
                 double q_low, double q_high):
    """Built-in policies only: mode 0 balanced, mode 1 working-model smoother."""
    cdef Py_ssize_t t, ti, k, i, j
    cdef Py_ssize_t ny = y_coef.shape[0]
    cdef Py_ssize_t nw = w_kind.shape[0]
    cdef Py_ssize_t ncol = beta_c.shape[0]
    cdef double p, b, at, eta, lp0, lp1, q1, q0, ck
    cdef signed char dt
    with nogil:
        for t in range(t_start, t_end + 1):
            ti = t - 1
            for k in range(n_base):
                ctx[ti, k] = _value(a, y, w, ctx_src[k], t - ctx_lag[k])
            if mode == 0:
                p = 0.5
                b = 0.0
                dt = -1
            else:
                lp0 = beta0
                lp1 = beta0 + beta_a
                for k in range(ncol):
                    ck = ctx[ti, k]
                    lp0 += beta_c[k] * ck
                    lp1 += (beta_c[k] + beta_ac[k]) * ck
                q1 = _expit(lp1)
                if q1 < q_low:
                    q1 = q_low
                elif q1 > q_high:
                    q1 = q_high
                q0 = _expit(lp0)
                if q0 < q_low:
                    q0 = q_low
                elif q0 > q_high:
                    q0 = q_high
                b = q1 - q0
                p = _smoother(b, c_arr[ti], e_arr[ti])
                dt = 1 if b > 0.0 else 0
            at = 1.0 if u[ti, 0] < p else 0.0
            a[ti] = at
            g1[ti] = p
            blip[ti] = b
            d[ti] = dt
            eta = y_int + y_treat * at
            for i in range(ny):
                eta += y_coef[i] * _value(a, y, w, y_src[i], t - y_lag[i])
            y[ti] = 1.0 if u[ti, 1] < _expit(eta) else 0.0
            for j in range(nw):
                eta = w_int[j]
                for i in range(w_off[j], w_off[j + 1]):
                    eta += w_coef[i] * _value(a, y, w, w_src[i], t - w_lag[i])
                if w_kind[j] == 0:
                    w[ti, j] = 1.0 if u[ti, w_ucol[j]] < _expit(eta) else 0.0
                else:
                    w[ti, j] = eta + w_sd[j] * z[ti, w_zcol[j]]
