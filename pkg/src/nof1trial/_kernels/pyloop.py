"""Pure-Python simulation kernel (reference implementation).

segment_loop advances the trial over [t_start, t_end] given pre-drawn
randomness: one uniform column per binary node (A, Y, binary covariates in
order) and one normal column per continuous covariate. The compiled kernel
mirrors this file statement for statement; keeping the arithmetic and its
order identical is what makes the two backends bit-for-bit interchangeable.

State arrays are written in place. Sources are coded 0=A, 1=Y, 2+j=W_j; time
indices are 1-based with row t stored at index t-1.
"""

from __future__ import annotations

from math import exp, nextafter


def _expit(x: float) -> float:
    if x >= 0.0:
        return 1.0 / (1.0 + exp(-x))
    e = exp(x)
    return e / (1.0 + e)


def _upper_level(c: float) -> float:
    u = 1.0 - c
    while 1.0 - u < c:
        u = nextafter(u, 0.0)
    return u


def _smoother(x: float, c: float, e: float) -> float:
    upper = _upper_level(c)
    if x <= -e:
        return c
    if x >= e:
        return upper
    k = 0.5 - c
    p = 0.5 + (k * x * (3.0 * e * e - x * x)) / (2.0 * e * e * e)
    if x > 0.0:
        return min(max(p, 0.5), upper)
    if x < 0.0:
        return min(max(p, c), 0.5)
    return 0.5


def segment_loop(
    y_int,
    y_treat,
    y_src,
    y_lag,
    y_coef,
    w_kind,
    w_int,
    w_sd,
    w_off,
    w_src,
    w_lag,
    w_coef,
    w_ucol,
    w_zcol,
    ctx_src,
    ctx_lag,
    n_base,
    a,
    y,
    w,
    ctx,
    g1,
    blip,
    d,
    u,
    z,
    t_start,
    t_end,
    mode,
    c_arr,
    e_arr,
    beta0,
    beta_a,
    beta_c,
    beta_ac,
    q_low,
    q_high,
):
    """Built-in policies only: mode 0 balanced, mode 1 working-model smoother."""
    # plain-list mirrors keep the inner loop on C doubles without numpy overhead
    y_src_l = y_src.tolist()
    y_lag_l = y_lag.tolist()
    y_coef_l = y_coef.tolist()
    w_kind_l = w_kind.tolist()
    w_int_l = w_int.tolist()
    w_sd_l = w_sd.tolist()
    w_off_l = w_off.tolist()
    w_src_l = w_src.tolist()
    w_lag_l = w_lag.tolist()
    w_coef_l = w_coef.tolist()
    w_ucol_l = w_ucol.tolist()
    w_zcol_l = w_zcol.tolist()
    ctx_src_l = ctx_src.tolist()
    ctx_lag_l = ctx_lag.tolist()
    beta_c_l = beta_c.tolist()
    beta_ac_l = beta_ac.tolist()
    a_l = a.tolist()
    y_l = y.tolist()
    w_l = w.tolist()
    ctx_l = ctx.tolist()
    g1_l = g1.tolist()
    blip_l = blip.tolist()
    d_l = d.tolist()
    u_l = u.tolist()
    z_l = z.tolist()
    c_l = c_arr.tolist()
    e_l = e_arr.tolist()
    ny = len(y_coef_l)
    nw = len(w_kind_l)
    ncol = len(beta_c_l)

    def value(src: int, tt: int) -> float:
        if src == 0:
            return a_l[tt - 1]
        if src == 1:
            return y_l[tt - 1]
        return w_l[tt - 1][src - 2]

    for t in range(t_start, t_end + 1):
        ti = t - 1
        crow = ctx_l[ti]
        for k in range(n_base):
            crow[k] = value(ctx_src_l[k], t - ctx_lag_l[k])
        if mode == 0:
            p = 0.5
            b = 0.0
            dt = -1
        else:
            lp0 = beta0
            lp1 = beta0 + beta_a
            for k in range(ncol):
                ck = crow[k]
                lp0 += beta_c_l[k] * ck
                lp1 += (beta_c_l[k] + beta_ac_l[k]) * ck
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
            p = _smoother(b, c_l[ti], e_l[ti])
            dt = 1 if b > 0.0 else 0
        at = 1.0 if u_l[ti][0] < p else 0.0
        a_l[ti] = at
        g1_l[ti] = p
        blip_l[ti] = b
        d_l[ti] = dt
        eta = y_int + y_treat * at
        for i in range(ny):
            eta += y_coef_l[i] * value(y_src_l[i], t - y_lag_l[i])
        y_l[ti] = 1.0 if u_l[ti][1] < _expit(eta) else 0.0
        wrow = w_l[ti]
        for j in range(nw):
            eta = w_int_l[j]
            for i in range(w_off_l[j], w_off_l[j + 1]):
                eta += w_coef_l[i] * value(w_src_l[i], t - w_lag_l[i])
            if w_kind_l[j] == 0:
                wrow[j] = 1.0 if u_l[ti][w_ucol_l[j]] < _expit(eta) else 0.0
            else:
                wrow[j] = eta + w_sd_l[j] * z_l[ti][w_zcol_l[j]]

    lo = t_start - 1
    a[lo:t_end] = a_l[lo:t_end]
    y[lo:t_end] = y_l[lo:t_end]
    w[lo:t_end] = w_l[lo:t_end]
    ctx[lo:t_end] = ctx_l[lo:t_end]
    g1[lo:t_end] = g1_l[lo:t_end]
    blip[lo:t_end] = blip_l[lo:t_end]
    d[lo:t_end] = d_l[lo:t_end]


def segment_loop_callback(
    y_int,
    y_treat,
    y_src,
    y_lag,
    y_coef,
    w_kind,
    w_int,
    w_sd,
    w_off,
    w_src,
    w_lag,
    w_coef,
    w_ucol,
    w_zcol,
    ctx_src,
    ctx_lag,
    n_base,
    a,
    y,
    w,
    ctx,
    g1,
    blip,
    d,
    u,
    z,
    t_start,
    t_end,
    prob_cb,
):
    """Arbitrary-policy variant: prob_cb(ctx_row, t) -> (p, blip, d_decision).

    The callback may write extra context columns beyond the lagged n_base
    (e.g. an appended running blip estimate). Draw consumption is identical
    to segment_loop, so swapping policies never shifts the random stream.
    """
    y_src_l = y_src.tolist()
    y_lag_l = y_lag.tolist()
    y_coef_l = y_coef.tolist()
    w_kind_l = w_kind.tolist()
    w_int_l = w_int.tolist()
    w_sd_l = w_sd.tolist()
    w_off_l = w_off.tolist()
    w_src_l = w_src.tolist()
    w_lag_l = w_lag.tolist()
    w_coef_l = w_coef.tolist()
    w_ucol_l = w_ucol.tolist()
    w_zcol_l = w_zcol.tolist()
    ctx_src_l = ctx_src.tolist()
    ctx_lag_l = ctx_lag.tolist()
    a_l = a.tolist()
    y_l = y.tolist()
    w_l = w.tolist()
    ctx_l = ctx.tolist()
    g1_l = g1.tolist()
    blip_l = blip.tolist()
    d_l = d.tolist()
    u_l = u.tolist()
    z_l = z.tolist()
    ny = len(y_coef_l)
    nw = len(w_kind_l)

    def value(src: int, tt: int) -> float:
        if src == 0:
            return a_l[tt - 1]
        if src == 1:
            return y_l[tt - 1]
        return w_l[tt - 1][src - 2]

    for t in range(t_start, t_end + 1):
        ti = t - 1
        crow = ctx_l[ti]
        for k in range(n_base):
            crow[k] = value(ctx_src_l[k], t - ctx_lag_l[k])
        p, b, dt = prob_cb(crow, t)
        at = 1.0 if u_l[ti][0] < p else 0.0
        a_l[ti] = at
        g1_l[ti] = p
        blip_l[ti] = b
        d_l[ti] = dt
        eta = y_int + y_treat * at
        for i in range(ny):
            eta += y_coef_l[i] * value(y_src_l[i], t - y_lag_l[i])
        y_l[ti] = 1.0 if u_l[ti][1] < _expit(eta) else 0.0
        wrow = w_l[ti]
        for j in range(nw):
            eta = w_int_l[j]
            for i in range(w_off_l[j], w_off_l[j + 1]):
                eta += w_coef_l[i] * value(w_src_l[i], t - w_lag_l[i])
            if w_kind_l[j] == 0:
                wrow[j] = 1.0 if u_l[ti][w_ucol_l[j]] < _expit(eta) else 0.0
            else:
                wrow[j] = eta + w_sd_l[j] * z_l[ti][w_zcol_l[j]]

    lo = t_start - 1
    a[lo:t_end] = a_l[lo:t_end]
    y[lo:t_end] = y_l[lo:t_end]
    w[lo:t_end] = w_l[lo:t_end]
    ctx[lo:t_end] = ctx_l[lo:t_end]
    g1[lo:t_end] = g1_l[lo:t_end]
    blip[lo:t_end] = blip_l[lo:t_end]
    d[lo:t_end] = d_l[lo:t_end]


def fill_burn_in(
    w_kind,
    w_ucol,
    w_zcol,
    burn_in,
    burn_p,
    burn_sd,
    a,
    y,
    w,
    g1,
    blip,
    d,
    u,
    z,
):
    """Exogenous first blocks from the burn-in marginals."""
    for t in range(1, burn_in + 1):
        ti = t - 1
        a[ti] = 1.0 if u[ti, 0] < burn_p else 0.0
        y[ti] = 1.0 if u[ti, 1] < burn_p else 0.0
        for j in range(len(w_kind)):
            if w_kind[j] == 0:
                w[ti, j] = 1.0 if u[ti, w_ucol[j]] < burn_p else 0.0
            else:
                w[ti, j] = burn_sd * z[ti, w_zcol[j]]
        g1[ti] = burn_p
        blip[ti] = 0.0
        d[ti] = -1
