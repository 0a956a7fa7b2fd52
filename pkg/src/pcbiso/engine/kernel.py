"""Compiled inner loop: device stamping, Newton, trapezoidal stepping.

The system is ``G x + f(x) - b(t) + C dx/dt = 0`` with constant ``G`` and
``C``; every nonlinearity lives in ``f``. The derivative is replaced by the
trapezoidal companion ``dx/dt = alpha (x - x_prev) - beta xdot_prev``
(alpha = 2/h, beta = 1); the very first step uses backward Euler
(alpha = 1/h, beta = 0) so inconsistent initial states do not ring.
"""

from __future__ import annotations

import numba
import numpy as np

from ..devices import bjt_base_eval, bjt_collector_eval, diode_eval, mosfet_eval

STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1
STATUS_NONFINITE = 2
STATUS_MAX_STEPS = 3


@numba.njit(cache=True)
def _v(x, i):
    return x[i] if i >= 0 else 0.0


@numba.njit(cache=True)
def _add(r, i, val):
    if i >= 0:
        r[i] += val


@numba.njit(cache=True)
def _addj(J, i, j, val):
    if i >= 0 and j >= 0:
        J[i, j] += val


@numba.njit(cache=True)
def pwl_value(t, k, src_start, src_len, pwl_t, pwl_v):
    s = src_start[k]
    n = src_len[k]
    if t <= pwl_t[s]:
        return pwl_v[s]
    last = s + n - 1
    if t >= pwl_t[last]:
        return pwl_v[last]
    lo = s
    hi = last
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if pwl_t[mid] <= t:
            lo = mid
        else:
            hi = mid
    w = (t - pwl_t[lo]) / (pwl_t[hi] - pwl_t[lo])
    return pwl_v[lo] + w * (pwl_v[hi] - pwl_v[lo])


@numba.njit(cache=True)
def stamp_devices(x, r, J, mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par):
    for k in range(mos_nodes.shape[0]):
        d = mos_nodes[k, 0]
        g = mos_nodes[k, 1]
        s = mos_nodes[k, 2]
        vs = _v(x, s)
        vgs = _v(x, g) - vs
        vds = _v(x, d) - vs
        i, gm, gds = mosfet_eval(
            mos_par[k, 0], mos_par[k, 1], mos_par[k, 2], mos_par[k, 3], mos_par[k, 4], vgs, vds
        )
        _add(r, d, i)
        _add(r, s, -i)
        _addj(J, d, g, gm)
        _addj(J, d, d, gds)
        _addj(J, d, s, -gm - gds)
        _addj(J, s, g, -gm)
        _addj(J, s, d, -gds)
        _addj(J, s, s, gm + gds)

    for k in range(bjt_nodes.shape[0]):
        c = bjt_nodes[k, 0]
        b = bjt_nodes[k, 1]
        e = bjt_nodes[k, 2]
        qi = bjt_q[k]
        i_s = bjt_par[k, 0]
        beta = bjt_par[k, 1]
        vt = bjt_par[k, 2]
        vcesat = bjt_par[k, 3]
        ve = _v(x, e)
        vbe = _v(x, b) - ve
        vce = _v(x, c) - ve
        ib, gbe = bjt_base_eval(i_s, beta, vt, vbe)
        _add(r, b, ib)
        _add(r, e, -ib)
        _addj(J, b, b, gbe)
        _addj(J, b, e, -gbe)
        _addj(J, e, b, -gbe)
        _addj(J, e, e, gbe)
        # stored-charge row: tau * d(drive)/dt + drive - ib = 0
        r[qi] -= ib
        _addj(J, qi, b, -gbe)
        _addj(J, qi, e, gbe)
        ic, dic_dq, gce = bjt_collector_eval(beta, vcesat, x[qi], vce)
        _add(r, c, ic)
        _add(r, e, -ic)
        _addj(J, c, qi, dic_dq)
        _addj(J, c, c, gce)
        _addj(J, c, e, -gce)
        _addj(J, e, qi, -dic_dq)
        _addj(J, e, c, -gce)
        _addj(J, e, e, gce)

    for k in range(dio_nodes.shape[0]):
        a = dio_nodes[k, 0]
        c = dio_nodes[k, 1]
        i, gd = diode_eval(dio_par[k, 0], dio_par[k, 1], _v(x, a) - _v(x, c))
        _add(r, a, i)
        _add(r, c, -i)
        _addj(J, a, a, gd)
        _addj(J, a, c, -gd)
        _addj(J, c, a, -gd)
        _addj(J, c, c, gd)


@numba.njit(cache=True)
def lu_solve_inplace(J, r, dx):
    """Solve ``J dx = -r`` by Gaussian elimination with partial pivoting.

    ``J`` and ``r`` are overwritten. Returns False if ``J`` is singular.
    """
    n = r.shape[0]
    for k in range(n):
        p = k
        big = abs(J[k, k])
        for i in range(k + 1, n):
            a = abs(J[i, k])
            if a > big:
                big = a
                p = i
        if big == 0.0:
            return False
        if p != k:
            for j in range(k, n):
                tmp = J[k, j]
                J[k, j] = J[p, j]
                J[p, j] = tmp
            tmp = r[k]
            r[k] = r[p]
            r[p] = tmp
        piv = J[k, k]
        for i in range(k + 1, n):
            f = J[i, k] / piv
            if f != 0.0:
                for j in range(k + 1, n):
                    J[i, j] -= f * J[k, j]
                r[i] -= f * r[k]
    for i in range(n - 1, -1, -1):
        acc = -r[i]
        for j in range(i + 1, n):
            acc -= J[i, j] * dx[j]
        dx[i] = acc / J[i, i]
    return True


@numba.njit(cache=True)
def _source_vector(t, n, extra_b, src_row, src_start, src_len, pwl_t, pwl_v):
    b = extra_b.copy()
    for k in range(src_row.shape[0]):
        b[src_row[k]] += pwl_value(t, k, src_start, src_len, pwl_t, pwl_v)
    return b


@numba.njit(cache=True)
def _history(C, alpha, beta, x_prev, xdot_prev):
    # C @ (alpha * x_prev + beta * xdot_prev)
    n = x_prev.shape[0]
    hist = np.zeros(n)
    for i in range(n):
        acc = 0.0
        for j in range(n):
            c = C[i, j]
            if c != 0.0:
                acc += c * (alpha * x_prev[j] + beta * xdot_prev[j])
        hist[i] = acc
    return hist


@numba.njit(cache=True)
def _fill(x, A, rhs, r, J, mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par):
    # r = A x - rhs + f(x); J = A + df/dx
    n = x.shape[0]
    for i in range(n):
        acc = 0.0
        for j in range(n):
            a = A[i, j]
            J[i, j] = a
            if a != 0.0:
                acc += a * x[j]
        r[i] = acc - rhs[i]
    stamp_devices(x, r, J, mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par)


@numba.njit(cache=True)
def residual_jacobian(
    x, t, alpha, beta, x_prev, xdot_prev, extra_b,
    G, C, src_row, src_start, src_len, pwl_t, pwl_v,
    mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par,
):
    n = x.shape[0]
    A = G + alpha * C
    rhs = _source_vector(t, n, extra_b, src_row, src_start, src_len, pwl_t, pwl_v)
    rhs += _history(C, alpha, beta, x_prev, xdot_prev)
    r = np.empty(n)
    J = np.empty((n, n))
    _fill(x, A, rhs, r, J, mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par)
    return r, J


@numba.njit(cache=True)
def newton(
    x_start, A, rhs, abstol, reltol, max_iter, n_volt, v_limit, r, J, dx,
    mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par,
):
    """Solve ``A x - rhs + f(x) = 0`` from ``x_start``.

    Returns (x, status, iterations, worst_index).
    """
    x = x_start.copy()
    n = x.shape[0]
    worst = 0
    for it in range(max_iter):
        _fill(x, A, rhs, r, J, mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par)
        if not lu_solve_inplace(J, r, dx):
            return x, STATUS_NONFINITE, it + 1, 0
        ok = True
        worst_ratio = 0.0
        for i in range(n):
            d = dx[i]
            if not np.isfinite(d):
                return x, STATUS_NONFINITE, it + 1, i
            if i < n_volt:
                if d > v_limit:
                    d = v_limit
                elif d < -v_limit:
                    d = -v_limit
            x[i] += d
            ratio = abs(d) / (abstol[i] + reltol * abs(x[i]))
            if ratio > 1.0:
                ok = False
            if ratio > worst_ratio:
                worst_ratio = ratio
                worst = i
        if ok:
            return x, STATUS_OK, it + 1, worst
    return x, STATUS_NO_CONVERGENCE, max_iter, worst


@numba.njit(cache=True)
def run(
    x0, t_stop, dt_max, dt_min, dt_out, n_out, probe_idx, breakpoints,
    abstol, reltol, max_iter, n_volt, v_limit, kick_b, check_residual,
    G, C, src_row, src_start, src_len, pwl_t, pwl_v,
    mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par,
):
    """Integrate from t=0 to t_stop, sampling probes on a uniform grid.

    Returns (out, status, t_fail, worst_index, n_steps, n_newton, n_rejected,
    max_kcl_residual).
    """
    n = x0.shape[0]
    n_probe = probe_idx.shape[0]
    out = np.zeros((n_out, n_probe))
    for j in range(n_probe):
        out[0, j] = x0[probe_idx[j]]
    k_out = 1

    zero_b = np.zeros(n)
    r = np.empty(n)
    J = np.empty((n, n))
    dx = np.empty(n)
    A = np.empty((n, n))
    alpha_A = -1.0
    x = x0.copy()
    xdot = np.zeros(n)
    t = 0.0
    h = dt_max
    h_prev = 0.0
    first = True
    bp = 0
    n_bp = breakpoints.shape[0]
    n_steps = 0
    n_newton = 0
    n_rej = 0
    max_res = 0.0
    while t < t_stop and k_out < n_out:
        # a breakpoint closer than a sliver of dt_min counts as reached
        while bp < n_bp and breakpoints[bp] <= t + 0.01 * dt_min:
            bp += 1
        t_new = t + h
        # land exactly on breakpoints; never leave a sliver before one
        if bp < n_bp and t_new >= breakpoints[bp] - 0.01 * h:
            t_new = breakpoints[bp]
        if t_new >= t_stop - 0.01 * h:
            t_new = t_stop
        h_try = t_new - t
        if first:
            alpha = 1.0 / h_try
            beta = 0.0
            extra = kick_b
        else:
            alpha = 2.0 / h_try
            beta = 1.0
            extra = zero_b
        if alpha != alpha_A:
            for i in range(n):
                for j in range(n):
                    A[i, j] = G[i, j] + alpha * C[i, j]
            alpha_A = alpha
        rhs = _source_vector(t_new, n, extra, src_row, src_start, src_len, pwl_t, pwl_v)
        rhs += _history(C, alpha, beta, x, xdot)
        # linear predictor from the previous step's secant
        if h_prev > 0.0:
            x_guess = x + h_try * xdot
        else:
            x_guess = x
        x_new, status, iters, worst = newton(
            x_guess, A, rhs, abstol, reltol, max_iter, n_volt, v_limit, r, J, dx,
            mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par, dio_nodes, dio_par,
        )
        n_newton += iters
        if status != STATUS_OK:
            n_rej += 1
            h = 0.5 * h_try
            if h < dt_min:
                return out[:k_out], status, t_new, worst, n_steps, n_newton, n_rej, max_res
            continue

        if check_residual:
            _fill(x_new, A, rhs, r, J, mos_nodes, mos_par, bjt_nodes, bjt_q, bjt_par,
                  dio_nodes, dio_par)
            for i in range(n_volt):
                if abs(r[i]) > max_res:
                    max_res = abs(r[i])

        xdot = alpha * (x_new - x) - beta * xdot
        while k_out < n_out and k_out * dt_out <= t_new * (1.0 + 1e-12):
            w = (k_out * dt_out - t) / h_try
            if w > 1.0:
                w = 1.0
            for j in range(n_probe):
                p = probe_idx[j]
                out[k_out, j] = x[p] + w * (x_new[p] - x[p])
            k_out += 1
        x = x_new
        t = t_new
        h_prev = h_try
        first = False
        n_steps += 1
        if h < dt_max:
            h = min(2.0 * h, dt_max)
    return out[:k_out], STATUS_OK, t, 0, n_steps, n_newton, n_rej, max_res
