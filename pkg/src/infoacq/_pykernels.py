"""Pure-Python/NumPy implementations of the hot loops.

These mirror ``_core.pyx`` function for function.  They are used when the
compiled extension is unavailable or when ``INFOACQ_PURE_PYTHON=1``.
"""

import math

import numpy as np

_BISECT_MAX = 400


# -- scalar cost helpers ------------------------------------------------------


def kinv(c, p, b, y):
    """(k')^{-1}(y) for k = c x^p + b x^2."""
    if y <= 0.0:
        return 0.0
    if b == 0.0:
        return (y / (c * p)) ** (1.0 / (p - 1.0))
    if p == 2.0:
        return y / (2.0 * (c + b))
    if p == 3.0:
        return 2.0 * y / (2.0 * b + math.sqrt(4.0 * b * b + 12.0 * c * y))
    lo, hi = 0.0, 1.0
    while c * p * hi ** (p - 1.0) + 2.0 * b * hi < y:
        lo, hi = hi, 2.0 * hi
    for _ in range(_BISECT_MAX):
        if hi - lo <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if c * p * mid ** (p - 1.0) + 2.0 * b * mid < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def kstar(c, p, b, y):
    if p == 2.0:
        return y * y / (4.0 * (c + b))
    x = kinv(c, p, b, y)
    return x * y - (c * x**p + b * x * x)


def _rhs(P, U, C, c, p, b, gamma, sigma2, sigma02):
    y = -P / gamma if P < 0.0 else 0.0
    kt = -gamma * kstar(c, p, b, y)
    a = kinv(c, p, b, y)
    d = kt - C
    dP = -2.0 * sigma2 * d * d
    dU = -a
    dG = sigma02 / (2.0 * sigma2) / (sigma02 * U + 1.0) + kt - P * a
    return dP, dU, dG


# -- vectorised cost helpers for the fan --------------------------------------


def _kinv_vec(c, p, b, y):
    y = np.maximum(y, 0.0)
    if b == 0.0:
        return (y / (c * p)) ** (1.0 / (p - 1.0))
    if p == 2.0:
        return y / (2.0 * (c + b))
    if p == 3.0:
        return 2.0 * y / (2.0 * b + np.sqrt(4.0 * b * b + 12.0 * c * y))
    return np.array([kinv(c, p, b, float(v)) for v in y.ravel()]).reshape(y.shape)


def _kstar_vec(c, p, b, y):
    if p == 2.0:
        return y * y / (4.0 * (c + b))
    x = _kinv_vec(c, p, b, y)
    return x * y - (c * x**p + b * x * x)


def _rhs_vec(P, U, C, c, p, b, gamma, sigma2, sigma02):
    y = np.where(P < 0.0, -P / gamma, 0.0)
    kt = -gamma * _kstar_vec(c, p, b, y)
    a = _kinv_vec(c, p, b, y)
    d = kt - C
    return (
        -2.0 * sigma2 * d * d,
        -a,
        sigma02 / (2.0 * sigma2) / (sigma02 * U + 1.0) + kt - P * a,
    )


# -- characteristic curves ----------------------------------------------------


def fan_rk4(u0, n_steps, ds, c, p, b, gamma, sigma2, sigma02, g0, u_floor):
    """Integrate a fan of characteristics on the uniform grid s_k = k ds.

    Returns (P, U, G, dP, dU, dG, n_valid); rows are curves.  ``n_valid[i]``
    is the number of grid points before curve ``i`` fell to ``u_floor``.
    """
    u0 = np.asarray(u0, dtype=float)
    m = u0.shape[0]
    C = sigma02 / (2.0 * sigma2) / (sigma02 * u0 + 1.0)
    P = np.empty((m, n_steps + 1))
    U = np.empty_like(P)
    G = np.empty_like(P)
    P[:, 0] = 0.0
    U[:, 0] = u0
    G[:, 0] = g0
    n_valid = np.full(m, n_steps + 1, dtype=np.int64)
    args = (C, c, p, b, gamma, sigma2, sigma02)
    for k in range(n_steps):
        p0, q0, g_ = P[:, k], U[:, k], G[:, k]
        k1 = _rhs_vec(p0, q0, *args)
        k2 = _rhs_vec(p0 + 0.5 * ds * k1[0], q0 + 0.5 * ds * k1[1], *args)
        k3 = _rhs_vec(p0 + 0.5 * ds * k2[0], q0 + 0.5 * ds * k2[1], *args)
        k4 = _rhs_vec(p0 + ds * k3[0], q0 + ds * k3[1], *args)
        P[:, k + 1] = p0 + ds / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
        U[:, k + 1] = q0 + ds / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
        G[:, k + 1] = g_ + ds / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
        fell = (U[:, k + 1] <= u_floor) & (n_valid == n_steps + 1)
        n_valid[fell] = k + 1
    dP, dU, dG = _rhs_vec(P, U, C[:, None], *args[1:])
    return P, U, G, dP, dU, dG, n_valid


def curve_rk4(u0, s_grid, c, p, b, gamma, sigma2, sigma02, g0, u_floor):
    """One characteristic on an arbitrary increasing grid; returns P, U, G, n_valid."""
    s_grid = np.asarray(s_grid, dtype=float)
    n = s_grid.shape[0]
    C = sigma02 / (2.0 * sigma2) / (sigma02 * u0 + 1.0)
    P = np.empty(n)
    U = np.empty(n)
    G = np.empty(n)
    pk, uk, gk = 0.0, float(u0), float(g0)
    P[0], U[0], G[0] = pk, uk, gk
    args = (C, c, p, b, gamma, sigma2, sigma02)
    n_valid = n
    for k in range(n - 1):
        h = s_grid[k + 1] - s_grid[k]
        a1 = _rhs(pk, uk, *args)
        a2 = _rhs(pk + 0.5 * h * a1[0], uk + 0.5 * h * a1[1], *args)
        a3 = _rhs(pk + 0.5 * h * a2[0], uk + 0.5 * h * a2[1], *args)
        a4 = _rhs(pk + h * a3[0], uk + h * a3[1], *args)
        pk = pk + h / 6.0 * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        uk = uk + h / 6.0 * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
        gk = gk + h / 6.0 * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])
        P[k + 1], U[k + 1], G[k + 1] = pk, uk, gk
        if uk <= u_floor:
            n_valid = k + 2
            break
    return P[:n_valid], U[:n_valid], G[:n_valid], n_valid


def curve_end(u0, s_end, n_steps, c, p, b, gamma, sigma2, sigma02):
    """u^{u0}(s_end) by RK4 with ``n_steps`` uniform steps (P and U only)."""
    C = sigma02 / (2.0 * sigma2) / (sigma02 * u0 + 1.0)
    h = s_end / n_steps
    pk, uk = 0.0, float(u0)
    args = (C, c, p, b, gamma, sigma2, sigma02)
    for _ in range(n_steps):
        a1 = _rhs(pk, uk, *args)
        a2 = _rhs(pk + 0.5 * h * a1[0], uk + 0.5 * h * a1[1], *args)
        a3 = _rhs(pk + 0.5 * h * a2[0], uk + 0.5 * h * a2[1], *args)
        a4 = _rhs(pk + h * a3[0], uk + h * a3[1], *args)
        pk = pk + h / 6.0 * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        uk = uk + h / 6.0 * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
    return uk


def shoot(s, u, lo, hi, n_steps, c, p, b, gamma, sigma2, sigma02, tol, max_iter):
    """Bisection for u0 with u^{u0}(s) = u.  Returns (u0, residual, iterations)."""
    args = (c, p, b, gamma, sigma2, sigma02)
    mid = 0.5 * (lo + hi)
    res = math.inf
    it = 0
    while it < max_iter:
        it += 1
        mid = 0.5 * (lo + hi)
        res = curve_end(mid, s, n_steps, *args) - u
        if abs(res) < tol:
            break
        if res < 0.0:
            lo = mid
        else:
            hi = mid
    return mid, res, it


# -- field queries ------------------------------------------------------------


def _hermite(y0, y1, d0, d1, th, ds):
    th2 = th * th
    th3 = th2 * th
    return (
        (2 * th3 - 3 * th2 + 1) * y0
        + (th3 - 2 * th2 + th) * ds * d0
        + (-2 * th3 + 3 * th2) * y1
        + (th3 - th2) * ds * d1
    )


def _lagrange4(xs, ys, x):
    out = 0.0
    for i in range(4):
        w = 1.0
        for j in range(4):
            if j != i:
                w *= (x - xs[j]) / (xs[i] - xs[j])
        out += w * ys[i]
    return out


def field_query(s_arr, u_arr, ds, U, dU, P, dP, G, dG, u0grid, n_valid):
    """Gamma, Gamma_u and u0 at each (s, u); NaN marks points off the fan."""
    s_arr = np.asarray(s_arr, dtype=float)
    u_arr = np.asarray(u_arr, dtype=float)
    q = s_arr.shape[0]
    gam = np.full(q, np.nan)
    gam_u = np.full(q, np.nan)
    root = np.full(q, np.nan)
    m, npts = U.shape
    n_steps = npts - 1
    for i in range(q):
        s, u = s_arr[i], u_arr[i]
        if not (0.0 <= s <= ds * n_steps * (1.0 + 1e-14)):
            continue
        k = min(int(s / ds), n_steps - 1)
        th = s / ds - k
        if np.any(n_valid <= k + 1):
            usable = n_valid > k + 1
        else:
            usable = None
        uu = _hermite(U[:, k], U[:, k + 1], dU[:, k], dU[:, k + 1], th, ds)
        if usable is not None:
            idx = np.nonzero(usable)[0]
            if idx.size < 4:
                continue
            lo_i, hi_i = idx[0], idx[-1]
        else:
            lo_i, hi_i = 0, m - 1
        if not (uu[lo_i] <= u <= uu[hi_i]):
            continue
        j = int(np.searchsorted(uu[lo_i : hi_i + 1], u, side="right")) - 1 + lo_i
        i0 = min(max(j - 1, lo_i), hi_i - 3)
        sl = slice(i0, i0 + 4)
        xs = uu[sl]
        pp = _hermite(P[sl, k], P[sl, k + 1], dP[sl, k], dP[sl, k + 1], th, ds)
        gg = _hermite(G[sl, k], G[sl, k + 1], dG[sl, k], dG[sl, k + 1], th, ds)
        gam_u[i] = _lagrange4(xs, pp, u)
        gam[i] = _lagrange4(xs, gg, u)
        root[i] = _lagrange4(xs, u0grid[sl], u)
    return gam, gam_u, root


def path_rk4(T, n_steps, ds, U, dU, P, dP, G, dG, u0grid, n_valid, c, p, b, gamma, sigma2):
    """Forward RK4 for dZ/dt = 1/sigma^2 + (k')^{-1}(-Gamma_u / gamma).

    Returns (times, theta_sq, Z, ok); ``ok`` is False if a query left the fan.
    """
    times = T * np.arange(n_steps + 1) / n_steps
    Z = np.empty(n_steps + 1)
    th = np.empty(n_steps + 1)
    one = np.empty(1)
    two = np.empty(1)
    field = (ds, U, dU, P, dP, G, dG, u0grid, n_valid)

    def rate(t, z):
        s = T - t
        one[0] = s
        two[0] = z + s / sigma2
        _, gu, _ = field_query(one, two, *field)
        if not math.isfinite(gu[0]):
            raise _OffField
        y = -gu[0] / gamma if gu[0] < 0.0 else 0.0
        return kinv(c, p, b, y)

    h = T / n_steps
    z = 0.0
    try:
        for i in range(n_steps + 1):
            t = times[i]
            Z[i] = z
            a1 = rate(t, z)
            th[i] = a1
            if i == n_steps:
                break
            a2 = rate(t + 0.5 * h, z + 0.5 * h * (1.0 / sigma2 + a1))
            a3 = rate(t + 0.5 * h, z + 0.5 * h * (1.0 / sigma2 + a2))
            a4 = rate(times[i + 1], z + h * (1.0 / sigma2 + a3))
            z = z + h / 6.0 * (6.0 / sigma2 + a1 + 2.0 * a2 + 2.0 * a3 + a4)
    except _OffField:
        return times, th, Z, False
    return times, th, Z, True


class _OffField(Exception):
    pass


# -- upwind scheme ------------------------------------------------------------


def upwind_step(later, u_grid, tau, h, c, p, b, gamma, sigma2, sigma02, closure):
    """One explicit backward level: returns Gamma at t_n from Gamma at t_{n+1}."""
    out = np.empty_like(later)
    D = (later[1:] - later[:-1]) / h
    y = np.where(D < 0.0, -D / gamma, 0.0)
    kt = -gamma * _kstar_vec(c, p, b, y)
    f = sigma02 / (2.0 * sigma2) / (sigma02 * u_grid[:-1] + 1.0)
    out[:-1] = later[:-1] + tau * (f + kt)
    out[-1] = closure
    return out


def upwind_march(u_grid, n_t, tau, h, c, p, b, gamma, sigma2, sigma02, closure):
    """Fill levels n_t-1, ..., 0 from a zero terminal level.  Returns (values, ok)."""
    J = u_grid.shape[0]
    V = np.empty((n_t + 1, J))
    V[n_t] = 0.0
    for n in range(n_t - 1, -1, -1):
        V[n] = upwind_step(V[n + 1], u_grid, tau, h, c, p, b, gamma, sigma2, sigma02, closure[n])
        if not np.all(np.isfinite(V[n])):
            return V, False
    return V, True
