# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: characteristic fans, shooting, field queries, upwind march.

Function for function this mirrors ``_pykernels``; the arithmetic is written
in the same order so both backends agree to rounding.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, pow, fabs, isfinite, NAN

cnp.import_array()

cdef int BISECT_MAX = 400


cdef inline double _kinv(double c, double p, double b, double y) noexcept nogil:
    cdef double lo, hi, mid
    cdef int it
    if y <= 0.0:
        return 0.0
    if b == 0.0:
        return pow(y / (c * p), 1.0 / (p - 1.0))
    if p == 2.0:
        return y / (2.0 * (c + b))
    if p == 3.0:
        return 2.0 * y / (2.0 * b + sqrt(4.0 * b * b + 12.0 * c * y))
    lo = 0.0
    hi = 1.0
    while c * p * pow(hi, p - 1.0) + 2.0 * b * hi < y:
        lo = hi
        hi = 2.0 * hi
    for it in range(BISECT_MAX):
        if hi - lo <= 1e-12:
            break
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if c * p * pow(mid, p - 1.0) + 2.0 * b * mid < y:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


cdef inline double _kstar(double c, double p, double b, double y) noexcept nogil:
    cdef double x
    if p == 2.0:
        return y * y / (4.0 * (c + b))
    x = _kinv(c, p, b, y)
    return x * y - (c * pow(x, p) + b * x * x)


cdef struct Model:
    double c, p, b, gamma, sigma2, sigma02


cdef inline void _rhs(double P, double U, double C, Model* m,
                      double* dP, double* dU, double* dG) noexcept nogil:
    cdef double y = -P / m.gamma if P < 0.0 else 0.0
    cdef double kt = -m.gamma * _kstar(m.c, m.p, m.b, y)
    cdef double a = _kinv(m.c, m.p, m.b, y)
    cdef double d = kt - C
    dP[0] = -2.0 * m.sigma2 * d * d
    dU[0] = -a
    dG[0] = m.sigma02 / (2.0 * m.sigma2) / (m.sigma02 * U + 1.0) + kt - P * a


def kinv(double c, double p, double b, double y):
    return _kinv(c, p, b, y)


def kstar(double c, double p, double b, double y):
    return _kstar(c, p, b, y)


cdef inline void _rk4_step(double* pk, double* uk, double* gk, double h, double C,
                           Model* m) noexcept nogil:
    cdef double p1, u1, g1, p2, u2, g2, p3, u3, g3, p4, u4, g4
    _rhs(pk[0], uk[0], C, m, &p1, &u1, &g1)
    _rhs(pk[0] + 0.5 * h * p1, uk[0] + 0.5 * h * u1, C, m, &p2, &u2, &g2)
    _rhs(pk[0] + 0.5 * h * p2, uk[0] + 0.5 * h * u2, C, m, &p3, &u3, &g3)
    _rhs(pk[0] + h * p3, uk[0] + h * u3, C, m, &p4, &u4, &g4)
    pk[0] = pk[0] + h / 6.0 * (p1 + 2.0 * p2 + 2.0 * p3 + p4)
    uk[0] = uk[0] + h / 6.0 * (u1 + 2.0 * u2 + 2.0 * u3 + u4)
    gk[0] = gk[0] + h / 6.0 * (g1 + 2.0 * g2 + 2.0 * g3 + g4)


def fan_rk4(u0_in, Py_ssize_t n_steps, double ds, double c, double p, double b,
            double gamma, double sigma2, double sigma02, double g0, double u_floor):
    cdef double[::1] u0 = np.ascontiguousarray(u0_in, dtype=np.float64)
    cdef Py_ssize_t M = u0.shape[0], i, k
    cdef Model m = Model(c, p, b, gamma, sigma2, sigma02)
    P_a = np.empty((M, n_steps + 1))
    U_a = np.empty((M, n_steps + 1))
    G_a = np.empty((M, n_steps + 1))
    dP_a = np.empty((M, n_steps + 1))
    dU_a = np.empty((M, n_steps + 1))
    dG_a = np.empty((M, n_steps + 1))
    nv_a = np.full(M, n_steps + 1, dtype=np.int64)
    cdef double[:, ::1] P = P_a, U = U_a, G = G_a, dP = dP_a, dU = dU_a, dG = dG_a
    cdef long long[::1] nv = nv_a
    cdef double C, pk, uk, gk
    with nogil:
        for i in range(M):
            C = sigma02 / (2.0 * sigma2) / (sigma02 * u0[i] + 1.0)
            pk = 0.0
            uk = u0[i]
            gk = g0
            P[i, 0] = pk
            U[i, 0] = uk
            G[i, 0] = gk
            for k in range(n_steps):
                _rk4_step(&pk, &uk, &gk, ds, C, &m)
                P[i, k + 1] = pk
                U[i, k + 1] = uk
                G[i, k + 1] = gk
                if uk <= u_floor and nv[i] == n_steps + 1:
                    nv[i] = k + 1
            for k in range(n_steps + 1):
                _rhs(P[i, k], U[i, k], C, &m, &dP[i, k], &dU[i, k], &dG[i, k])
    return P_a, U_a, G_a, dP_a, dU_a, dG_a, nv_a


def curve_rk4(double u0, s_grid_in, double c, double p, double b, double gamma,
              double sigma2, double sigma02, double g0, double u_floor):
    cdef double[::1] s = np.ascontiguousarray(s_grid_in, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0], k, n_valid = n
    cdef Model m = Model(c, p, b, gamma, sigma2, sigma02)
    P_a = np.empty(n)
    U_a = np.empty(n)
    G_a = np.empty(n)
    cdef double[::1] P = P_a, U = U_a, G = G_a
    cdef double C = sigma02 / (2.0 * sigma2) / (sigma02 * u0 + 1.0)
    cdef double pk = 0.0, uk = u0, gk = g0
    P[0] = pk
    U[0] = uk
    G[0] = gk
    with nogil:
        for k in range(n - 1):
            _rk4_step(&pk, &uk, &gk, s[k + 1] - s[k], C, &m)
            P[k + 1] = pk
            U[k + 1] = uk
            G[k + 1] = gk
            if uk <= u_floor:
                n_valid = k + 2
                break
    return P_a[:n_valid], U_a[:n_valid], G_a[:n_valid], n_valid


cdef double _curve_end(double u0, double s_end, Py_ssize_t n_steps, Model* m) noexcept nogil:
    cdef double C = m.sigma02 / (2.0 * m.sigma2) / (m.sigma02 * u0 + 1.0)
    cdef double h = s_end / n_steps
    cdef double pk = 0.0, uk = u0, gk = 0.0
    cdef Py_ssize_t k
    for k in range(n_steps):
        _rk4_step(&pk, &uk, &gk, h, C, m)
    return uk


def curve_end(double u0, double s_end, Py_ssize_t n_steps, double c, double p, double b,
              double gamma, double sigma2, double sigma02):
    cdef Model m = Model(c, p, b, gamma, sigma2, sigma02)
    return _curve_end(u0, s_end, n_steps, &m)


def shoot(double s, double u, double lo, double hi, Py_ssize_t n_steps, double c, double p,
          double b, double gamma, double sigma2, double sigma02, double tol, int max_iter):
    cdef Model m = Model(c, p, b, gamma, sigma2, sigma02)
    cdef double mid = 0.5 * (lo + hi), res = 1e300
    cdef int it = 0
    with nogil:
        while it < max_iter:
            it += 1
            mid = 0.5 * (lo + hi)
            res = _curve_end(mid, s, n_steps, &m) - u
            if fabs(res) < tol:
                break
            if res < 0.0:
                lo = mid
            else:
                hi = mid
    return mid, res, it


cdef inline double _herm(double y0, double y1, double d0, double d1, double th, double ds) noexcept nogil:
    cdef double th2 = th * th
    cdef double th3 = th2 * th
    return ((2 * th3 - 3 * th2 + 1) * y0
            + (th3 - 2 * th2 + th) * ds * d0
            + (-2 * th3 + 3 * th2) * y1
            + (th3 - th2) * ds * d1)


cdef inline double _lag4(double* xs, double* ys, double x) noexcept nogil:
    cdef double out = 0.0, w
    cdef int i, j
    for i in range(4):
        w = 1.0
        for j in range(4):
            if j != i:
                w *= (x - xs[j]) / (xs[i] - xs[j])
        out += w * ys[i]
    return out


cdef struct Field:
    double ds
    Py_ssize_t M, n_steps
    double* U
    double* dU
    double* P
    double* dP
    double* G
    double* dG
    double* u0
    long long* nv


cdef inline double _u_at(Field* f, Py_ssize_t i, Py_ssize_t k, double th) noexcept nogil:
    cdef Py_ssize_t o = i * (f.n_steps + 1) + k
    return _herm(f.U[o], f.U[o + 1], f.dU[o], f.dU[o + 1], th, f.ds)


cdef int _query(Field* f, double s, double u, double* gam, double* gam_u, double* root) noexcept nogil:
    """Return 0 on success, 1 if (s, u) is off the fan."""
    cdef Py_ssize_t k, lo_i, hi_i, a, b_, mid, i0, r, o
    cdef double th
    cdef double xs[4]
    cdef double pp[4]
    cdef double gg[4]
    cdef double rr[4]
    if not (s >= 0.0 and s <= f.ds * f.n_steps * (1.0 + 1e-14)):
        return 1
    k = <Py_ssize_t>(s / f.ds)
    if k > f.n_steps - 1:
        k = f.n_steps - 1
    th = s / f.ds - k
    # usable curves are those still valid past node k + 1
    lo_i = 0
    while lo_i < f.M and f.nv[lo_i] <= k + 1:
        lo_i += 1
    hi_i = f.M - 1
    while hi_i >= 0 and f.nv[hi_i] <= k + 1:
        hi_i -= 1
    if hi_i - lo_i < 3:
        return 1
    if not (_u_at(f, lo_i, k, th) <= u and u <= _u_at(f, hi_i, k, th)):
        return 1
    # largest j with u_j(s) <= u
    a = lo_i
    b_ = hi_i
    while b_ - a > 1:
        mid = (a + b_) // 2
        if _u_at(f, mid, k, th) <= u:
            a = mid
        else:
            b_ = mid
    if _u_at(f, b_, k, th) <= u:
        a = b_
    i0 = a - 1
    if i0 < lo_i:
        i0 = lo_i
    if i0 > hi_i - 3:
        i0 = hi_i - 3
    for r in range(4):
        o = (i0 + r) * (f.n_steps + 1) + k
        xs[r] = _herm(f.U[o], f.U[o + 1], f.dU[o], f.dU[o + 1], th, f.ds)
        pp[r] = _herm(f.P[o], f.P[o + 1], f.dP[o], f.dP[o + 1], th, f.ds)
        gg[r] = _herm(f.G[o], f.G[o + 1], f.dG[o], f.dG[o + 1], th, f.ds)
        rr[r] = f.u0[i0 + r]
    gam_u[0] = _lag4(xs, pp, u)
    gam[0] = _lag4(xs, gg, u)
    root[0] = _lag4(xs, rr, u)
    return 0


cdef Field _make_field(double ds, double[:, ::1] U, double[:, ::1] dU, double[:, ::1] P,
                       double[:, ::1] dP, double[:, ::1] G, double[:, ::1] dG,
                       double[::1] u0, long long[::1] nv):
    cdef Field f
    f.ds = ds
    f.M = U.shape[0]
    f.n_steps = U.shape[1] - 1
    f.U = &U[0, 0]
    f.dU = &dU[0, 0]
    f.P = &P[0, 0]
    f.dP = &dP[0, 0]
    f.G = &G[0, 0]
    f.dG = &dG[0, 0]
    f.u0 = &u0[0]
    f.nv = &nv[0]
    return f


def _c(a, dtype=np.float64):
    return np.ascontiguousarray(a, dtype=dtype)


def _hold(U, dU, P, dP, G, dG, u0grid, n_valid):
    # contiguous copies must outlive the raw pointers taken from them
    return (_c(U), _c(dU), _c(P), _c(dP), _c(G), _c(dG), _c(u0grid), _c(n_valid, np.int64))


def field_query(s_in, u_in, double ds, U, dU, P, dP, G, dG, u0grid, n_valid):
    cdef double[::1] s = _c(s_in), u = _c(u_in)
    keep = _hold(U, dU, P, dP, G, dG, u0grid, n_valid)
    cdef Field f = _make_field(ds, keep[0], keep[1], keep[2], keep[3], keep[4], keep[5], keep[6], keep[7])
    cdef Py_ssize_t q = s.shape[0], i
    gam_a = np.empty(q)
    gu_a = np.empty(q)
    rt_a = np.empty(q)
    cdef double[::1] gam = gam_a, gu = gu_a, rt = rt_a
    with nogil:
        for i in range(q):
            if _query(&f, s[i], u[i], &gam[i], &gu[i], &rt[i]) != 0:
                gam[i] = NAN
                gu[i] = NAN
                rt[i] = NAN
    return gam_a, gu_a, rt_a


cdef inline int _rate(Field* f, double T, double t, double z, Model* m, double* out) noexcept nogil:
    cdef double s = T - t, g, gu, r, y
    if _query(f, s, z + s / m.sigma2, &g, &gu, &r) != 0:
        return 1
    y = -gu / m.gamma if gu < 0.0 else 0.0
    out[0] = _kinv(m.c, m.p, m.b, y)
    return 0


def path_rk4(double T, Py_ssize_t n_steps, double ds, U, dU, P, dP, G, dG, u0grid, n_valid,
             double c, double p, double b, double gamma, double sigma2):
    keep = _hold(U, dU, P, dP, G, dG, u0grid, n_valid)
    cdef Field f = _make_field(ds, keep[0], keep[1], keep[2], keep[3], keep[4], keep[5], keep[6], keep[7])
    cdef Model m = Model(c, p, b, gamma, sigma2, 0.0)
    times_a = T * np.arange(n_steps + 1) / n_steps
    Z_a = np.empty(n_steps + 1)
    th_a = np.empty(n_steps + 1)
    cdef double[::1] times = times_a, Z = Z_a, th = th_a
    cdef double h = T / n_steps, z = 0.0, t, a1, a2, a3, a4
    cdef Py_ssize_t i
    cdef int bad = 0
    with nogil:
        for i in range(n_steps + 1):
            t = times[i]
            Z[i] = z
            if _rate(&f, T, t, z, &m, &a1) != 0:
                bad = 1
                break
            th[i] = a1
            if i == n_steps:
                break
            if _rate(&f, T, t + 0.5 * h, z + 0.5 * h * (1.0 / sigma2 + a1), &m, &a2) != 0:
                bad = 1
                break
            if _rate(&f, T, t + 0.5 * h, z + 0.5 * h * (1.0 / sigma2 + a2), &m, &a3) != 0:
                bad = 1
                break
            if _rate(&f, T, times[i + 1], z + h * (1.0 / sigma2 + a3), &m, &a4) != 0:
                bad = 1
                break
            z = z + h / 6.0 * (6.0 / sigma2 + a1 + 2.0 * a2 + 2.0 * a3 + a4)
    return times_a, th_a, Z_a, bad == 0


def upwind_step(later_in, u_grid_in, double tau, double h, double c, double p, double b,
                double gamma, double sigma2, double sigma02, double closure):
    cdef double[::1] later = _c(later_in), ug = _c(u_grid_in)
    cdef Py_ssize_t J = later.shape[0], j
    out_a = np.empty(J)
    cdef double[::1] out = out_a
    cdef double D, y
    with nogil:
        for j in range(J - 1):
            D = (later[j + 1] - later[j]) / h
            y = -D / gamma if D < 0.0 else 0.0
            out[j] = later[j] + tau * (sigma02 / (2.0 * sigma2) / (sigma02 * ug[j] + 1.0)
                                       + (-gamma * _kstar(c, p, b, y)))
        out[J - 1] = closure
    return out_a


def upwind_march(u_grid_in, Py_ssize_t n_t, double tau, double h, double c, double p, double b,
                 double gamma, double sigma2, double sigma02, closure_in):
    cdef double[::1] ug = _c(u_grid_in), closure = _c(closure_in)
    cdef Py_ssize_t J = ug.shape[0], j, n
    V_a = np.empty((n_t + 1, J))
    cdef double[:, ::1] V = V_a
    cdef double D, y, v
    cdef int ok = 1
    with nogil:
        for j in range(J):
            V[n_t, j] = 0.0
        n = n_t - 1
        while n >= 0 and ok:
            for j in range(J - 1):
                D = (V[n + 1, j + 1] - V[n + 1, j]) / h
                y = -D / gamma if D < 0.0 else 0.0
                v = V[n + 1, j] + tau * (sigma02 / (2.0 * sigma2) / (sigma02 * ug[j] + 1.0)
                                         + (-gamma * _kstar(c, p, b, y)))
                if not isfinite(v):
                    ok = 0
                V[n, j] = v
            V[n, J - 1] = closure[n]
            n -= 1
    return V_a, ok == 1
