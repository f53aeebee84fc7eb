"""Exact solution for the truncated-linear information cost.

The investor either buys signal precision at the cap ``beta^2`` or buys
nothing.  The switch happens when the deterministic state ``Z_t`` crosses the
free boundary ``delta(t)``; after that the problem reduces to the
no-acquisition case.  The value function is

    V(t, x, y, z) = -(1/gamma) exp(-gamma x) exp(h(t, y, z)),
    h = P(t, z) + H(t, z) (mu0 y + sigma0^2 y^2 / 2),

with ``P`` given piecewise on either side of the boundary.  All partial
derivatives here are differentiated by hand so that finite-difference checks
of them are genuinely independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UnsupportedVariantError
from .model import GaussKernel, ModelParams, TruncatedLinear, kernel_H
from .paths import StrategyPath

__all__ = [
    "FreeBoundarySolution",
    "ValueSurface",
    "free_boundary",
    "free_boundary_prime",
    "switching_time",
    "coefficient_P",
    "value_surface",
    "feedback_controls",
    "closed_form_path",
    "closed_form_value",
]

_BISECT_ITERS = 200


def _check_cost(cost):
    if not isinstance(cost, TruncatedLinear):
        raise UnsupportedVariantError("closed form requires a TruncatedLinear cost")


def free_boundary(params: ModelParams, cost: TruncatedLinear, t):
    """delta(t) = -(T-t)/sigma^2 - 1/sigma0^2 + sqrt((T-t) / (2 c sigma^2 gamma))."""
    s2 = params.sigma**2
    tau = np.maximum(params.T - np.asarray(t, dtype=float), 0.0)
    out = -tau / s2 - 1.0 / params.sigma0**2 + np.sqrt(tau / (2.0 * cost.c * s2 * params.gamma))
    return float(out) if out.ndim == 0 else out


def free_boundary_prime(params: ModelParams, cost: TruncatedLinear, t):
    """delta'(t); tends to -infinity as t -> T."""
    s2 = params.sigma**2
    a = 2.0 * cost.c * s2 * params.gamma
    tau = np.asarray(params.T - np.asarray(t, dtype=float))
    with np.errstate(divide="ignore"):
        out = 1.0 / s2 - 1.0 / (2.0 * a) / np.sqrt(tau / a)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class FreeBoundarySolution:
    """Switching time of the bang-bang schedule.

    ``residual`` is the crossing-equation residual at ``t_star`` (zero when
    there is no acquisition).
    """

    params: ModelParams
    cost: TruncatedLinear
    t_star: float
    has_acquisition: bool
    residual: float = 0.0


def _crossing(params, cost, t):
    kappa = 1.0 / params.sigma**2 + cost.beta**2
    return t * kappa - free_boundary(params, cost, t)


def switching_time(params: ModelParams, cost: TruncatedLinear) -> FreeBoundarySolution:
    """First time the state ``t (1/sigma^2 + beta^2)`` reaches ``delta(t)``."""
    _check_cost(cost)
    if free_boundary(params, cost, 0.0) <= 0.0:
        return FreeBoundarySolution(params, cost, 0.0, False, 0.0)
    # g(0) = -delta(0) < 0 and g(T) = T kappa + 1/sigma0^2 > 0; g' > 0 throughout
    lo, hi = 0.0, params.T
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if _crossing(params, cost, mid) < 0.0:
            lo = mid
        else:
            hi = mid
    glo, ghi = _crossing(params, cost, lo), _crossing(params, cost, hi)
    t_star = lo if abs(glo) <= abs(ghi) else hi
    return FreeBoundarySolution(params, cost, t_star, True, abs(_crossing(params, cost, t_star)))


class _Closed:
    """Vectorised evaluation of P and its first partials."""

    def __init__(self, params: ModelParams, cost: TruncatedLinear):
        _check_cost(cost)
        self.p = params
        self.cost = cost
        self.gk = GaussKernel.from_params(params)
        self.kappa = 1.0 / self.gk.sigma2 + cost.beta**2
        self.K1 = params.mu0**2 / (2.0 * self.gk.sigma02)
        self.K2 = self.kappa / (2.0 * cost.beta**2)
        self.cg = cost.c * params.gamma

    # H and its partials
    def H(self, t, z):
        gk = self.gk
        return 1.0 / (gk.sigma02 * z + gk.sigma02 * (gk.T - t) / gk.sigma2 + 1.0)

    def right(self, t, z):
        """P on the no-acquisition side, with P_t and P_z."""
        gk, mu2 = self.gk, self.p.mu0**2
        H = self.H(t, z)
        A = mu2 * z + (mu2 - gk.sigma02) * (gk.T - t) / gk.sigma2
        P = 0.5 * np.log(H) - 0.5 * H * A
        Pz = -0.5 * gk.sigma02 * H + 0.5 * gk.sigma02 * H * H * A - 0.5 * H * mu2
        Pt = (
            gk.sigma02 / (2.0 * gk.sigma2) * H
            - gk.sigma02 * H * H * A / (2.0 * gk.sigma2)
            + 0.5 * H * (mu2 - gk.sigma02) / gk.sigma2
        )
        return P, Pt, Pz

    def t1(self, t, z):
        """Root in (t, T] of kappa (t1 - t) + z = delta(t1)."""
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        lo = np.array(t, dtype=float, copy=True)
        hi = np.full(np.broadcast(t, z).shape, self.p.T)
        lo = np.broadcast_to(lo, hi.shape).copy()

        def g(s):
            return self.kappa * (s - t) + z - free_boundary(self.p, self.cost, s)

        if np.any(g(lo) >= 0.0) or np.any(g(hi) <= 0.0):
            raise DomainError("t1 bracket lacks a sign change (point not left of the boundary)")
        for _ in range(_BISECT_ITERS):
            mid = 0.5 * (lo + hi)
            if np.all((mid == lo) | (mid == hi)):
                break
            neg = g(mid) < 0.0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        return 0.5 * (lo + hi)

    def left(self, t, z):
        """P on the acquisition side, with P_t and P_z."""
        gk = self.gk
        t1 = self.t1(t, z)
        d1 = free_boundary(self.p, self.cost, t1)
        dp1 = free_boundary_prime(self.p, self.cost, t1)
        Hb = self.H(t1, d1)
        H = self.H(t, z)
        pr, prt, prz = self.right(t1, d1)
        bcg = self.cost.beta**2 * self.cg
        P = pr + bcg * (t1 - t) - self.K1 * (Hb - H) - self.K2 * (np.log(Hb) - np.log(H))

        Hb_prime = Hb * Hb * (gk.sigma02 / gk.sigma2 - gk.sigma02 * dp1)
        q_prime = prt + prz * dp1 + bcg - self.K1 * Hb_prime - self.K2 * Hb_prime / Hb
        den = self.kappa - dp1
        dt1_dz = -1.0 / den
        dt1_dt = self.kappa / den
        Hz = -gk.sigma02 * H * H
        Ht = gk.sigma02 / gk.sigma2 * H * H
        Pz = q_prime * dt1_dz + self.K1 * Hz + self.K2 * Hz / H
        Pt = q_prime * dt1_dt - bcg + self.K1 * Ht + self.K2 * Ht / H
        return P, Pt, Pz

    def P(self, t, z):
        t = np.asarray(t, dtype=float)
        z = np.asarray(z, dtype=float)
        if np.any(z < 0.0):
            raise DomainError("P is defined for z >= 0")
        if np.any((t < 0.0) | (t > self.p.T)):
            raise DomainError("t outside [0, T]")
        t, z = np.broadcast_arrays(t, z)
        delta = free_boundary(self.p, self.cost, t)
        on_left = z < delta
        out = [np.empty(t.shape) for _ in range(3)]
        if np.any(~on_left):
            for o, v in zip(out, self.right(t[~on_left], z[~on_left])):
                o[~on_left] = v
        if np.any(on_left):
            for o, v in zip(out, self.left(t[on_left], z[on_left])):
                o[on_left] = v
        return tuple(out)


def coefficient_P(params: ModelParams, cost: TruncatedLinear, t, z):
    """The y-independent part P(t, z) of the exponent h."""
    P, _, _ = _Closed(params, cost).P(t, z)
    return float(P) if P.ndim == 0 else P


class ValueSurface:
    """Closed-form value function and its analytic partial derivatives."""

    def __init__(self, params: ModelParams, cost: TruncatedLinear):
        self._c = _Closed(params, cost)
        self.params = params
        self.cost = cost

    def h_parts(self, t, y, z):
        """h and h_t, h_y, h_yy, h_z as a dict of arrays."""
        c = self._c
        gk = c.gk
        y = np.asarray(y, dtype=float)
        P, Pt, Pz = c.P(t, z)
        H = c.H(np.asarray(t, dtype=float), np.asarray(z, dtype=float))
        quad = gk.mu0 * y + 0.5 * gk.sigma02 * y * y
        return {
            "h": P + H * quad,
            "h_t": Pt + gk.sigma02 / gk.sigma2 * H * H * quad,
            "h_z": Pz - gk.sigma02 * H * H * quad,
            "h_y": H * (gk.mu0 + gk.sigma02 * y),
            "h_yy": H * gk.sigma02,
        }

    def regime(self, t, y, z):
        """h_z + h_yy/2 + h_y^2/2 + c gamma; <= 0 where buying information pays."""
        d = self.h_parts(t, y, z)
        return d["h_z"] + 0.5 * d["h_yy"] + 0.5 * d["h_y"] ** 2 + self._c.cg

    def __call__(self, t, x, y, z):
        d = self.h_parts(t, y, z)
        g = self.params.gamma
        return -np.exp(-g * np.asarray(x, dtype=float) + d["h"]) / g

    def partials(self, t, x, y, z):
        """V together with V_t, V_x, V_xx, V_y, V_yy, V_xy and V_z."""
        d = self.h_parts(t, y, z)
        g = self.params.gamma
        V = -np.exp(-g * np.asarray(x, dtype=float) + d["h"]) / g
        return {
            "V": V,
            "V_t": d["h_t"] * V,
            "V_x": -g * V,
            "V_xx": g * g * V,
            "V_y": d["h_y"] * V,
            "V_yy": (d["h_yy"] + d["h_y"] ** 2) * V,
            "V_xy": -g * d["h_y"] * V,
            "V_z": d["h_z"] * V,
        }

    def hjb_residual(self, t, x, y, z, partials=None):
        """Residual of the regime-appropriate HJB equation.

        The regime is chosen from the sign of ``V_z + V_yy/2 - c V_x``, as the
        equation itself prescribes.  ``partials`` may be supplied (for instance
        from finite differences) to test them instead of the analytic ones.
        """
        d = partials if partials is not None else self.partials(t, x, y, z)
        s2 = self.params.sigma**2
        beta2 = self.cost.beta**2
        c = self.cost.c
        drift = d["V_z"] + 0.5 * d["V_yy"]
        hedge = d["V_xy"] ** 2 / (2.0 * s2 * d["V_xx"])
        idle = d["V_t"] + drift / s2 - hedge
        buy = d["V_t"] + (1.0 / s2 + beta2) * drift - hedge - c * beta2 * d["V_x"]
        return np.where(drift - c * d["V_x"] < 0.0, idle, buy)


def value_surface(params: ModelParams, cost: TruncatedLinear) -> ValueSurface:
    return ValueSurface(params, cost)


def feedback_controls(params: ModelParams, cost: TruncatedLinear, t, y, z, fb=None):
    """Optimal (theta, pi) at the state (t, y, z).

    Returns ``beta`` for theta up to the switching time and 0 after it; pi is
    the horizon-discounted certainty-equivalent allocation.
    """
    fb = fb or switching_time(params, cost)
    theta = cost.beta if (fb.has_acquisition and t <= fb.t_star) else 0.0
    s2, s02 = params.sigma**2, params.sigma0**2
    pi = (params.mu0 + s02 * y) / (s02 * z + s02 / s2 * (params.T - t) + 1.0) / (s2 * params.gamma)
    return theta, pi


def closed_form_path(params: ModelParams, cost: TruncatedLinear, n_steps: int = 4096) -> StrategyPath:
    """The bang-bang schedule sampled on a uniform grid."""
    fb = switching_time(params, cost)
    s2 = params.sigma**2
    times = np.linspace(0.0, params.T, n_steps + 1)
    b2 = cost.beta**2
    on = (times <= fb.t_star) if fb.has_acquisition else np.zeros(times.shape, bool)
    theta_sq = np.where(on, b2, 0.0)
    Z = times / s2 + (b2 * np.minimum(times, fb.t_star) if fb.has_acquisition else 0.0)
    u = Z + (params.T - times) / s2
    return StrategyPath(times, theta_sq, Z, u, "closedform")


def closed_form_value(params: ModelParams, cost: TruncatedLinear, x0: float | None = None) -> float:
    x0 = params.x0 if x0 is None else x0
    return float(ValueSurface(params, cost)(0.0, x0, 0.0, 0.0))

