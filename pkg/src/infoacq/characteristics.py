"""Method of characteristics for the smooth-cost Hamilton-Jacobi equation.

In reversed time ``s = T - t`` the equation

    Gamma_t + f(u) + k~*(Gamma_u) = 0,   Gamma(T, u) = -mu0^2 / (2 sigma0^2),
    f(u) = (sigma0^2 / 2 sigma^2) / (sigma0^2 u + 1),

has characteristics started at ``(s, u) = (0, u0)`` along which ``p =
Gamma_u`` obeys a scalar ODE (the Hamiltonian ``f(u) + k~*(p)`` is conserved)
and ``u`` drifts down at the optimal precision rate.  A fan of such curves is
integrated once; queries are answered by locating the two curves that bracket
the target point and interpolating across the fan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    DomainError,
    IntegrationFailure,
    NoConvergence,
    NumericalFailure,
    ShootingError,
    UnsupportedVariantError,
)
from .model import GaussKernel, ModelParams, Power, Regularized
from .paths import StrategyPath

__all__ = [
    "CharCurve",
    "GammaField",
    "hamilton_ode",
    "shoot_u0",
    "gamma_field",
    "optimal_theta_path",
    "regularized_sequence",
    "regularized_limit",
    "RegularizedSequence",
    "cfl_bound",
    "u_cap",
    "path_field",
]

SHOOT_TOL = 1e-10
SHOOT_MAX_ITER = 200


def _smooth_args(params: ModelParams, cost):
    if not getattr(cost, "smooth", False):
        raise UnsupportedVariantError("characteristics need a smooth (Power/Regularized) cost")
    if not cost.strictly_convex_at_zero:
        raise UnsupportedVariantError("characteristics need k''(0) > 0 (p = 2 or b > 0)")
    c, p, b = cost.coeffs
    return c, p, b, float(params.gamma), params.sigma**2, params.sigma0**2


def cfl_bound(params: ModelParams, cost) -> float:
    """(k')^{-1}(sigma0^4 T / (2 sigma^2 gamma)): the largest precision rate ever used."""
    y = params.sigma0**4 * params.T / (2.0 * params.sigma**2 * params.gamma)
    return float(cost.marginal_inverse(y))


def u_cap(params: ModelParams, cost) -> float:
    """Default upper end of the u-domain: 2T/sigma^2 + T * cfl + 10."""
    return 2.0 * params.T / params.sigma**2 + params.T * cfl_bound(params, cost) + 10.0


def _u_floor(params):
    # stop a curve well before f(u) blows up at u = -1/sigma0^2
    return -1.0 / (2.0 * params.sigma0**2) + 1e-9


@dataclass(frozen=True, eq=False)
class CharCurve:
    """One characteristic, sampled on a reversed-time grid.

    Attributes
    ----------
    u0 : float
        Starting height at ``s = 0`` (that is, at ``t = T``).
    times : ndarray
        Reversed-time samples ``s``; may stop short of the requested grid
        if the curve fell to the floor.
    gamma_u, u, value : ndarray
        ``Gamma_u``, ``u`` and ``Gamma`` along the curve.
    """

    u0: float
    times: np.ndarray
    gamma_u: np.ndarray
    u: np.ndarray
    value: np.ndarray
    params: ModelParams = field(repr=False)
    cost: object = field(repr=False)

    @property
    def t_cap(self) -> float:
        return float(self.times[-1])

    def conserved(self) -> np.ndarray:
        """k~*(Gamma_u) + f(u) - f(u0); identically zero for the exact flow."""
        gk = GaussKernel.from_params(self.params)
        kt = self.cost.tilde_conjugate(self.params.gamma, self.gamma_u)
        return kt + gk.info_rate(self.u) - gk.info_rate(self.u0)

    def precision(self) -> np.ndarray:
        """Optimal theta^2 along the curve, (k')^{-1}(-Gamma_u / gamma)."""
        return self.cost.tilde_conjugate_prime(self.params.gamma, self.gamma_u)


def hamilton_ode(params: ModelParams, cost, u0: float, grid) -> CharCurve:
    """Integrate the characteristic from ``(0, u0)`` over the reversed-time ``grid``.

    Classical fourth-order Runge-Kutta with the steps given by ``grid``.
    """
    args = _smooth_args(params, cost)
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or grid[0] != 0.0 or np.any(np.diff(grid) <= 0.0):
        raise DomainError("grid must be increasing and start at 0")
    if u0 < 0.0:
        raise DomainError("u0 must be nonnegative")
    g0 = -params.mu0**2 / (2.0 * params.sigma0**2)
    P, U, G, n = _kernels.curve_rk4(float(u0), grid, *args, g0, _u_floor(params))
    if not (np.all(np.isfinite(P)) and np.all(np.isfinite(U)) and np.all(np.isfinite(G))):
        raise IntegrationFailure("non-finite state along characteristic")
    if np.any(np.diff(P) > 0.0) or np.any(np.diff(U) > 0.0):
        raise IntegrationFailure("characteristic lost monotonicity; reduce the step")
    return CharCurve(float(u0), grid[:n].copy(), P, U, G, params, cost)


def _shoot_bracket(params, cost, s, u):
    # along the curve -Gamma_u <= sigma0^4 s / (2 sigma^2), so u0 - u <= s * (k')^{-1}(that / gamma)
    y = params.sigma0**4 * s / (2.0 * params.sigma**2 * params.gamma)
    width = s * float(cost.marginal_inverse(y))
    return u, u + width * (1.0 + 1e-9) + 1e-12


def shoot_u0(params: ModelParams, cost, t: float, u: float, n_steps: int = 4096) -> float:
    """The unique ``u0`` whose characteristic passes through ``u`` at reversed time ``t``.

    ``n_steps`` is the RK4 step count for a full horizon; shorter spans use
    proportionally fewer steps.
    """
    args = _smooth_args(params, cost)
    s = float(t)
    if not (0.0 <= s <= params.T) or u < 0.0:
        raise DomainError("shoot_u0 needs 0 <= t <= T and u >= 0")
    if s == 0.0:
        return float(u)
    steps = max(1, math.ceil(n_steps * s / params.T))
    lo, hi = _shoot_bracket(params, cost, s, u)
    g_lo = _kernels.curve_end(lo, s, steps, *args) - u
    g_hi = _kernels.curve_end(hi, s, steps, *args) - u
    if abs(g_lo) < SHOOT_TOL:
        return float(lo)
    if not (g_lo < 0.0 < g_hi):
        raise ShootingError(f"no sign change on [{lo}, {hi}] at (s={s}, u={u})")
    u0, res, it = _kernels.shoot(s, float(u), lo, hi, steps, *args, SHOOT_TOL, SHOOT_MAX_ITER)
    if not abs(res) < SHOOT_TOL:
        raise ShootingError(f"bisection stalled after {it} iterations, residual {res:.3e}")
    return float(u0)


class GammaField:
    """Gamma and Gamma_u on [0, T] x [u_lo, u_hi] from a cached fan of characteristics.

    Queries use forward time ``t``; internally ``s = T - t``.  Along each
    curve values are interpolated with cubic Hermite polynomials in ``s``
    built from the ODE right-hand side, and across curves with four-point
    Lagrange interpolation in ``u``.  ``Gamma_u`` comes from the ODE state,
    never from differencing ``Gamma``.
    """

    def __init__(self, params: ModelParams, cost, u0_grid, n_steps: int = 1024):
        args = _smooth_args(params, cost)
        u0_grid = np.ascontiguousarray(u0_grid, dtype=float)
        if u0_grid.size < 4 or np.any(np.diff(u0_grid) <= 0.0):
            raise DomainError("need at least four increasing starting heights")
        self.params = params
        self.cost = cost
        self.n_steps = int(n_steps)
        self.ds = params.T / self.n_steps
        self.u0_grid = u0_grid
        g0 = -params.mu0**2 / (2.0 * params.sigma0**2)
        P, U, G, dP, dU, dG, nv = _kernels.fan_rk4(
            u0_grid, self.n_steps, self.ds, *args, g0, _u_floor(params)
        )
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(U))):
            raise IntegrationFailure("non-finite state in characteristic fan")
        if np.any(np.diff(P, axis=1) > 0.0):
            raise IntegrationFailure("Gamma_u increased along a characteristic")
        self._arrays = (U, dU, P, dP, G, dG)
        self.n_valid = nv
        self._args = args

    @property
    def curves(self):
        """(P, U, G) arrays: Gamma_u, u and Gamma on the fan, one row per curve."""
        U, _, P, _, G, _ = self._arrays
        return P, U, G

    def query(self, t, u, strict: bool = True):
        """Return (Gamma, Gamma_u, u0) arrays at forward times ``t`` and heights ``u``."""
        t, u = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(u, dtype=float))
        shape = t.shape
        s = (self.params.T - t).ravel()
        g, gu, r = _kernels.field_query(s, u.ravel(), self.ds, *self._arrays, self.u0_grid, self.n_valid)
        if strict and not np.all(np.isfinite(gu)):
            bad = np.flatnonzero(~np.isfinite(gu))[0]
            raise DomainError(
                f"point (t={t.ravel()[bad]}, u={u.ravel()[bad]}) is outside the cached fan"
            )
        return g.reshape(shape), gu.reshape(shape), r.reshape(shape)

    def gamma(self, t, u):
        return _scalar(self.query(t, u)[0])

    def gamma_u(self, t, u):
        return _scalar(self.query(t, u)[1])

    def u0(self, t, u):
        """Interpolated starting height of the characteristic through (t, u)."""
        return _scalar(self.query(t, u)[2])

    def shoot(self, t, u, n_steps: int = 4096) -> float:
        """Exact shooting (fresh RK4 integrations) at forward time ``t``."""
        return shoot_u0(self.params, self.cost, self.params.T - t, u, n_steps)

    def gamma_exact(self, t, u, n_steps: int = 4096):
        """(Gamma, Gamma_u) at one point from a freshly shot characteristic."""
        s = self.params.T - t
        u0 = self.shoot(t, u, n_steps)
        if s == 0.0:
            return -self.params.mu0**2 / (2.0 * self.params.sigma0**2), 0.0
        steps = max(1, math.ceil(n_steps * s / self.params.T))
        curve = hamilton_ode(self.params, self.cost, u0, np.linspace(0.0, s, steps + 1))
        return float(curve.value[-1]), float(curve.gamma_u[-1])

    def hj_residual(self, t, u, dt=1e-4):
        """Gamma_t + f(u) + k~*(Gamma_u), with Gamma_t by central differences."""
        g_p = self.query(np.asarray(t) + dt, u)[0]
        g_m = self.query(np.asarray(t) - dt, u)[0]
        _, gu, _ = self.query(t, u)
        gk = GaussKernel.from_params(self.params)
        return (g_p - g_m) / (2.0 * dt) + gk.info_rate(u) + self.cost.tilde_conjugate(self.params.gamma, gu)


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def gamma_field(params: ModelParams, cost, resolution: int = 1024, *, u_range=None, n_curves=None) -> GammaField:
    """Build a :class:`GammaField`.

    Parameters
    ----------
    resolution : int
        RK4 steps per curve over the full horizon.
    u_range : (float, float), optional
        Range of starting heights; defaults to ``[0, u_cap]``.
    n_curves : int, optional
        Number of curves; defaults to a spacing of about 0.25 in ``u0``.
    """
    _smooth_args(params, cost)
    lo, hi = u_range if u_range is not None else (0.0, u_cap(params, cost))
    if n_curves is None:
        n_curves = max(16, int(math.ceil((hi - lo) / 0.25)) + 1)
    return GammaField(params, cost, np.linspace(lo, hi, n_curves), resolution)


def path_field(params: ModelParams, cost, resolution: int = 1024) -> GammaField:
    """A fan concentrated on the heights an optimal path can visit."""
    base = params.T / params.sigma**2
    span = 2.0 * params.T * cfl_bound(params, cost) + 1.0
    lo = max(0.0, base - 1.0)
    hi = base + span
    n = int(min(2048, max(64, math.ceil((hi - lo) / 0.05) + 1)))
    return GammaField(params, cost, np.linspace(lo, hi, n), resolution)


def optimal_theta_path(params: ModelParams, cost, n_steps: int = 4096, field: GammaField | None = None) -> StrategyPath:
    """Optimal schedule from dZ = (1/sigma^2 + (k')^{-1}(-Gamma_u / gamma)) dt, Z(0) = 0."""
    c, p, b, gamma, s2, _ = _smooth_args(params, cost)
    fld = field if field is not None else path_field(params, cost)
    times, th, Z, ok = _kernels.path_rk4(
        params.T, int(n_steps), fld.ds, *fld._arrays, fld.u0_grid, fld.n_valid, c, p, b, gamma, s2
    )
    if not ok:
        raise DomainError("optimal path left the cached fan; widen the field")
    if not (np.all(np.isfinite(th)) and np.all(np.isfinite(Z))):
        raise NumericalFailure("non-finite value on the optimal path")
    bound = (1.0 / s2 + cfl_bound(params, cost)) * params.T
    if Z[-1] > bound * (1.0 + 1e-12):
        raise NumericalFailure(f"Z_T = {Z[-1]} exceeds its a priori bound {bound}")
    u = Z + (params.T - times) / s2
    return StrategyPath(times, th, Z, u, "characteristics")


@dataclass(frozen=True, eq=False)
class RegularizedSequence:
    """Optimal paths for k + b x^2 along a decreasing sequence of b."""

    b_values: tuple
    paths: tuple
    gaps: tuple  # sup-norm distance between consecutive paths on the window
    window_end: float

    @property
    def limit(self) -> StrategyPath:
        return self.paths[-1]


def regularized_sequence(params: ModelParams, base_cost: Power, b_sequence, n_steps: int = 4096, window: float = 0.05) -> RegularizedSequence:
    b_values = tuple(float(b) for b in b_sequence)
    if any(b <= 0.0 for b in b_values) or any(b2 >= b1 for b1, b2 in zip(b_values, b_values[1:])):
        raise DomainError("b_sequence must be positive and strictly decreasing")
    paths = tuple(optimal_theta_path(params, Regularized(base_cost, b), n_steps) for b in b_values)
    t_end = params.T - window
    mask = paths[0].times <= t_end + 1e-12
    gaps = tuple(
        float(np.max(np.abs(p1.theta_sq[mask] - p0.theta_sq[mask]))) for p0, p1 in zip(paths, paths[1:])
    )
    return RegularizedSequence(b_values, paths, gaps, t_end)


def regularized_limit(params: ModelParams, base_cost: Power, b_sequence, n_steps: int = 4096, tol: float = 1e-4, window: float = 0.05) -> StrategyPath:
    """Limit of the regularized schedules as b -> 0.

    The sequence is accepted when the sup-norm gaps between successive
    schedules on ``[0, T - window]`` decrease and the last one is below
    ``tol``; otherwise :class:`NoConvergence` is raised with the gaps attached.
    """
    if not isinstance(base_cost, Power) or base_cost.p <= 2.0:
        raise UnsupportedVariantError("regularized_limit expects a Power base with p > 2")
    seq = regularized_sequence(params, base_cost, b_sequence, n_steps, window)
    decreasing = all(g1 < g0 for g0, g1 in zip(seq.gaps, seq.gaps[1:]))
    if not (decreasing and seq.gaps and seq.gaps[-1] < tol):
        raise NoConvergence(
            f"regularized schedules not Cauchy at tol={tol}: gaps={list(seq.gaps)}",
            {"b_values": seq.b_values, "gaps": seq.gaps, "sequence": seq},
        )
    lim = seq.limit
    return StrategyPath(lim.times, lim.theta_sq, lim.Z, lim.u, "characteristics-limit")
