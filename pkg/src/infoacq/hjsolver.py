"""Explicit upwind finite differences for the Hamilton-Jacobi equation.

Marching backward from the terminal level, each earlier level is

    G[n, j] = G[n+1, j] + tau * (f(u_j) + k~*((G[n+1, j+1] - G[n+1, j]) / h)),

which is monotone as long as ``tau * (k')^{-1}(.) / h <= 1``.  The march is
run on ``Gamma + mu0^2 / (2 sigma0^2)`` (zero terminal data) so the computed
slopes, and every schedule derived from them, are bitwise independent of
``mu0``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .characteristics import _smooth_args, cfl_bound, u_cap
from .errors import ConfigurationError, DomainCapError, NumericalFailure
from .model import GaussKernel, ModelParams
from .paths import StrategyPath, fmt

__all__ = ["GridSolution", "cfl_ratio", "solve_grid", "theta_from_grid", "default_tau", "upwind_level"]


def cfl_ratio(params: ModelParams, cost) -> float:
    """Smallest admissible h / tau: (k')^{-1}(sigma0^4 T / (2 sigma^2 gamma))."""
    _smooth_args(params, cost)
    return cfl_bound(params, cost)


def default_tau(params: ModelParams, cost, h: float) -> float:
    return 0.95 * h / cfl_ratio(params, cost)


@dataclass(frozen=True, eq=False)
class GridSolution:
    """Gamma on a uniform (t, u) grid.

    ``values[n, j]`` is Gamma(t_grid[n], u_grid[j]); ``shifted`` holds the
    same numbers without the terminal constant ``-mu0^2 / (2 sigma0^2)``.
    """

    t_grid: np.ndarray
    u_grid: np.ndarray
    shifted: np.ndarray
    terminal: float
    tau: float
    h: float
    u_max: float
    params: ModelParams
    cost: object

    @property
    def values(self) -> np.ndarray:
        return self.shifted + self.terminal

    def forward_differences(self) -> np.ndarray:
        """(Gamma[:, j+1] - Gamma[:, j]) / h, shape (n_t, n_u - 1)."""
        return np.diff(self.shifted, axis=1) / self.h

    def gamma_u(self) -> np.ndarray:
        """Forward differences, closed in the last column by the boundary slope."""
        out = np.empty_like(self.shifted)
        out[:, :-1] = self.forward_differences()
        gk = GaussKernel.from_params(self.params)
        out[:, -1] = gk.info_rate_prime(self.u_max) * (self.params.T - self.t_grid)
        return out

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "u", "gamma", "gamma_u"))
        vals = self.values
        gu = self.gamma_u()
        for n, t in enumerate(self.t_grid):
            for j, u in enumerate(self.u_grid):
                w.writerow((fmt(t), fmt(u), fmt(vals[n, j]), fmt(gu[n, j])))
        text = buf.getvalue()
        if dest is not None:
            with open(dest, "w", newline="") as fh:
                fh.write(text)
        return text


def _closure(params: ModelParams, u_max: float, t_grid) -> np.ndarray:
    # zero-acquisition solution at the cap, without the terminal constant
    gk = GaussKernel.from_params(params)
    return float(gk.info_rate(u_max)) * (params.T - np.asarray(t_grid))


def upwind_level(params: ModelParams, cost, later, u_grid, tau: float, h: float, closure: float):
    """One explicit backward step of the scheme (exposed for property tests)."""
    c, p, b, gamma, s2, s02 = _smooth_args(params, cost)
    return _kernels.upwind_step(np.asarray(later, float), np.asarray(u_grid, float), tau, h, c, p, b, gamma, s2, s02, closure)


def solve_grid(params: ModelParams, cost, h: float = 0.005, tau: float | None = None, u_max: float | None = None) -> GridSolution:
    """March the scheme from t = T down to t = 0.

    ``tau`` is shrunk to ``T / ceil(T / tau)`` so the grid lands on both ends.
    Raises :class:`ConfigurationError` when ``h / tau`` is below the CFL ratio.
    """
    c, p, b, gamma, s2, s02 = _smooth_args(params, cost)
    ratio = cfl_ratio(params, cost)
    if not h > 0.0:
        raise ConfigurationError("h must be positive")
    tau = default_tau(params, cost, h) if tau is None else float(tau)
    if not tau > 0.0:
        raise ConfigurationError("tau must be positive")
    if h / tau < ratio:
        raise ConfigurationError(f"CFL violated: h/tau = {h / tau:.6g} < {ratio:.6g}")
    floor_cap = 2.0 * params.T / s2 + params.T * ratio
    u_max = u_cap(params, cost) if u_max is None else float(u_max)
    if u_max < floor_cap:
        raise ConfigurationError(f"u_max = {u_max} is below the reachable range {floor_cap}")
    n_t = int(math.ceil(params.T / tau - 1e-12))
    tau_eff = params.T / n_t
    J = int(math.ceil(u_max / h - 1e-12)) + 1
    u_grid = h * np.arange(J)
    t_grid = params.T * np.arange(n_t + 1) / n_t
    u_top = float(u_grid[-1])
    closure = _closure(params, u_top, t_grid)
    V, ok = _kernels.upwind_march(u_grid, n_t, tau_eff, h, c, p, b, gamma, s2, s02, closure)
    if not ok or not np.all(np.isfinite(V)):
        raise NumericalFailure("non-finite value in the upwind march")
    terminal = -params.mu0**2 / (2.0 * params.sigma0**2)
    return GridSolution(t_grid, u_grid, V, terminal, tau_eff, h, u_top, params, cost)


def theta_from_grid(grid: GridSolution, params: ModelParams | None = None, cost=None) -> StrategyPath:
    """Euler-integrate du = theta^2 dt on the grid's time nodes.

    ``theta^2 = (k')^{-1}(-D / gamma)`` where ``D`` is the forward-difference
    slope, placed at cell midpoints ``u_j + h / 2`` and interpolated
    bilinearly.
    """
    params = params or grid.params
    cost = cost or grid.cost
    c, p, b, gamma, s2, _ = _smooth_args(params, cost)
    D = grid.forward_differences()
    mids = grid.u_grid[:-1] + 0.5 * grid.h
    n_t = grid.t_grid.size - 1
    th = np.empty(n_t + 1)
    u = np.empty(n_t + 1)
    u[0] = params.T / s2
    for n in range(n_t + 1):
        un = u[n]
        if not (mids[0] <= un <= mids[-1]):
            raise DomainCapError(f"path left the u-grid at t={grid.t_grid[n]}, u={un}")
        # time nodes coincide with grid levels, so the time weight is zero
        slope = float(np.interp(un, mids, D[n]))
        y = -slope / gamma if slope < 0.0 else 0.0
        th[n] = _kernels.kinv(c, p, b, y)
        if n < n_t:
            u[n + 1] = un + grid.tau * th[n]
    Z = u - (params.T - grid.t_grid) / s2
    return StrategyPath(grid.t_grid.copy(), th, Z, u, "upwind")
