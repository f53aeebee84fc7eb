"""Deterministic control oracle for the optimal schedule.

With the trading rule fixed at its optimum, choosing the schedule reduces to

    minimise  int gamma k(a) dt + int f(u) dt - mu0^2 / (2 sigma0^2),
    du = a dt,  u(0) = T / sigma^2,  a = theta^2 >= 0.

The problem is discretised with left-endpoint cells (so it stays exactly
convex) and solved by projected gradient descent with Barzilai-Borwein steps.
The gradient comes from the adjoint recursion of the state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .characteristics import cfl_bound
from .errors import DomainError, NoConvergence, UnsupportedVariantError
from .model import GaussKernel, ModelParams, TruncatedLinear
from .paths import StrategyPath, from_theta_sq

__all__ = [
    "DetControlProblem",
    "objective",
    "gradient",
    "solve",
    "euler_lagrange_residual",
    "value_of_schedule",
    "value_from_gamma",
]


@dataclass(frozen=True)
class DetControlProblem:
    params: ModelParams
    cost: object
    n: int = 2048

    def __post_init__(self):
        if self.n < 16:
            raise DomainError("need at least 16 cells")
        if not getattr(self.cost, "smooth", False):
            raise UnsupportedVariantError("the deterministic problem needs a smooth cost")

    @property
    def dt(self) -> float:
        return self.params.T / self.n

    @property
    def u_start(self) -> float:
        return self.params.T / self.params.sigma**2

    def states(self, a) -> np.ndarray:
        """u_0, ..., u_n from the cell recursion u_{i+1} = u_i + a_i dt."""
        return self.u_start + np.concatenate([[0.0], np.cumsum(np.asarray(a) * self.dt)])


def _check(problem, a):
    a = np.asarray(a, dtype=float)
    if a.shape != (problem.n,):
        raise DomainError(f"decision vector must have length {problem.n}")
    if np.any(a < 0.0):
        raise DomainError("decision vector must be nonnegative")
    return a


def _shifted_objective(problem, a):
    # objective without the constant -mu0^2 / (2 sigma0^2); never reads mu0
    gk = GaussKernel.from_params(problem.params)
    u = problem.states(a)[:-1]
    k = np.asarray(problem.cost.value(a), dtype=float)
    return problem.dt * (problem.params.gamma * np.sum(k) + np.sum(gk.info_rate(u)))


def objective(problem: DetControlProblem, a) -> float:
    """Discretised objective, including the constant -mu0^2 / (2 sigma0^2)."""
    a = _check(problem, a)
    p = problem.params
    return float(_shifted_objective(problem, a) - p.mu0**2 / (2.0 * p.sigma0**2))


def gradient(problem: DetControlProblem, a) -> np.ndarray:
    """dJ/da_i = dt (gamma k'(a_i) + sum_{j>i} f'(u_j) dt)."""
    a = np.asarray(a, dtype=float)
    gk = GaussKernel.from_params(problem.params)
    u = problem.states(a)[:-1]
    fp = gk.info_rate_prime(u) * problem.dt
    # adjoint: lam_i = sum_{j > i} f'(u_j) dt
    tail = np.concatenate([np.cumsum(fp[::-1])[::-1][1:], [0.0]])
    return problem.dt * (problem.params.gamma * np.asarray(problem.cost.deriv(a)) + tail)


def solve(problem: DetControlProblem, tol: float = 1e-10, max_iter: int = 100_000, a_init=None) -> StrategyPath:
    """Projected gradient with Barzilai-Borwein steps on [0, A_cap]^n.

    Stops when the projected gradient, scaled by ``1/dt``, is below ``tol``
    in sup norm.  The emitted path puts cell ``i``'s rate on node ``i + 1``
    (the cell's marginal condition uses the information from ``t_{i+1}`` on)
    and the node-0 rate from the same condition with the full tail.
    """
    p = problem.params
    cost = problem.cost
    cap = 2.0 * cfl_bound(p, cost)
    n, dt = problem.n, problem.dt
    a = np.zeros(n) if a_init is None else np.clip(np.asarray(a_init, float), 0.0, cap)

    def proj_grad(a, g):
        # zero out components that push against an active bound
        pg = g.copy()
        pg[(a <= 0.0) & (g > 0.0)] = 0.0
        pg[(a >= cap) & (g < 0.0)] = 0.0
        return pg

    g = gradient(problem, a)
    step = 1.0 / (dt * p.gamma * float(np.max(cost.deriv2(np.full(1, cap)))) + dt)
    J = _shifted_objective(problem, a)
    it = 0
    for it in range(1, max_iter + 1):
        pg = proj_grad(a, g)
        if np.max(np.abs(pg)) / dt < tol:
            break
        # nonmonotone-safe BB step with a backtracking guard on the objective
        while True:
            a_new = np.clip(a - step * g, 0.0, cap)
            J_new = _shifted_objective(problem, a_new)
            if J_new <= J + 1e-15 * max(1.0, abs(J)) or step < 1e-300:
                break
            step *= 0.5
        g_new = gradient(problem, a_new)
        s = a_new - a
        y = g_new - g
        sy = float(s @ y)
        step = float(s @ s) / sy if sy > 0.0 else step * 2.0
        a, g, J = a_new, g_new, J_new
    else:
        raise NoConvergence(
            f"projected gradient did not reach {tol} in {max_iter} iterations",
            {"residual": float(np.max(np.abs(proj_grad(a, g))) / dt)},
        )
    return _path_from_cells(problem, a)


def _path_from_cells(problem, a):
    p = problem.params
    gk = GaussKernel.from_params(p)
    u = problem.states(a)
    fp = gk.info_rate_prime(u[:-1]) * problem.dt
    head = float(cost_inverse(problem.cost, -np.sum(fp) / p.gamma))
    theta_sq = np.concatenate([[head], a])
    times = p.T * np.arange(problem.n + 1) / problem.n
    Z = u - (p.T - times) / p.sigma**2
    return StrategyPath(times, theta_sq, Z, u, "detcontrol")


def cost_inverse(cost, y):
    return cost.marginal_inverse(max(float(y), 0.0))


def euler_lagrange_residual(problem: DetControlProblem, path: StrategyPath, window: float = 0.05) -> float:
    """max |gamma k''(a) da/dt + (sigma0^4 / 2 sigma^2) / (sigma0^2 u + 1)^2| on [0, T - window].

    ``da/dt`` is taken by central differences on the path grid (one-sided at
    the left end).
    """
    p = problem.params
    t = np.asarray(path.times)
    a = np.asarray(path.theta_sq)
    dadt = np.gradient(a, t, edge_order=2)
    u = np.asarray(path.u)
    gk = GaussKernel.from_params(p)
    rhs = gk.sigma04 / (2.0 * gk.sigma2) / (gk.sigma02 * u + 1.0) ** 2
    lhs = -p.gamma * np.asarray(problem.cost.deriv2(np.maximum(a, 0.0))) * dadt
    mask = t <= p.T - window + 1e-12
    return float(np.max(np.abs(lhs[mask] - rhs[mask])))


def _cost_on_path(cost, theta_sq):
    theta_sq = np.asarray(theta_sq, dtype=float)
    if isinstance(cost, TruncatedLinear):
        if np.any(theta_sq > cost.beta**2 * (1.0 + 1e-12)):
            raise DomainError("schedule exceeds the precision cap")
        return cost.c * theta_sq
    return np.asarray(cost.value(np.maximum(theta_sq, 0.0)))


def value_of_schedule(params: ModelParams, cost, path: StrategyPath, x0: float | None = None) -> float:
    """Expected CARA utility of following ``path`` with the optimal trading rule.

    V = -(1/gamma) exp(-gamma x0) exp{gamma int k(theta^2) dt
        + (1/2) log(sigma^2 / (sigma0^2 T + sigma^2))
        - mu0^2 T / (2 (sigma0^2 T + sigma^2)) + int f(u_t) dt},

    with ``u`` rebuilt from ``theta^2`` and both integrals by the trapezoid rule.
    """
    x0 = params.x0 if x0 is None else x0
    gk = GaussKernel.from_params(params)
    rebuilt = from_theta_sq(path.times, path.theta_sq, gk.sigma2, path.solver_tag)
    t = rebuilt.times
    k = _cost_on_path(cost, rebuilt.theta_sq)
    integral = np.trapezoid(params.gamma * k + gk.info_rate(rebuilt.u), t)
    big = gk.sigma02 * params.T + gk.sigma2
    expo = integral + 0.5 * np.log(gk.sigma2 / big) - params.mu0**2 * params.T / (2.0 * big)
    return float(-np.exp(-params.gamma * x0 + expo) / params.gamma)


def value_from_gamma(params: ModelParams, gamma_0: float, x0: float | None = None) -> float:
    """V(0, x0, 0, 0) rebuilt from Gamma(0, T / sigma^2)."""
    x0 = params.x0 if x0 is None else x0
    s2, s02 = params.sigma**2, params.sigma0**2
    H = 1.0 / (s02 * params.T / s2 + 1.0)
    expo = gamma_0 + 0.5 * H * params.mu0**2 / s02
    return float(-np.sqrt(H) * np.exp(-params.gamma * x0 + expo) / params.gamma)
