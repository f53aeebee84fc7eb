import math

import numpy as np
import pytest

from infoacq import DomainError, NoConvergence, UnsupportedVariantError
from infoacq.closedform import closed_form_value
from infoacq.detcontrol import (
    DetControlProblem,
    euler_lagrange_residual,
    gradient,
    objective,
    solve,
    value_from_gamma,
    value_of_schedule,
)
from infoacq.model import Power, TruncatedLinear
from infoacq.paths import constant_path, from_theta_sq


@pytest.fixture(scope="module")
def problem(params, quad):
    return DetControlProblem(params, quad, 2048)


@pytest.fixture(scope="module")
def det_path(problem):
    return solve(problem)


def test_objective_zero_schedule(params, problem):
    J = objective(problem, np.zeros(problem.n))
    s2, s02 = params.sigma**2, params.sigma0**2
    oracle = (s02 * params.T / (2 * s2)) / (s02 * params.T / s2 + 1) - params.mu0**2 / (2 * s02)
    assert J == pytest.approx(oracle, abs=1e-14)
    assert J == pytest.approx(-0.86827, abs=1e-4)


def test_objective_convex(problem, rng):
    for _ in range(20):
        a, b = rng.uniform(0, 0.5, (2, problem.n))
        mid = objective(problem, 0.5 * (a + b))
        assert mid <= 0.5 * (objective(problem, a) + objective(problem, b)) + 1e-14


def test_late_mass_costs_more(problem, rng):
    a = rng.uniform(0, 0.5, problem.n)
    base = objective(problem, a)
    for _ in range(20):
        i, j = sorted(rng.choice(problem.n, 2, replace=False))
        if a[i] < a[j]:
            i, j = j, i
        if i > j:
            continue
        swapped = a.copy()
        swapped[i], swapped[j] = a[j], a[i]
        assert objective(problem, swapped) >= base


def test_objective_errors(problem):
    with pytest.raises(DomainError):
        objective(problem, -np.ones(problem.n))
    with pytest.raises(DomainError):
        objective(problem, np.zeros(3))


def test_problem_validation(params):
    with pytest.raises(UnsupportedVariantError):
        DetControlProblem(params, TruncatedLinear(0.002, 1.0))
    with pytest.raises(DomainError):
        DetControlProblem(params, Power(0.002, 2), 4)


def test_gradient_matches_fd(params, quad, rng):
    prob = DetControlProblem(params, quad, 64)
    a = rng.uniform(0, 0.4, 64)
    g = gradient(prob, a)
    e = 1e-3
    for i in (0, 17, 63):
        ap, am = a.copy(), a.copy()
        ap[i] += e
        am[i] -= e
        fd = (objective(prob, ap) - objective(prob, am)) / (2 * e)
        assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-12)


def test_solve_properties(problem, det_path, char_path):
    assert det_path.solver_tag == "detcontrol" and len(det_path) == problem.n + 1
    assert np.all(np.diff(det_path.theta_sq) <= 0.0)
    assert np.max(np.abs(det_path.theta_sq - char_path.theta_sq_at(det_path.times))) < 1e-3


def test_final_cell_small(params, quad):
    path = solve(DetControlProblem(params, quad, 512))
    assert path.theta_sq[-1] < 1e-3


def test_solve_optimal_against_random(problem, det_path, rng):
    best = objective(problem, det_path.theta_sq[1:])
    for _ in range(100):
        a = np.clip(det_path.theta_sq[1:] + rng.normal(0, 0.01, problem.n), 0, None)
        assert objective(problem, a) > best + 1e-9 or np.max(np.abs(a - det_path.theta_sq[1:])) < 1e-9


def test_mu0_invariance(params, quad, det_path):
    for mu0 in (0.0, 1.0):
        assert solve(DetControlProblem(params.with_(mu0=mu0), quad, 2048)).digest == det_path.digest


def test_iteration_cap(problem):
    with pytest.raises(NoConvergence) as info:
        solve(problem, max_iter=2)
    assert "residual" in info.value.diagnostics


def test_euler_lagrange(params, problem, char_path, det_path):
    assert euler_lagrange_residual(problem, char_path) < 1e-4
    assert euler_lagrange_residual(problem, det_path) < 1e-4


def test_euler_lagrange_constant_path(params, problem):
    path = constant_path(params.T, 256, 0.2, params.sigma**2)
    s02, s2 = params.sigma0**2, params.sigma**2
    rhs = params.sigma0**4 / (2 * s2) / (s02 * path.u + 1) ** 2
    mask = path.times <= params.T - 0.05 + 1e-12
    assert euler_lagrange_residual(problem, path) == pytest.approx(np.max(rhs[mask]), rel=1e-12)


def test_euler_lagrange_second_order(params, problem):
    # a smooth non-solution: the finite-difference error must shrink like dt^2
    A, lam = 0.3, 3.0
    errs = []
    for n in (128, 256, 512):
        t = np.linspace(0.0, params.T, n + 1)
        path = from_theta_sq(t, A * np.exp(-lam * t), params.sigma**2, "probe")
        exact_dadt = -lam * A * np.exp(-lam * t)
        rhs = params.sigma0**4 / (2 * params.sigma**2) / (params.sigma0**2 * path.u + 1) ** 2
        exact = -params.gamma * 0.004 * exact_dadt - rhs
        mask = t <= params.T - 0.05 + 1e-12
        errs.append(abs(euler_lagrange_residual(problem, path) - np.max(np.abs(exact[mask]))))
    assert 3.0 < errs[0] / errs[1] < 5.0 and 3.0 < errs[1] / errs[2] < 5.0


def test_zero_schedule_matches_closed_form(params):
    # the no-acquisition value has an independent closed form
    k = TruncatedLinear(0.002, 1.0)
    zero = constant_path(params.T, 512, 0.0, params.sigma**2)
    v = value_of_schedule(params, Power(0.002, 2), zero)
    assert v == pytest.approx(closed_form_value(params, k), rel=1e-12)
    s2, s02, T = params.sigma**2, params.sigma0**2, params.T
    expo = 0.5 * math.log(s2 / (s02 * T + s2)) - params.mu0**2 * T / (2 * (s02 * T + s2)) + s02 * T / (2 * s2) / (s02 * T / s2 + 1)
    assert v == pytest.approx(-math.exp(expo) / params.gamma, rel=1e-13)


def test_optimum_beats_perturbations(params, quad, char_path, rng):
    best = value_of_schedule(params, quad, char_path)
    for _ in range(20):
        bump = rng.uniform(-0.5, 0.5) * np.exp(-rng.uniform(0, 5) * char_path.times)
        th2 = np.clip(char_path.theta_sq * (1 + bump), 0, None)
        assert value_of_schedule(params, quad, from_theta_sq(char_path.times, th2, params.sigma**2, "p")) <= best


def test_cost_term_factorises(params, quad, char_path):
    v = value_of_schedule(params, quad, char_path)
    v0 = value_of_schedule(params, Power(1e-300, 2), char_path)
    integral = np.trapezoid(quad.value(char_path.theta_sq), char_path.times)
    assert v0 == pytest.approx(v * math.exp(-params.gamma * integral), rel=1e-12)


def test_wealth_shift(params, quad, char_path):
    v = value_of_schedule(params, quad, char_path)
    assert value_of_schedule(params, quad, char_path, x0=0.5) == pytest.approx(v * math.exp(-params.gamma * 0.5), rel=1e-14)


def test_value_identity(params, quad, char_path, field):
    v = value_of_schedule(params, quad, char_path)
    g0 = field.gamma(0.0, params.T / params.sigma**2)
    assert abs(value_from_gamma(params, g0) / v - 1) < 1e-4
