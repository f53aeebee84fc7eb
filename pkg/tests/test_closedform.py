import math

import numpy as np
import pytest

from infoacq import DomainError, UnsupportedVariantError
from infoacq.closedform import (
    closed_form_path,
    closed_form_value,
    coefficient_P,
    feedback_controls,
    free_boundary,
    free_boundary_prime,
    switching_time,
    value_surface,
)
from infoacq.detcontrol import value_of_schedule
from infoacq.model import GaussKernel, ModelParams, Power, TruncatedLinear, kernel_F, kernel_H


def fd_partials(vs, t, x, y, z, e=1e-4):
    """Central finite differences of V in every argument."""
    V = vs(t, x, y, z)

    def d1(f, h):
        return (f(h) - f(-h)) / (2 * h)

    def d2(f, h):
        return (f(h) - 2 * f(0.0) + f(-h)) / (h * h)

    return {
        "V": V,
        "V_t": d1(lambda h: vs(t + h, x, y, z), e),
        "V_x": d1(lambda h: vs(t, x + h, y, z), e),
        "V_xx": d2(lambda h: vs(t, x + h, y, z), 1e-3),
        "V_y": d1(lambda h: vs(t, x, y + h, z), e),
        "V_yy": d2(lambda h: vs(t, x, y + h, z), 1e-3),
        "V_xy": (vs(t, x + e, y + e, z) - vs(t, x + e, y - e, z) - vs(t, x - e, y + e, z) + vs(t, x - e, y - e, z)) / (4 * e * e),
        "V_z": d1(lambda h: vs(t, x, y, z + h), e),
    }


def test_boundary_at_horizon(tl_params, tl_cost, params):
    assert free_boundary(tl_params, tl_cost, tl_params.T) == -1.0 / tl_params.sigma0**2
    assert free_boundary(params, TruncatedLinear(0.002, 1.0), params.T) == -1.0 / params.sigma0**2


def test_boundary_default_params(params):
    k = TruncatedLinear(0.002, 1.0)
    oracle = -1 / 0.192**2 - 1 / 0.121**2 + math.sqrt(1 / (2 * 0.002 * 0.192**2 * 2))
    assert free_boundary(params, k, 0.0) == pytest.approx(oracle, rel=1e-14)
    assert free_boundary(params, k, 0.0) == pytest.approx(-37.20, abs=0.01)


def test_boundary_slope_bound(tl_params, tl_cost):
    t = np.linspace(0.0, 1.0, 1000, endpoint=False)
    assert np.all(free_boundary_prime(tl_params, tl_cost, t) < 1.0 / tl_params.sigma**2)
    e = 1e-6
    fd = (free_boundary(tl_params, tl_cost, 0.5 + e) - free_boundary(tl_params, tl_cost, 0.5 - e)) / (2 * e)
    assert free_boundary_prime(tl_params, tl_cost, 0.5) == pytest.approx(fd, rel=1e-7)


def test_switching_time_against_bisection(tl_params, tl_cost):
    fb = switching_time(tl_params, tl_cost)
    kappa = 1 / 0.04 + 1.0

    def g(t):
        return t * kappa + (1 - t) / 0.04 + 1.0 - math.sqrt((1 - t) / (2e-4 * 0.04))

    lo, hi = 0.0, 1.0
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if g(mid) < 0 else (lo, mid)
    assert fb.has_acquisition
    assert fb.t_star == pytest.approx(0.5 * (lo + hi), abs=1e-11)
    assert fb.residual < 1e-10


def test_no_acquisition(params):
    fb = switching_time(params, TruncatedLinear(0.002, 1.0))
    assert (fb.t_star, fb.has_acquisition) == (0.0, False)
    path = closed_form_path(params, TruncatedLinear(0.002, 1.0), 64)
    assert np.all(path.theta_sq == 0.0)


def test_switching_time_continuity(tl_params):
    # c_crit solves delta(0) = 0
    s2, s02 = tl_params.sigma**2, tl_params.sigma0**2
    c_crit = 1.0 / (2 * s2 * tl_params.gamma * (1 / s2 + 1 / s02) ** 2)
    assert not switching_time(tl_params, TruncatedLinear(c_crit * 1.001, 1.0)).has_acquisition
    ts = [switching_time(tl_params, TruncatedLinear(c_crit * (1 - e), 1.0)).t_star for e in (1e-2, 1e-4, 1e-6)]
    assert ts[0] > ts[1] > ts[2] and ts[2] < 1e-6


def test_switching_time_monotone_in_c_and_gamma(tl_params):
    ts = [switching_time(tl_params, TruncatedLinear(c, 1.0)).t_star for c in np.geomspace(1e-5, 1e-2, 25)]
    assert np.all(np.diff(ts) <= 0.0)
    ts = [switching_time(tl_params.with_(gamma=g), TruncatedLinear(1e-4, 1.0)).t_star for g in np.geomspace(0.1, 50, 25)]
    assert np.all(np.diff(ts) <= 0.0)


def test_P_terminal(tl_params, tl_cost):
    assert coefficient_P(tl_params, tl_cost, tl_params.T, 0.0) == 0.0
    z = 3.0
    d = tl_params.sigma0**2 * z + 1
    expected = -0.5 * math.log(d) - z * tl_params.mu0**2 / (2 * d)
    assert coefficient_P(tl_params, tl_cost, tl_params.T, z) == pytest.approx(expected, rel=1e-13)


def test_P_continuous_across_boundary(tl_params, tl_cost):
    for t in (0.1, 0.5, 0.9):
        d = free_boundary(tl_params, tl_cost, t)
        jumps = [abs(coefficient_P(tl_params, tl_cost, t, d + e) - coefficient_P(tl_params, tl_cost, t, d - e)) for e in (1e-3, 1e-6)]
        assert jumps[1] < jumps[0] and jumps[1] < 1e-7


def test_P_domain(tl_params, tl_cost):
    with pytest.raises(DomainError):
        coefficient_P(tl_params, tl_cost, 0.5, -1.0)


def test_unsupported_cost(params):
    with pytest.raises(UnsupportedVariantError):
        switching_time(params, Power(0.002, 2))


def test_terminal_value_is_F_times_utility(tl_params, tl_cost):
    vs = value_surface(tl_params, tl_cost)
    gk = GaussKernel.from_params(tl_params)
    for x, y, z in [(0.0, 0.0, 0.0), (0.3, 2.0, 5.0), (-1.0, -4.0, 30.0)]:
        u = -math.exp(-tl_params.gamma * x) / tl_params.gamma
        assert vs(tl_params.T, x, y, z) == pytest.approx(kernel_F(gk, y, z) * u, rel=1e-13)


def _points(params, cost, rng, n, side):
    t = rng.uniform(0.05, 0.9, n)
    d = free_boundary(params, cost, t)
    z = rng.uniform(0.05, 0.95, n) * d if side == "left" else d + rng.uniform(0.5, 20.0, n)
    return t, rng.uniform(-1, 1, n), rng.uniform(-3, 3, n), z


def test_V_x_against_fd(tl_params, tl_cost, rng):
    vs = value_surface(tl_params, tl_cost)
    for side in ("left", "right"):
        t, x, y, z = _points(tl_params, tl_cost, rng, 50, side)
        e = 1e-5
        fd = (vs(t, x + e, y, z) - vs(t, x - e, y, z)) / (2 * e)
        assert np.max(np.abs(fd / vs.partials(t, x, y, z)["V_x"] - 1)) < 1e-6


@pytest.mark.parametrize("side", ["left", "right"])
def test_analytic_partials_match_fd(tl_params, tl_cost, rng, side):
    vs = value_surface(tl_params, tl_cost)
    t, x, y, z = _points(tl_params, tl_cost, rng, 20, side)
    ana = vs.partials(t, x, y, z)
    fd = fd_partials(vs, t, x, y, z)
    for key in ("V_t", "V_y", "V_z", "V_xy"):
        assert np.allclose(fd[key], ana[key], rtol=1e-6, atol=1e-8), key


@pytest.mark.parametrize("side", ["left", "right"])
def test_hjb_residual(tl_params, tl_cost, rng, side):
    vs = value_surface(tl_params, tl_cost)
    t, x, y, z = _points(tl_params, tl_cost, rng, 40, side)
    assert np.max(np.abs(vs.hjb_residual(t, x, y, z))) < 1e-9
    assert np.max(np.abs(vs.hjb_residual(t, x, y, z, partials=fd_partials(vs, t, x, y, z)))) < 1e-6
    regime = vs.regime(t, y, z)
    assert np.all(regime <= 1e-9) if side == "left" else np.all(regime >= -1e-9)


def test_smooth_fit(tl_params, tl_cost):
    vs = value_surface(tl_params, tl_cost)
    t = np.linspace(0.05, 0.95, 19)
    d = free_boundary(tl_params, tl_cost, t)
    for y in (-2.0, 0.0, 1.5):
        for eps in (1e-9, -1e-9):
            assert np.max(np.abs(vs.regime(t, y, d + eps))) < 1e-6


def test_regime_sign_dense(tl_params, tl_cost):
    vs = value_surface(tl_params, tl_cost)
    t = np.linspace(0.0, 0.99, 60)
    for ti in t:
        d = free_boundary(tl_params, tl_cost, ti)
        z = np.linspace(0.0, max(d, 0.0) + 50.0, 200)
        r = vs.regime(ti, 0.7, z)
        assert np.all(r[z < d] <= 1e-9)
        assert np.all(r[z >= d] >= -1e-9)


def test_feedback_controls(tl_params, tl_cost):
    fb = switching_time(tl_params, tl_cost)
    assert feedback_controls(tl_params, tl_cost, fb.t_star + 1e-3, 0.0, 0.0)[0] == 0.0
    assert feedback_controls(tl_params, tl_cost, 0.1, 0.0, 0.0)[0] == tl_cost.beta
    gk = GaussKernel.from_params(tl_params)
    s2g = tl_params.sigma**2 * tl_params.gamma
    assert feedback_controls(tl_params, tl_cost, 0.0, 0.0, 0.0)[1] == pytest.approx(tl_params.mu0 / s2g * kernel_H(gk, 0.0, 0.0), rel=1e-14)
    y, z = 3.0, 7.0
    post_mean = (tl_params.mu0 + tl_params.sigma0**2 * y) / (tl_params.sigma0**2 * z + 1)
    assert feedback_controls(tl_params, tl_cost, 1.0, y, z)[1] == pytest.approx(post_mean / s2g, rel=1e-14)


def test_trading_slope_coefficient(tl_params):
    s2, s02 = tl_params.sigma**2, tl_params.sigma0**2
    z = np.linspace(0.0, 100.0, 50)
    for t in (0.0, 0.5, 0.999):
        coef = (s02 * z + 1) / (s02 * z + s02 / s2 * (1 - t) + 1)
        assert np.all(coef <= 1.0) and np.all(np.diff(coef) > 0)


def test_path_and_value(tl_params, tl_cost):
    fb = switching_time(tl_params, tl_cost)
    path = closed_form_path(tl_params, tl_cost, 4096)
    assert len(path) == 4097 and path.solver_tag == "closedform"
    on = path.times <= fb.t_star
    assert np.all(path.theta_sq[on] == 1.0) and np.all(path.theta_sq[~on] == 0.0)
    # the bang-bang schedule's value from the separate deterministic formula
    fine = closed_form_path(tl_params, tl_cost, 65536)
    assert value_of_schedule(tl_params, tl_cost, fine) == pytest.approx(closed_form_value(tl_params, tl_cost), rel=1e-8)


def test_no_acquisition_value(params):
    k = TruncatedLinear(0.002, 1.0)
    path = closed_form_path(params, k, 1024)
    assert value_of_schedule(params, k, path) == pytest.approx(closed_form_value(params, k), rel=1e-10)
