import numpy as np
import pytest

from infoacq import DomainError, NumericalFailure
from infoacq.detcontrol import value_of_schedule
from infoacq.filtersim import SimConfig, batch_csv, compare_strategies, filter_consistency, simulate
from infoacq.paths import constant_path


@pytest.fixture(scope="module")
def zero(params):
    return constant_path(params.T, 512, 0.0, params.sigma**2, "zero")


def test_config_validation():
    with pytest.raises(DomainError):
        SimConfig(n_paths=3)
    with pytest.raises(DomainError):
        SimConfig(n_steps=8)
    with pytest.raises(DomainError):
        SimConfig(seed=-1)
    assert SimConfig(n_paths=3, antithetic=False).n_base == 3


def test_seed_determinism(params, quad, char_path):
    cfg = SimConfig(n_paths=2000, n_steps=64, seed=11)
    a = simulate(params, quad, char_path, cfg=cfg)
    b = simulate(params, quad, char_path, cfg=cfg)
    assert np.array_equal(a.utilities, b.utilities) and a.mean_utility == b.mean_utility
    c = simulate(params, quad, char_path, cfg=SimConfig(n_paths=2000, n_steps=64, seed=12))
    assert not np.array_equal(a.utilities, c.utilities)


@pytest.mark.parametrize("antithetic", [True, False])
def test_chunk_invariance(params, quad, char_path, antithetic):
    runs = [
        simulate(params, quad, char_path, cfg=SimConfig(n_paths=1000, n_steps=32, seed=5, antithetic=antithetic, chunk=ch))
        for ch in (500, 77, 1000)
    ]
    for r in runs[1:]:
        assert np.array_equal(r.utilities, runs[0].utilities)


def test_antithetic_pairs_mirror(params, zero):
    b = simulate(params, None, zero, cfg=SimConfig(n_paths=10, n_steps=16, seed=1), trace=True)
    mu_plus = b.trace["dR"][:, 0::2]
    mu_minus = b.trace["dR"][:, 1::2]
    dt = params.T / 16
    # mu and noise flip together, so dR + dR' = 2 mu0 dt
    assert np.allclose(mu_plus + mu_minus, 2 * params.mu0 * dt, atol=1e-15)


def test_antithetic_variance_ratio(params, zero):
    anti = simulate(params, None, zero, cfg=SimConfig(n_paths=40_000, seed=2))
    plain = simulate(params, None, zero, cfg=SimConfig(n_paths=40_000, seed=2, antithetic=False))
    assert 0.3 <= anti.std_error / plain.std_error <= 0.9


def test_self_financing_and_Z(params, quad, char_path):
    cfg = SimConfig(n_paths=64, n_steps=128, seed=3)
    b = simulate(params, quad, char_path, cfg=cfg, trace=True)
    tr = b.trace
    X_T = params.x0 + np.sum(tr["pi"] * tr["dR"], axis=0) - np.sum(tr["k_dt"])
    assert np.allclose(tr["X"][-1], X_T, rtol=0, atol=1e-12)
    dt = params.T / cfg.n_steps
    t = dt * np.arange(cfg.n_steps + 1)
    Z2 = t / params.sigma**2 + np.concatenate([[0.0], np.cumsum(tr["theta_sq"] * dt)])
    assert np.allclose(tr["Z"], Z2, rtol=0, atol=1e-12)
    assert np.all(np.diff(tr["Z"]) > 0) and tr["Z"][0] == 0.0
    assert np.all(tr["Y"][0] == 0.0)
    assert np.allclose(-np.exp(-params.gamma * tr["X"][-1]) / params.gamma, b.utilities, rtol=1e-14)


def test_posterior_states(params, char_path, zero):
    cfg = SimConfig(n_paths=100, n_steps=64, seed=4, antithetic=False)
    b = simulate(params, None, char_path, cfg=cfg, record_steps=[0, 32, 64])
    st = b.states
    assert st.post_var[0] == params.sigma0**2
    assert np.all(st.post_mean[0] == params.mu0)
    assert np.allclose(st.post_var, params.sigma0**2 / (params.sigma0**2 * st.Z + 1), rtol=1e-15)
    z = simulate(params, None, zero, cfg=cfg, record_steps=[64]).states
    s02, s2 = params.sigma0**2, params.sigma**2
    assert z.post_var[0] == pytest.approx(s02 / (s02 * params.T / s2 + 1), rel=1e-12)
    with pytest.raises(DomainError):
        simulate(params, None, zero, cfg=cfg, record_steps=[65])


def test_degenerate_prior(params, zero):
    p = params.with_(sigma0=1e-9)
    b = simulate(p, None, zero, cfg=SimConfig(n_paths=200, n_steps=32, seed=9), record_steps=[32], trace=True)
    assert np.allclose(b.states.post_mean, p.mu0, rtol=0, atol=1e-12)
    assert np.allclose(b.trace["pi"], p.mu0 / (p.sigma**2 * p.gamma), rtol=1e-12)


def test_common_random_numbers(params, quad, char_path):
    cfg = SimConfig(n_paths=2000, n_steps=64, seed=8)
    cmp = compare_strategies(params, quad, [char_path, char_path], cfg)
    assert cmp.diff[0, 1] == 0.0 and cmp.diff_se[0, 1] == 0.0 and cmp.z(0, 1) == 0.0


def test_value_small_batch(params, quad, char_path):
    b = simulate(params, quad, char_path, cfg=SimConfig(n_paths=20_000, seed=21))
    target = value_of_schedule(params, quad, char_path)
    assert abs(b.mean_utility - target) < 4 * b.std_error


def test_trading_rules(params, quad, char_path):
    cfg = SimConfig(n_paths=200, n_steps=32, seed=6)
    fb = simulate(params, quad, char_path, "feedback", cfg)
    my = simulate(params, quad, char_path, "merton-myopic", cfg)
    const = simulate(params, quad, char_path, 0.0, cfg)
    assert not np.array_equal(fb.utilities, my.utilities)
    # a zero position only pays the information bill
    spend = -np.exp(params.gamma * np.sum(quad.value(np.interp(np.arange(32) / 32, char_path.times, char_path.theta_sq))) / 32) / params.gamma
    assert np.allclose(const.utilities, spend, rtol=1e-12)
    with pytest.raises(DomainError):
        simulate(params, quad, char_path, "bogus", cfg)


def test_nonfinite_wealth_fails(params, zero):
    with pytest.raises(NumericalFailure):
        simulate(params, None, zero, 1e300, SimConfig(n_paths=100, n_steps=16, seed=0))


def test_filter_calibration_small(params, char_path):
    rep = filter_consistency(params, char_path, SimConfig(n_paths=20_000, seed=13))
    assert [c.t for c in rep.checks] == [0.25, 0.5, 1.0]
    assert rep.passed(3.0)


def test_batch_csv(params, zero):
    b = simulate(params, None, zero, cfg=SimConfig(n_paths=10, n_steps=16))
    lines = batch_csv([b]).splitlines()
    assert lines[0] == "strategy,n_paths,mean_utility,std_error,flagged"
    assert lines[1].startswith("zero,10,")
