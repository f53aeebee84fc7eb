import numpy as np
import pytest

from infoacq.model import ModelParams, Power, TruncatedLinear


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def quad():
    return Power(0.002, 2)


@pytest.fixture(scope="session")
def tl_params():
    # a parameter set where buying information pays off early on
    return ModelParams(mu0=0.172, sigma0=1.0, sigma=0.2, gamma=1.0, T=1.0)


@pytest.fixture(scope="session")
def tl_cost():
    return TruncatedLinear(1e-4, 1.0)


@pytest.fixture(scope="session")
def char_path(params, quad):
    from infoacq.characteristics import optimal_theta_path

    return optimal_theta_path(params, quad)


@pytest.fixture(scope="session")
def field(params, quad):
    from infoacq.characteristics import gamma_field

    return gamma_field(params, quad)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
