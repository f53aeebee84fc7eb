"""Market parameters, information-cost family and Gaussian-prior kernels.

Everything here is a pure function of immutable inputs.  The smooth costs
are ``k(x) = c x^p + b x^2`` (``Power`` is the ``b = 0`` case); the
truncated-linear cost charges ``c x`` up to a precision cap ``beta^2`` and is
infinite beyond it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _costfn
from .errors import DomainError, UnsupportedVariantError

__all__ = [
    "ModelParams",
    "INFINITY",
    "TruncatedLinear",
    "Power",
    "Regularized",
    "GaussKernel",
    "cost_eval",
    "cost_conjugate",
    "cost_marginal_inverse",
    "kernel_H",
    "kernel_F",
    "kernel_G",
    "posterior_moments",
    "correlated_conjugate",
]


@dataclass(frozen=True)
class ModelParams:
    """Market and preference constants.

    Attributes
    ----------
    mu0, sigma0 : float
        Mean and standard deviation of the Gaussian prior on the drift.
    sigma : float
        Volatility of the risky asset.
    gamma : float
        Absolute risk aversion of the CARA investor.
    T : float
        Investment horizon.
    x0 : float
        Initial wealth.
    """

    mu0: float = 0.172
    sigma0: float = 0.121
    sigma: float = 0.192
    gamma: float = 2.0
    T: float = 1.0
    x0: float = 0.0

    def __post_init__(self):
        for name in ("sigma0", "sigma", "gamma", "T"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise DomainError(f"{name} must be positive and finite, got {v!r}")
        if not (math.isfinite(self.mu0) and math.isfinite(self.x0)):
            raise DomainError("mu0 and x0 must be finite")

    def with_(self, **changes) -> "ModelParams":
        return replace(self, **changes)

    @property
    def kernel(self) -> "GaussKernel":
        return GaussKernel.from_params(self)


# -- cost family --------------------------------------------------------------


class _Infinite:
    """Tagged +infinity returned by the truncated-linear cost past its cap.

    It deliberately supports no arithmetic, so any attempt to add or scale it
    fails loudly instead of leaking ``inf``/``nan`` into a computation.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITY"

    def __bool__(self):
        return True

    def __gt__(self, other):
        return not isinstance(other, _Infinite)

    def __ge__(self, other):
        return True

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return isinstance(other, _Infinite)

    def __reduce__(self):
        return (_Infinite, ())


INFINITY = _Infinite()


def _check_nonneg(x):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr >= 0.0)):
        raise DomainError(f"argument must be nonnegative, got {x!r}")
    return arr


@dataclass(frozen=True)
class TruncatedLinear:
    """k(x) = c x on [0, beta^2], +infinity beyond."""

    c: float
    beta: float

    def __post_init__(self):
        if not (self.c > 0.0 and self.beta > 0.0):
            raise DomainError("TruncatedLinear needs c > 0 and beta > 0")

    smooth = False

    def value(self, x):
        _check_nonneg(x)
        if x > self.beta**2:
            return INFINITY
        return self.c * float(x)


class _SmoothCost:
    """Shared behaviour of the c x^p + b x^2 family."""

    smooth = True

    @property
    def coeffs(self):
        raise NotImplementedError

    @property
    def strictly_convex_at_zero(self) -> bool:
        c, p, b = self.coeffs
        return p == 2.0 or b > 0.0

    def value(self, x):
        _check_nonneg(x)
        return _as_out(_costfn.k(*self.coeffs, x))

    def deriv(self, x):
        _check_nonneg(x)
        return _as_out(_costfn.dk(*self.coeffs, x))

    def deriv2(self, x):
        _check_nonneg(x)
        return _as_out(_costfn.d2k(*self.coeffs, x))

    def marginal_inverse(self, y):
        _check_nonneg(y)
        return _as_out(_costfn.marginal_inverse(*self.coeffs, y))

    def conjugate(self, y):
        _check_nonneg(y)
        return _as_out(_costfn.conjugate(*self.coeffs, y))

    def tilde_conjugate(self, gamma, q):
        return _as_out(_costfn.tilde_conjugate(*self.coeffs, gamma, q))

    def tilde_conjugate_prime(self, gamma, q):
        return _as_out(_costfn.tilde_conjugate_prime(*self.coeffs, gamma, q))


def _as_out(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


@dataclass(frozen=True)
class Power(_SmoothCost):
    """k(x) = c x^p with p >= 2."""

    c: float
    p: float = 2.0

    def __post_init__(self):
        if not self.c > 0.0:
            raise DomainError("Power cost needs c > 0")
        if not self.p >= 2.0:
            raise DomainError("Power cost needs p >= 2")

    @property
    def coeffs(self):
        return (float(self.c), float(self.p), 0.0)


@dataclass(frozen=True)
class Regularized(_SmoothCost):
    """k(x) = base(x) + b x^2."""

    base: Power
    b: float = 0.0

    def __post_init__(self):
        if not isinstance(self.base, Power):
            raise UnsupportedVariantError("Regularized wraps a Power cost")
        if not self.b >= 0.0:
            raise DomainError("regularization weight must be >= 0")

    @property
    def coeffs(self):
        return (float(self.base.c), float(self.base.p), float(self.b))


def _require_smooth(k, what):
    if not getattr(k, "smooth", False):
        raise UnsupportedVariantError(f"{what} is undefined for {type(k).__name__}")


def cost_eval(k, x):
    """Return k(x), or ``INFINITY`` for a truncated cost past its cap."""
    return k.value(x)


def cost_conjugate(k, y):
    """Legendre-Fenchel transform k*(y) = sup_{x>=0} {x y - k(x)}."""
    _require_smooth(k, "cost_conjugate")
    return k.conjugate(y)


def cost_marginal_inverse(k, y):
    """(k')^{-1}(y) for a smooth cost."""
    _require_smooth(k, "cost_marginal_inverse")
    return k.marginal_inverse(y)


# -- Gaussian prior kernels ---------------------------------------------------


@dataclass(frozen=True)
class GaussKernel:
    """Cached powers of the volatilities plus the constants the kernels need."""

    mu0: float
    T: float
    sigma2: float
    sigma02: float
    sigma04: float = field(repr=False)

    @classmethod
    def from_params(cls, params: ModelParams) -> "GaussKernel":
        s02 = params.sigma0**2
        return cls(params.mu0, params.T, params.sigma**2, s02, s02 * s02)

    def info_rate(self, u):
        """f(u) = (sigma0^2 / 2 sigma^2) / (sigma0^2 u + 1)."""
        return self.sigma02 / (2.0 * self.sigma2) / (self.sigma02 * np.asarray(u) + 1.0)

    def info_rate_prime(self, u):
        d = self.sigma02 * np.asarray(u) + 1.0
        return -self.sigma04 / (2.0 * self.sigma2) / (d * d)


def kernel_H(gk: GaussKernel, t, z):
    """H(t, z) = 1 / (sigma0^2 z + sigma0^2 (T - t) / sigma^2 + 1)."""
    den = gk.sigma02 * np.asarray(z, dtype=float) + gk.sigma02 * (gk.T - np.asarray(t, dtype=float)) / gk.sigma2 + 1.0
    if np.any(den <= 0.0):
        raise DomainError("kernel_H denominator must be positive")
    return _as_out(1.0 / den)


def kernel_F(gk: GaussKernel, y, z):
    """E[exp(y mu - z mu^2 / 2)] for mu ~ N(mu0, sigma0^2)."""
    y = np.asarray(y, dtype=float)
    d = np.asarray(z, dtype=float) * gk.sigma02 + 1.0
    if np.any(d <= 0.0):
        raise DomainError("kernel_F requires z > -1/sigma0^2")
    expo = (y * y * gk.sigma02 + 2.0 * y * gk.mu0 - np.asarray(z) * gk.mu0**2) / (2.0 * d)
    return _as_out(np.exp(expo) / np.sqrt(d))


def kernel_G(gk: GaussKernel, y, z):
    """G = F_y / F, the posterior mean as a function of the filtered states."""
    return posterior_moments(gk, y, z)[0]


def posterior_moments(gk: GaussKernel, y, z):
    """Posterior mean and variance of the drift given (Y, Z) = (y, z)."""
    d = gk.sigma02 * np.asarray(z, dtype=float) + 1.0
    mean = (gk.mu0 + gk.sigma02 * np.asarray(y, dtype=float)) / d
    return _as_out(mean), _as_out(gk.sigma02 / d)


def correlated_conjugate(k, rho, sigma, x, tol=1e-12):
    """Conjugate for correlated asset/signal noise.

    Maximises ``(theta - rho/sigma)^2 x / (1 - rho^2) - k(theta^2)`` over theta.

    Returns
    -------
    value : float
        The supremum.
    theta_star : float
        The maximiser; nonpositive for ``rho > 0`` (mirrored for ``rho < 0``).
    """
    _require_smooth(k, "correlated_conjugate")
    if x < 0.0:
        raise DomainError("correlated_conjugate needs x >= 0")
    if not (-1.0 < rho < 1.0) or not sigma > 0.0:
        raise DomainError("need |rho| < 1 and sigma > 0")
    if rho < 0.0:
        value, th = correlated_conjugate(k, -rho, sigma, x, tol)
        return value, -th
    scale = x / (1.0 - rho * rho)
    shift = rho / sigma

    def objective(th):
        return (th - shift) ** 2 * scale - float(k.value(th * th))

    if x == 0.0:
        return 0.0, 0.0
    if rho == 0.0:
        th = -math.sqrt(float(k.marginal_inverse(scale)))
        return objective(th), th

    def foc(th):
        return (th - shift) * scale - th * float(k.deriv(th * th))

    # foc(0) < 0 and foc -> +inf as theta -> -inf with a single sign change
    hi, lo = 0.0, -1.0
    while foc(lo) <= 0.0:
        hi, lo = lo, 2.0 * lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if foc(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    th = 0.5 * (lo + hi)
    return objective(th), th
