"""Vectorised evaluation of the smooth cost family k(x) = c x^p + b x^2.

Every routine takes the coefficient triple ``(c, p, b)`` explicitly so the
same formulas can back both the cost classes and the array kernels.
"""

import numpy as np

ROOT_TOL = 1e-12


def k(c, p, b, x):
    x = np.asarray(x, dtype=float)
    return c * x**p + b * x * x


def dk(c, p, b, x):
    x = np.asarray(x, dtype=float)
    return c * p * x ** (p - 1.0) + 2.0 * b * x


def d2k(c, p, b, x):
    x = np.asarray(x, dtype=float)
    return c * p * (p - 1.0) * x ** (p - 2.0) + 2.0 * b


def _bisect_inverse(c, p, b, y):
    # brackets grown geometrically from [0, 1], then plain bisection
    y = np.atleast_1d(np.asarray(y, dtype=float))
    lo = np.zeros_like(y)
    hi = np.ones_like(y)
    grow = dk(c, p, b, hi) < y
    while np.any(grow):
        lo = np.where(grow, hi, lo)
        hi = np.where(grow, 2.0 * hi, hi)
        grow = dk(c, p, b, hi) < y
    while np.any(hi - lo > ROOT_TOL):
        mid = 0.5 * (lo + hi)
        # stop once the interval can no longer shrink in floating point
        if np.all((mid == lo) | (mid == hi)):
            break
        below = dk(c, p, b, mid) < y
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return 0.5 * (lo + hi)


def marginal_inverse(c, p, b, y):
    """Solve k'(x) = y for x >= 0."""
    y = np.asarray(y, dtype=float)
    if b == 0.0:
        return (y / (c * p)) ** (1.0 / (p - 1.0))
    if p == 2.0:
        return y / (2.0 * (c + b))
    if p == 3.0:
        # 3c x^2 + 2b x = y, written without cancellation
        return 2.0 * y / (2.0 * b + np.sqrt(4.0 * b * b + 12.0 * c * y))
    out = _bisect_inverse(c, p, b, y)
    return out.reshape(y.shape) if y.ndim else float(out[0])


def conjugate(c, p, b, y):
    """k*(y) = sup_x {x y - k(x)} attained at x = (k')^{-1}(y)."""
    y = np.asarray(y, dtype=float)
    if p == 2.0:
        return y * y / (4.0 * (c + b))
    x = marginal_inverse(c, p, b, y)
    return x * y - k(c, p, b, x)


def tilde_conjugate(c, p, b, gamma, q):
    """k~*(q) = -gamma k*(-q/gamma), defined for q <= 0."""
    return -gamma * conjugate(c, p, b, np.maximum(-np.asarray(q, dtype=float), 0.0) / gamma)


def tilde_conjugate_prime(c, p, b, gamma, q):
    """(k~*)'(q) = (k')^{-1}(-q/gamma), the optimal precision rate."""
    return marginal_inverse(c, p, b, np.maximum(-np.asarray(q, dtype=float), 0.0) / gamma)
