"""Deterministic acquisition schedules and their CSV form."""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass

import numpy as np

CSV_HEADER = ("t", "theta_sq", "Z", "u", "solver")


def fmt(x) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(x), ".17g")


@dataclass(frozen=True, eq=False)
class StrategyPath:
    """A schedule t -> (theta^2, Z, u) on a time grid.

    ``u`` is the time-shifted state ``Z + (T - t) / sigma^2`` that the
    Hamilton-Jacobi formulation works with.
    """

    times: np.ndarray
    theta_sq: np.ndarray
    Z: np.ndarray
    u: np.ndarray
    solver_tag: str

    def __post_init__(self):
        n = len(self.times)
        for name in ("theta_sq", "Z", "u"):
            if len(getattr(self, name)) != n:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {n}")

    def __len__(self):
        return len(self.times)

    @property
    def theta(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.theta_sq, 0.0))

    def theta_sq_at(self, t) -> np.ndarray:
        """Piecewise-linear interpolation of theta^2."""
        return np.interp(t, self.times, self.theta_sq)

    def scaled(self, factor: float, sigma2: float, tag: str | None = None) -> "StrategyPath":
        """Multiply theta (not theta^2) by ``factor`` and rebuild Z and u."""
        th2 = self.theta_sq * factor * factor
        return from_theta_sq(self.times, th2, sigma2, tag or f"{self.solver_tag}*{factor:g}")

    @property
    def digest(self) -> str:
        """SHA-256 of the raw theta^2 bytes; equal digests mean bitwise-equal paths."""
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.times, dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.theta_sq, dtype=np.float64).tobytes())
        return h.hexdigest()

    def to_csv(self, dest=None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for row in zip(self.times, self.theta_sq, self.Z, self.u):
            w.writerow([fmt(v) for v in row] + [self.solver_tag])
        text = buf.getvalue()
        if dest is not None:
            with open(dest, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, src) -> "StrategyPath":
        with open(src, newline="") as fh:
            rows = list(csv.reader(fh))
        if tuple(rows[0]) != CSV_HEADER:
            raise ValueError(f"unexpected header {rows[0]!r}")
        body = rows[1:]
        cols = np.array([[float(v) for v in r[:4]] for r in body])
        return cls(cols[:, 0], cols[:, 1], cols[:, 2], cols[:, 3], body[0][4] if body else "")


def from_theta_sq(times, theta_sq, sigma2: float, tag: str) -> StrategyPath:
    """Build Z and u from a theta^2 schedule by trapezoidal accumulation."""
    times = np.asarray(times, dtype=float)
    theta_sq = np.asarray(theta_sq, dtype=float)
    rate = 1.0 / sigma2 + theta_sq
    Z = np.concatenate([[0.0], np.cumsum(0.5 * (rate[1:] + rate[:-1]) * np.diff(times))])
    u = Z + (times[-1] - times) / sigma2
    return StrategyPath(times, theta_sq, Z, u, tag)


def constant_path(T: float, n_steps: int, theta_sq: float, sigma2: float, tag: str = "constant") -> StrategyPath:
    times = np.linspace(0.0, T, n_steps + 1)
    return from_theta_sq(times, np.full_like(times, theta_sq), sigma2, tag)
