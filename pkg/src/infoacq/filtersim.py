"""Monte Carlo market simulator with exact Gaussian filtering.

Each path draws the drift from its prior and evolves, on an Euler grid,

    dR = mu dt + sigma dW            (asset return)
    dS = mu theta dt + dB            (private signal)
    Y += dR / sigma^2 + theta dS,    Z += (1/sigma^2 + theta^2) dt
    X += pi dR - k(theta^2) dt.

Because ``Y`` and ``Z`` are the sufficient statistics of the discrete
observations, the posterior ``N((mu0 + sigma0^2 Y) / (sigma0^2 Z + 1),
sigma0^2 / (sigma0^2 Z + 1))`` is exact on the grid, not an approximation.

Random numbers come from a counter-based generator: the normals for path
``i`` at step ``n`` depend only on ``(seed, n, i)``, so results do not depend
on how paths are split into chunks.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .detcontrol import _cost_on_path
from .errors import DomainError, NumericalFailure
from .model import ModelParams
from .paths import StrategyPath, fmt

__all__ = [
    "SimConfig",
    "PathState",
    "SimBatch",
    "simulate",
    "compare_strategies",
    "Comparison",
    "filter_consistency",
    "FilterReport",
    "batch_csv",
]

FLAG_LIMIT = 1e-3
_TWO_M53 = 2.0**-53


@dataclass(frozen=True)
class SimConfig:
    """Monte Carlo settings.

    With ``antithetic`` on, paths come in mirrored pairs (all normals
    negated) and standard errors are computed from pair means.
    """

    n_paths: int = 200_000
    n_steps: int = 512
    seed: int = 0
    antithetic: bool = True
    chunk: int = 32_768

    def __post_init__(self):
        if self.n_paths < 1:
            raise DomainError("n_paths must be >= 1")
        if self.n_steps < 16:
            raise DomainError("n_steps must be >= 16")
        if self.antithetic and self.n_paths % 2:
            raise DomainError("antithetic sampling needs an even n_paths")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must fit in 64 bits")

    @property
    def n_base(self) -> int:
        return self.n_paths // 2 if self.antithetic else self.n_paths


def _normals(seed: int, stream: int, start: int, count: int, width: int) -> np.ndarray:
    """Standard normals of shape (count, width) for base paths start..start+count-1."""
    bg = np.random.Philox(key=[seed, stream], counter=[start, 0, 0, 0])
    raw = bg.random_raw(4 * count).reshape(count, 4)[:, :width]
    return ndtri(((raw >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53)


@dataclass(frozen=True, eq=False)
class PathState:
    """Filtered states of every path at a set of recorded grid steps.

    Arrays are shaped (n_recorded, n_paths); ``Z`` and ``post_var`` are
    deterministic and stored once per recorded step.
    """

    steps: np.ndarray
    times: np.ndarray
    mu_draw: np.ndarray
    Y: np.ndarray
    Z: np.ndarray
    X: np.ndarray
    post_mean: np.ndarray
    post_var: np.ndarray


@dataclass(frozen=True, eq=False)
class SimBatch:
    config: SimConfig
    strategy: str
    mean_utility: float
    std_error: float
    utilities: np.ndarray
    n_flagged: int
    states: PathState | None = field(default=None, repr=False)
    trace: dict | None = field(default=None, repr=False)

    def summary_row(self):
        return (self.strategy, self.config.n_paths, self.mean_utility, self.std_error, self.n_flagged)


def _schedule(path: StrategyPath, T: float, n_steps: int) -> np.ndarray:
    # left-endpoint (piecewise constant) sampling of theta^2 on the sim grid
    t = T * np.arange(n_steps) / n_steps
    return np.maximum(np.interp(t, path.times, path.theta_sq), 0.0)


def _trading_rule(trading):
    if trading in ("feedback", "merton-myopic"):
        return trading
    try:
        return float(trading)
    except (TypeError, ValueError):
        raise DomainError(f"unknown trading rule {trading!r}") from None


def _pair_stats(u: np.ndarray, antithetic: bool):
    if antithetic:
        u = 0.5 * (u[0::2] + u[1::2])
    n = u.size
    mean = float(np.sum(u) / n)
    se = float(np.std(u, ddof=1) / math.sqrt(n)) if n > 1 else math.inf
    return mean, se


def simulate(
    params: ModelParams,
    cost,
    theta_path: StrategyPath,
    trading="feedback",
    cfg: SimConfig = SimConfig(),
    record_steps=None,
    trace: bool = False,
) -> SimBatch:
    """Simulate ``cfg.n_paths`` paths and return terminal-utility statistics.

    Parameters
    ----------
    trading : {"feedback", "merton-myopic"} or float
        ``feedback`` is the optimal rule ``(sigma0^2 Z + 1) / (sigma0^2 u + 1)
        * mu_hat / (sigma^2 gamma)``; ``merton-myopic`` drops the horizon
        factor; a number is a constant position.
    record_steps : iterable of int, optional
        Grid steps (0..n_steps) at which to keep the filtered states.
    trace : bool
        Keep full per-step arrays of returns, positions and wealth (small
        batches only).
    """
    rule = _trading_rule(trading)
    T, N = params.T, cfg.n_steps
    dt = T / N
    sq = math.sqrt(dt)
    s2, s02 = params.sigma**2, params.sigma0**2
    th2 = _schedule(theta_path, T, N)
    th = np.sqrt(th2)
    kdt = np.zeros(N) if cost is None else _cost_on_path(cost, th2) * dt
    t_nodes = T * np.arange(N + 1) / N
    # Z is deterministic; the recursion matches t/sigma^2 + sum theta^2 dt
    Z = np.concatenate([[0.0], np.cumsum(dt / s2 + th2 * dt)])
    rec = np.array(sorted(set(int(s) for s in record_steps)) if record_steps is not None else [], dtype=int)
    if rec.size and (rec.min() < 0 or rec.max() > N):
        raise DomainError("record_steps must lie in [0, n_steps]")

    mult = 2 if cfg.antithetic else 1
    n = cfg.n_paths
    util = np.empty(n)
    mu_rec = np.empty(n) if rec.size else None
    Y_rec = np.empty((rec.size, n)) if rec.size else None
    X_rec = np.empty((rec.size, n)) if rec.size else None
    tr = {"dR": np.empty((N, n)), "pi": np.empty((N, n)), "X": np.empty((N + 1, n)), "Y": np.empty((N + 1, n))} if trace else None

    for b0 in range(0, cfg.n_base, cfg.chunk):
        m = min(cfg.chunk, cfg.n_base - b0)
        z0 = _normals(cfg.seed, 0, b0, m, 1)[:, 0]
        if cfg.antithetic:
            z0 = np.stack([z0, -z0], axis=1).ravel()
        mu = params.mu0 + params.sigma0 * z0
        Y = np.zeros(m * mult)
        X = np.full(m * mult, float(params.x0))
        sl = slice(b0 * mult, (b0 + m) * mult)
        if rec.size:
            mu_rec[sl] = mu
        r = 0
        for k in range(N + 1):
            if r < rec.size and rec[r] == k:
                Y_rec[r, sl] = Y
                X_rec[r, sl] = X
                r += 1
            if trace:
                tr["X"][k, sl] = X
                tr["Y"][k, sl] = Y
            if k == N:
                break
            zz = _normals(cfg.seed, k + 1, b0, m, 2)
            if cfg.antithetic:
                zz = np.stack([zz, -zz], axis=1).reshape(-1, 2)
            dR = mu * dt + params.sigma * sq * zz[:, 0]
            if rule == "feedback" or rule == "merton-myopic":
                mean = (params.mu0 + s02 * Y) / (s02 * Z[k] + 1.0)
                pi = mean / (s2 * params.gamma)
                if rule == "feedback":
                    u = Z[k] + (T - t_nodes[k]) / s2
                    pi = pi * ((s02 * Z[k] + 1.0) / (s02 * u + 1.0))
            else:
                pi = np.full(m * mult, rule)
            X = X + pi * dR - kdt[k]
            if th[k] != 0.0:
                dS = mu * th[k] * dt + sq * zz[:, 1]
                Y = Y + dR / s2 + th[k] * dS
            else:
                Y = Y + dR / s2
            if trace:
                tr["dR"][k, sl] = dR
                tr["pi"][k, sl] = pi
        with np.errstate(over="ignore", invalid="ignore"):
            util[sl] = -np.exp(-params.gamma * X) / params.gamma

    bad = ~np.isfinite(util)
    n_bad = int(np.count_nonzero(bad))
    if n_bad > FLAG_LIMIT * n:
        raise NumericalFailure(f"{n_bad} of {n} paths produced non-finite wealth")
    if n_bad:
        # drop whole antithetic pairs so pair means stay well defined
        if cfg.antithetic:
            pb = bad.reshape(-1, 2).any(axis=1)
            keep = np.repeat(~pb, 2)
        else:
            keep = ~bad
        mean, se = _pair_stats(util[keep], cfg.antithetic)
    else:
        mean, se = _pair_stats(util, cfg.antithetic)

    states = None
    if rec.size:
        post_var = s02 / (s02 * Z[rec] + 1.0)
        post_mean = (params.mu0 + s02 * Y_rec) / (s02 * Z[rec][:, None] + 1.0)
        states = PathState(rec, t_nodes[rec], mu_rec, Y_rec, Z[rec], X_rec, post_mean, post_var)
    if trace:
        tr["Z"] = Z
        tr["theta_sq"] = th2
        tr["k_dt"] = kdt
    label = theta_path.solver_tag if isinstance(trading, str) else f"{theta_path.solver_tag}/const"
    return SimBatch(cfg, label, mean, se, util, n_bad, states, tr)


@dataclass(frozen=True, eq=False)
class Comparison:
    """Candidates ranked by mean utility, with paired differences.

    ``diff[i, j]`` is mean(U_i - U_j) over common random numbers and
    ``diff_se[i, j]`` its standard error.
    """

    batches: tuple
    diff: np.ndarray
    diff_se: np.ndarray
    ranking: tuple  # candidate indices, best first

    def z(self, i, j) -> float:
        se = self.diff_se[i, j]
        return self.diff[i, j] / se if se > 0.0 else (0.0 if self.diff[i, j] == 0.0 else math.copysign(math.inf, self.diff[i, j]))


def compare_strategies(params: ModelParams, cost, candidates, cfg: SimConfig = SimConfig(), trading="feedback") -> Comparison:
    """Simulate every candidate on the same random numbers and pair the results."""
    batches = tuple(simulate(params, cost, c, trading, cfg) for c in candidates)
    k = len(batches)
    diff = np.zeros((k, k))
    dse = np.zeros((k, k))
    for i in range(k):
        for j in range(k):
            if i == j:
                continue
            d = batches[i].utilities - batches[j].utilities
            keep = np.isfinite(d)
            if cfg.antithetic:
                keep = np.repeat(keep.reshape(-1, 2).all(axis=1), 2)
            diff[i, j], dse[i, j] = _pair_stats(d[keep], cfg.antithetic)
    order = tuple(sorted(range(k), key=lambda i: -batches[i].mean_utility))
    return Comparison(batches, diff, dse, order)


@dataclass(frozen=True)
class FilterCheck:
    t: float
    n: int
    slope: float
    slope_se: float
    intercept: float
    intercept_se: float
    resid_var: float
    expected_var: float
    var_se: float
    std_resid_mean: float
    std_resid_var: float

    @property
    def z_scores(self):
        n = self.n
        return {
            "slope": (self.slope - 1.0) / self.slope_se,
            "intercept": self.intercept / self.intercept_se,
            "variance": (self.resid_var - self.expected_var) / self.var_se,
            "std_mean": self.std_resid_mean / (1.0 / math.sqrt(n)),
            "std_var": (self.std_resid_var - 1.0) / math.sqrt(2.0 / n),
        }


@dataclass(frozen=True)
class FilterReport:
    checks: tuple

    @property
    def max_deviation(self) -> float:
        """Largest absolute z-score over all checks, in standard errors."""
        return max(abs(v) for c in self.checks for v in c.z_scores.values())

    def passed(self, limit: float = 3.0) -> bool:
        return self.max_deviation <= limit


def filter_consistency(params: ModelParams, theta_path: StrategyPath, cfg: SimConfig = SimConfig(), times=None, cost=None) -> FilterReport:
    """Check the posterior against the sampled drifts at the given times.

    Uses independent (non-antithetic) paths so the usual regression standard
    errors apply.  Defaults to ``t in {T/4, T/2, T}``.  The cost only moves
    wealth, which this check ignores, so it may be omitted.
    """
    cfg = SimConfig(cfg.n_paths, cfg.n_steps, cfg.seed, False, cfg.chunk)
    N = cfg.n_steps
    times = [params.T / 4, params.T / 2, params.T] if times is None else list(times)
    steps = [int(round(t / params.T * N)) for t in times]
    batch = simulate(params, cost, theta_path, "feedback", cfg, record_steps=steps)
    st = batch.states
    checks = []
    for r, step in enumerate(st.steps):
        mu = st.mu_draw
        m = st.post_mean[r]
        n = mu.size
        mc = m - m.mean()
        sxx = float(mc @ mc)
        slope = float(mc @ (mu - mu.mean())) / sxx
        intercept = float(mu.mean() - slope * m.mean())
        res = mu - intercept - slope * m
        s2r = float(res @ res) / (n - 2)
        slope_se = math.sqrt(s2r / sxx)
        intercept_se = math.sqrt(s2r * (1.0 / n + m.mean() ** 2 / sxx))
        e = mu - m
        v_exp = float(st.post_var[r])
        v_emp = float(np.mean(e * e))
        z = e / math.sqrt(v_exp)
        checks.append(
            FilterCheck(
                float(st.times[r]), n, slope, slope_se, intercept, intercept_se,
                v_emp, v_exp, v_exp * math.sqrt(2.0 / n), float(z.mean()), float(np.mean(z * z)),
            )
        )
    return FilterReport(tuple(checks))


def batch_csv(batches, dest=None) -> str:
    """Summary rows "strategy,n_paths,mean_utility,std_error,flagged"."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("strategy", "n_paths", "mean_utility", "std_error", "flagged"))
    for b in batches:
        name, n, mean, se, flagged = b.summary_row()
        w.writerow((name, n, fmt(mean), fmt(se), flagged))
    text = buf.getvalue()
    if dest is not None:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    return text
