"""Command-line front end.

    infoacq solve    [options]   optimal schedule as CSV plus a summary
    infoacq sweep    --param NAME --range LO HI [--count N]
    infoacq simulate [options]   Monte Carlo batch summary CSV
    infoacq verify   [options]   cross-solver checks, exit 1 on failure

Options can also come from a flat ``key = value`` file given with
``--config``; keys are the long flag names (``sigma0``, ``horizon``, ...).
Flags on the command line win over the file.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DomainError, InfoAcqError, UnsupportedVariantError
from .model import ModelParams, Power, Regularized, TruncatedLinear
from .paths import StrategyPath, constant_path, fmt

__all__ = ["RunConfig", "build_parser", "load_config", "resolve", "main"]

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

SOLVERS = ("closedform", "characteristics", "upwind", "detcontrol")
COSTS = ("truncated-linear", "power", "regularized")
SWEEP_PARAMS = ("c", "gamma", "sigma0", "sigma", "T")

# flag name -> (type, default); None means "not given"
_OPTIONS = {
    "cost": (str, "power"),
    "c": (float, 0.002),
    "beta": (float, 1.0),
    "p": (float, 2.0),
    "b": (float, 0.0),
    "mu0": (float, 0.172),
    "sigma0": (float, 0.121),
    "sigma": (float, 0.192),
    "gamma": (float, 2.0),
    "horizon": (float, 1.0),
    "x0": (float, 0.0),
    "solver": (str, None),
    "steps": (int, None),
    "h": (float, 0.005),
    "tau": (float, None),
    "paths": (int, 200_000),
    "sim_steps": (int, 512),
    "seed": (int, 0),
    "out": (str, None),
    "param": (str, None),
    "range": (None, None),
    "count": (int, 20),
    "jobs": (int, 1),
    "benchmarks": (bool, False),
}


class UsageError(InfoAcqError):
    pass


@dataclass(frozen=True)
class RunConfig:
    params: ModelParams
    cost: object
    solver: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.solver not in SOLVERS:
            raise UsageError(f"unknown solver {self.solver!r}")
        truncated = isinstance(self.cost, TruncatedLinear)
        if truncated != (self.solver == "closedform"):
            raise UsageError(
                f"solver {self.solver!r} does not accept a {'truncated-linear' if truncated else 'smooth'} cost"
            )


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def load_config(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key == "T":
                key = "horizon"
            if key not in _OPTIONS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            kind = _OPTIONS[key][0]
            try:
                if key == "range":
                    lo, hi = (float(v) for v in value.replace(",", " ").split())
                    out[key] = (lo, hi)
                elif kind is bool:
                    out[key] = _bool(value)
                else:
                    out[key] = kind(value)
            except ValueError:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {value!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model")
    g.add_argument("--config", metavar="PATH")
    g.add_argument("--cost", choices=COSTS)
    for name in ("c", "beta", "p", "b", "mu0", "sigma0", "sigma", "gamma", "horizon", "x0"):
        g.add_argument(f"--{name}", type=float)
    s = common.add_argument_group("numerics")
    s.add_argument("--solver", choices=SOLVERS)
    s.add_argument("--steps", type=int, help="time steps of the schedule (default 4096, detcontrol 2048)")
    s.add_argument("--h", type=float, help="upwind u-spacing")
    s.add_argument("--tau", type=float, help="upwind time step (default 0.95 h / CFL)")
    s.add_argument("--paths", type=int, help="Monte Carlo paths")
    s.add_argument("--sim-steps", dest="sim_steps", type=int, help="Monte Carlo time steps")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", metavar="PATH")

    parser = argparse.ArgumentParser(prog="infoacq", description="Optimal information acquisition schedules.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="compute the optimal schedule")
    sw = sub.add_parser("sweep", parents=[common], help="re-solve over a parameter grid")
    sw.add_argument("--param", choices=SWEEP_PARAMS)
    sw.add_argument("--range", nargs=2, type=float, metavar=("LO", "HI"))
    sw.add_argument("--count", type=int, help="grid points (default 20)")
    sw.add_argument("--jobs", type=int, help="worker processes (default 1)")
    sm = sub.add_parser("simulate", parents=[common], help="Monte Carlo check of the schedule")
    sm.add_argument("--benchmarks", action="store_const", const=True, help="also run theta=0 and 1.5x the optimum")
    sub.add_parser("verify", parents=[common], help="cross-solver verification battery")
    return parser


def resolve(ns: argparse.Namespace) -> RunConfig:
    """Merge defaults, the config file and the flags (flags win)."""
    opts = {k: v[1] for k, v in _OPTIONS.items()}
    if getattr(ns, "config", None):
        opts.update(load_config(ns.config))
    for key in _OPTIONS:
        val = getattr(ns, key, None)
        if val is not None:
            opts[key] = tuple(val) if key == "range" else val
    if opts["cost"] not in COSTS:
        raise UsageError(f"unknown cost {opts['cost']!r}")
    try:
        params = ModelParams(
            mu0=opts["mu0"], sigma0=opts["sigma0"], sigma=opts["sigma"],
            gamma=opts["gamma"], T=opts["horizon"], x0=opts["x0"],
        )
        cost = make_cost(opts["cost"], opts["c"], opts["beta"], opts["p"], opts["b"])
    except DomainError as exc:
        raise UsageError(str(exc)) from None
    solver = opts["solver"] or ("closedform" if isinstance(cost, TruncatedLinear) else "characteristics")
    return RunConfig(params, cost, solver, opts)


def make_cost(kind, c, beta, p, b):
    if kind == "truncated-linear":
        return TruncatedLinear(c, beta)
    if kind == "power":
        return Power(c, p)
    return Regularized(Power(c, p), b)


def solve_path(cfg: RunConfig, params: ModelParams | None = None, cost=None) -> StrategyPath:
    params = params or cfg.params
    cost = cost or cfg.cost
    o = cfg.options
    if cfg.solver == "closedform":
        from .closedform import closed_form_path

        return closed_form_path(params, cost, o["steps"] or 4096)
    if cfg.solver == "characteristics":
        from .characteristics import optimal_theta_path

        return optimal_theta_path(params, cost, o["steps"] or 4096)
    if cfg.solver == "upwind":
        from .hjsolver import solve_grid, theta_from_grid

        return theta_from_grid(solve_grid(params, cost, h=o["h"], tau=o["tau"]))
    from .detcontrol import DetControlProblem, solve

    return solve(DetControlProblem(params, cost, o["steps"] or 2048))


def schedule_value(cfg: RunConfig, path: StrategyPath) -> float:
    if isinstance(cfg.cost, TruncatedLinear):
        from .closedform import closed_form_value

        return closed_form_value(cfg.params, cfg.cost)
    from .detcontrol import value_of_schedule

    return value_of_schedule(cfg.params, cfg.cost, path)


def _emit(text, dest, stdout):
    if dest:
        with open(dest, "w", newline="") as fh:
            fh.write(text)
    else:
        stdout.write(text)


def cmd_solve(cfg: RunConfig, stdout, stderr) -> int:
    path = solve_path(cfg)
    info = stderr if not cfg.options["out"] else stdout
    if isinstance(cfg.cost, TruncatedLinear):
        from .closedform import switching_time

        fb = switching_time(cfg.params, cfg.cost)
        t_star = fb.t_star if fb.has_acquisition else 0.0
        if not fb.has_acquisition:
            print("no acquisition", file=info)
    else:
        active = np.nonzero(path.theta_sq > 1e-12)[0]
        t_star = float(path.times[active[-1] + 1]) if active.size and active[-1] + 1 < len(path) else (
            float(path.times[-1]) if active.size else 0.0
        )
    _emit(path.to_csv(), cfg.options["out"], stdout)
    print(f"solver       {path.solver_tag}", file=info)
    print(f"t_star       {fmt(t_star)}", file=info)
    print(f"theta0_sq    {fmt(path.theta_sq[0])}", file=info)
    print(f"value        {fmt(schedule_value(cfg, path))}", file=info)
    return EXIT_OK


def _with_param(cfg: RunConfig, name: str, value: float):
    if name == "c":
        k = cfg.cost
        if isinstance(k, TruncatedLinear):
            return cfg.params, TruncatedLinear(value, k.beta)
        if isinstance(k, Regularized):
            return cfg.params, Regularized(Power(value, k.base.p), k.b)
        return cfg.params, Power(value, k.p)
    return cfg.params.with_(**{name: value}), cfg.cost


def _sweep_point(args):
    cfg, name, value = args
    try:
        params, cost = _with_param(cfg, name, value)
        return float(solve_path(cfg, params, cost).theta_sq[0]), 0
    except (InfoAcqError, ArithmeticError, ValueError):
        return math.nan, 1


def cmd_sweep(cfg: RunConfig, stdout, stderr) -> int:
    o = cfg.options
    name = o["param"]
    if name == "horizon":
        name = "T"
    if name not in SWEEP_PARAMS:
        raise UsageError(f"--param must be one of {', '.join(SWEEP_PARAMS)}")
    if not o["range"]:
        raise UsageError("--range LO HI is required")
    lo, hi = o["range"]
    if not (0.0 < lo < hi):
        raise UsageError("range must satisfy 0 < LO < HI")
    if o["count"] < 2:
        raise UsageError("--count must be at least 2")
    grid = np.linspace(lo, hi, o["count"])
    jobs = [(cfg, name, float(v)) for v in grid]
    if o["jobs"] > 1:
        with ProcessPoolExecutor(o["jobs"]) as pool:
            rows = list(pool.map(_sweep_point, jobs))
    else:
        rows = [_sweep_point(j) for j in jobs]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("param", "value", "theta0_sq", "flagged"))
    for v, (th0, bad) in zip(grid, rows):
        w.writerow((name, fmt(v), fmt(th0), bad))
    _emit(buf.getvalue(), o["out"], stdout)
    n_bad = sum(b for _, b in rows)
    if n_bad:
        print(f"{n_bad} grid point(s) failed and were flagged", file=stderr)
    return EXIT_OK


def _sim_config(cfg: RunConfig):
    from .filtersim import SimConfig

    o = cfg.options
    try:
        return SimConfig(n_paths=o["paths"], n_steps=o["sim_steps"], seed=o["seed"])
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(cfg: RunConfig, stdout, stderr) -> int:
    from .filtersim import batch_csv, compare_strategies, simulate

    sim = _sim_config(cfg)
    path = solve_path(cfg)
    info = stderr if not cfg.options["out"] else stdout
    if cfg.options["benchmarks"]:
        s2 = cfg.params.sigma**2
        zero = constant_path(cfg.params.T, len(path) - 1, 0.0, s2, "zero")
        scaled = path.scaled(1.5, s2, "scaled-1.5")
        cmp = compare_strategies(cfg.params, cfg.cost, [path, zero, scaled], sim)
        _emit(batch_csv(cmp.batches), cfg.options["out"], stdout)
        for j in (1, 2):
            print(f"{path.solver_tag} - {cmp.batches[j].strategy}: {cmp.diff[0, j]:.6g} (z = {cmp.z(0, j):.2f})", file=info)
    else:
        batch = simulate(cfg.params, cfg.cost, path, "feedback", sim)
        _emit(batch_csv([batch]), cfg.options["out"], stdout)
        target = schedule_value(cfg, path)
        print(f"value {fmt(target)}  mc {fmt(batch.mean_utility)} +- {fmt(batch.std_error)}", file=info)
    return EXIT_OK


@dataclass
class Check:
    name: str
    value: float
    limit: float
    ok: bool


def run_checks(cfg: RunConfig, mc: bool = True) -> list:
    """The verification battery; every check is a (value, limit) pair."""
    from .characteristics import gamma_field, optimal_theta_path
    from .detcontrol import DetControlProblem, euler_lagrange_residual, solve, value_from_gamma, value_of_schedule
    from .hjsolver import solve_grid, theta_from_grid

    if isinstance(cfg.cost, TruncatedLinear):
        raise UsageError("verify needs a smooth cost")
    p, k, o = cfg.params, cfg.cost, cfg.options
    checks = []

    def add(name, value, limit, ok=None):
        checks.append(Check(name, float(value), float(limit), bool(value <= limit) if ok is None else bool(ok)))

    def solvers(params):
        return {
            "characteristics": optimal_theta_path(params, k, o["steps"] or 4096),
            "upwind": theta_from_grid(solve_grid(params, k, h=o["h"], tau=o["tau"])),
            "detcontrol": solve(DetControlProblem(params, k, 2048)),
        }

    paths = solvers(p)
    names = list(paths)
    fine = paths["characteristics"]
    for i in range(3):
        for j in range(i + 1, 3):
            a, b = paths[names[i]], paths[names[j]]
            grid = np.union1d(a.times, b.times)
            gap = np.max(np.abs(a.theta_sq_at(grid) - b.theta_sq_at(grid)))
            add(f"agreement {names[i]}/{names[j]}", gap, 1e-3)
    for n, path in paths.items():
        add(f"monotone {n}", max(0.0, float(np.max(np.diff(path.theta_sq)))), 1e-9)
        add(f"terminal {n}", abs(path.theta_sq[-1]), 1e-4)
    for mu0 in (0.0, 1.0):
        other = solvers(p.with_(mu0=mu0))
        same = all(other[n].digest == paths[n].digest for n in names)
        add(f"mu0 invariance (mu0={mu0:g})", 0.0 if same else 1.0, 0.0, same)

    field = gamma_field(p, k)
    rng = np.random.default_rng(o["seed"])
    t = rng.uniform(0.0, p.T, 10_000)
    u = rng.uniform(0.0, 2.0 * p.T / p.sigma**2, 10_000)
    q = -field.gamma_u(t, u) / p.gamma
    bound = p.sigma0**4 * (p.T - t) / (2.0 * p.sigma**2 * p.gamma)
    lower_ok = bool(np.all(q[t < p.T] > 0.0))
    add("Gamma_u lower bound (min -Gamma_u/gamma)", float(np.min(q)), 0.0, lower_ok)
    add("Gamma_u upper bound (max ratio)", float(np.max(q / np.where(bound > 0, bound, np.inf))), 1.0)

    prob = DetControlProblem(p, k, 2048)
    add("Euler-Lagrange residual", euler_lagrange_residual(prob, fine), 1e-4)
    v_path = value_of_schedule(p, k, fine)
    v_field = value_from_gamma(p, float(field.gamma(0.0, p.T / p.sigma**2)))
    add("value identity (relative)", abs(v_path - v_field) / abs(v_field), 1e-4)

    if mc:
        from .filtersim import simulate

        batch = simulate(p, k, fine, "feedback", _sim_config(cfg))
        add("Monte Carlo value (|z|)", abs(batch.mean_utility - v_path) / batch.std_error, 3.0)
    return checks


def cmd_verify(cfg: RunConfig, stdout, stderr) -> int:
    checks = run_checks(cfg)
    width = max(len(c.name) for c in checks)
    for c in checks:
        status = "PASS" if c.ok else "FAIL"
        print(f"{c.name:<{width}}  {c.value:>12.4g}  (limit {c.limit:.3g})  {status}", file=stdout)
    failed = sum(not c.ok for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed", file=stdout)
    return EXIT_OK if failed == 0 else EXIT_FAIL


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "simulate": cmd_simulate, "verify": cmd_verify}


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    try:
        cfg = resolve(ns)
        return COMMANDS[ns.command](cfg, stdout, stderr)
    except (UsageError, ConfigurationError, UnsupportedVariantError) as exc:
        print(f"infoacq: error: {exc}", file=stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"infoacq: error: {exc}", file=stderr)
        return EXIT_USAGE
    except InfoAcqError as exc:
        print(f"infoacq: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
