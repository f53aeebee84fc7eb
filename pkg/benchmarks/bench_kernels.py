"""Time the compiled kernels against the NumPy fallback.

    python benchmarks/bench_kernels.py [--repeat N]

Each kernel runs on identical inputs under both backends; the table reports
the best wall time of N runs and the speed-up.
"""

import argparse
import timeit

import numpy as np

from infoacq import _pykernels
from infoacq.characteristics import _smooth_args, _u_floor, path_field
from infoacq.hjsolver import solve_grid
from infoacq.model import ModelParams, Power

try:
    from infoacq import _core
except ImportError:  # pragma: no cover
    _core = None


def cases(params, cost):
    args = _smooth_args(params, cost)
    g0 = -params.mu0**2 / (2 * params.sigma0**2)
    u0 = np.linspace(0.0, 70.0, 256)
    fld = path_field(params, cost, 1024)
    grid = solve_grid(params, cost, h=0.02)
    closure = grid.shifted[:, -1].copy()
    rng = np.random.default_rng(0)
    s = rng.uniform(0.0, params.T, 10_000)
    u = rng.uniform(27.0, 30.0, 10_000)
    c, p, b = cost.coeffs
    return {
        "fan_rk4 (256 curves x 1024 steps)": lambda m: m.fan_rk4(u0, 1024, 1 / 1024, *args, g0, _u_floor(params)),
        "path_rk4 (4096 steps)": lambda m: m.path_rk4(
            params.T, 4096, fld.ds, *fld._arrays, fld.u0_grid, fld.n_valid, c, p, b, params.gamma, params.sigma**2
        ),
        "field_query (10^4 points)": lambda m: m.field_query(s, u, fld.ds, *fld._arrays, fld.u0_grid, fld.n_valid),
        "upwind_march (h = 0.02)": lambda m: m.upwind_march(
            grid.u_grid, grid.t_grid.size - 1, grid.tau, grid.h, *args, closure
        ),
        "shoot (t = 0.5, u = 27.5)": lambda m: m.shoot(0.5, 27.5, 27.5, 28.0, 2048, *args, 1e-10, 200),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    opts = ap.parse_args(argv)
    params, cost = ModelParams(), Power(0.002, 2)
    print(f"{'kernel':<36} {'python [s]':>11} {'compiled [s]':>13} {'speed-up':>9}")
    for name, fn in cases(params, cost).items():
        t_py = min(timeit.repeat(lambda: fn(_pykernels), number=1, repeat=opts.repeat))
        if _core is None:
            print(f"{name:<36} {t_py:>11.4f} {'n/a':>13} {'':>9}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_core), number=1, repeat=opts.repeat))
        print(f"{name:<36} {t_py:>11.4f} {t_c:>13.5f} {t_py / t_c:>8.1f}x")


if __name__ == "__main__":
    main()
