import csv
import io

import numpy as np
import pytest

from infoacq.cli import load_config, main, resolve, build_parser
from infoacq.paths import StrategyPath


def run(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def test_solve_default(tmp_path):
    dest = tmp_path / "path.csv"
    code, out, _ = run("solve", "--out", str(dest))
    assert code == 0
    rows = list(csv.reader(dest.open()))
    assert rows[0] == ["t", "theta_sq", "Z", "u", "solver"]
    assert len(rows) == 4098  # header plus 4097 grid points
    th = np.array([float(r[1]) for r in rows[1:]])
    assert np.all(np.diff(th) <= 0)
    assert "theta0_sq" in out and "value" in out
    path = StrategyPath.from_csv(dest)
    assert path.solver_tag == "characteristics"


def test_solve_seventeen_digits(tmp_path):
    dest = tmp_path / "p.csv"
    run("solve", "--steps", "16", "--out", str(dest))
    row = dest.read_text().splitlines()[1].split(",")
    assert float(row[1]) == float(format(float(row[1]), ".17g"))
    assert len(row[1].replace(".", "").lstrip("0")) >= 16


def test_solve_no_acquisition(tmp_path):
    code, out, _ = run("solve", "--cost", "truncated-linear", "--out", str(tmp_path / "t.csv"))
    assert code == 0
    assert "no acquisition" in out
    assert "t_star       0\n" in out


def test_solve_to_stdout():
    code, out, err = run("solve", "--steps", "8")
    assert code == 0 and out.startswith("t,theta_sq,Z,u,solver") and "value" in err


@pytest.mark.parametrize("solver", ["upwind", "detcontrol"])
def test_other_solvers(tmp_path, solver):
    code, out, _ = run("solve", "--solver", solver, "--out", str(tmp_path / "x.csv"))
    assert code == 0 and solver in out


def test_usage_errors(capsys):
    assert run("solve", "--bogus")[0] == 2
    assert "usage" in capsys.readouterr().err
    assert run("solve", "--cost", "truncated-linear", "--solver", "upwind")[0] == 2
    assert run("solve", "--cost", "power", "--solver", "closedform")[0] == 2
    assert run("solve", "--cost", "power", "--p", "3")[0] == 2
    assert run("solve", "--sigma", "-1")[0] == 2
    assert run("solve", "--config", "/nonexistent/file")[0] == 2


def test_cfl_override_rejected():
    code, _, err = run("solve", "--solver", "upwind", "--tau", "0.1")
    assert code == 2 and "CFL" in err
    code, _, err = run("verify", "--tau", "0.1")
    assert code == 2 and "CFL" in err


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# baseline\nsigma0 = 0.2\nsolver = detcontrol\nT = 2\n")
    ns = build_parser().parse_args(["solve", "--config", str(cfg), "--sigma0", "0.121"])
    rc = resolve(ns)
    assert rc.params.sigma0 == 0.121  # flag wins
    assert rc.params.T == 2.0 and rc.solver == "detcontrol"
    assert load_config(cfg)["horizon"] == 2.0


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("wibble = 3\n")
    assert run("solve", "--config", str(bad))[0] == 2
    bad.write_text("sigma0 0.2\n")
    assert run("solve", "--config", str(bad))[0] == 2
    bad.write_text("sigma0 = abc\n")
    assert run("solve", "--config", str(bad))[0] == 2


def test_sweep(tmp_path):
    dest = tmp_path / "sweep.csv"
    code, _, _ = run("sweep", "--param", "c", "--range", "0.001", "0.01", "--count", "5", "--out", str(dest))
    assert code == 0
    rows = list(csv.reader(dest.open()))
    assert rows[0] == ["param", "value", "theta0_sq", "flagged"]
    th = [float(r[2]) for r in rows[1:]]
    assert len(th) == 5 and np.all(np.diff(th) < 0)


def test_sweep_parallel_matches_serial():
    serial = run("sweep", "--param", "sigma", "--range", "0.05", "0.3", "--count", "4")[1]
    parallel = run("sweep", "--param", "sigma", "--range", "0.05", "0.3", "--count", "4", "--jobs", "2")[1]
    assert serial == parallel


def test_sweep_flags_failures():
    # with tau pinned, the CFL condition fails for the cheapest costs only
    code, out, err = run("sweep", "--solver", "upwind", "--tau", "0.013", "--param", "c", "--range", "0.001", "0.003", "--count", "3")
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))[1:]
    assert rows[0][3] == "1" and rows[0][2] == "nan"
    assert rows[2][3] == "0"
    assert "flagged" in err


def test_sweep_usage():
    assert run("sweep", "--param", "c")[0] == 2
    assert run("sweep", "--param", "c", "--range", "0.01", "0.001")[0] == 2
    assert run("sweep", "--param", "mu0", "--range", "0.1", "0.2")[0] == 2


def test_simulate(tmp_path):
    dest = tmp_path / "mc.csv"
    code, out, _ = run("simulate", "--paths", "2000", "--sim-steps", "64", "--benchmarks", "--out", str(dest))
    assert code == 0
    rows = list(csv.reader(dest.open()))
    assert rows[0] == ["strategy", "n_paths", "mean_utility", "std_error", "flagged"]
    assert [r[0] for r in rows[1:]] == ["characteristics", "zero", "scaled-1.5"]
    assert run("simulate", "--paths", "3")[0] == 2


def test_verify_requires_smooth_cost():
    assert run("verify", "--cost", "truncated-linear")[0] == 2


@pytest.mark.slow
def test_verify_defaults():
    code, out, _ = run("verify")
    assert code == 0, out
    assert "FAIL" not in out and "mu0 invariance" in out
