import csv
import subprocess
import sys

import pytest

from conftest import requires_cbc
from evmaas.cli import run


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run(["generate", "--seed", "2", "--requests", "4", "--vehicles", "2",
                "--stations", "1", "--out", str(d / "sc")]) == 0
    return d


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


@requires_cbc
def test_solve_validate_report(workdir, capsys):
    sc, out = workdir / "sc", workdir / "out"
    assert run(["solve", "--scenario", str(sc), "--out", str(out), "--gap", "1e-6"]) == 0
    assert "status optimal" in capsys.readouterr().out
    assert (out / "breakdown.csv").exists()
    assert run(["validate", "--plan", str(out / "plan.csv"), "--scenario", str(sc),
                "--oracle"]) == 0
    assert "0 violations" in capsys.readouterr().out
    assert run(["report", "--plan", str(out / "plan.csv"), "--scenario", str(sc),
                "--out", str(workdir / "rep")]) == 0
    assert len(_rows(workdir / "rep" / "grid_profile.csv")) == 1 + 1440 // 15
    assert _rows(workdir / "rep" / "degradation_curve.csv")[0][0] == "q_kwh"


@requires_cbc
def test_corrupted_plan_rejected(workdir, capsys):
    sc, out = workdir / "sc", workdir / "bad"
    assert run(["solve", "--scenario", str(sc), "--out", str(out), "--gap", "1e-6"]) == 0
    rows = _rows(out / "plan.csv")
    rows[1][6] = str(float(rows[1][6]) + 3.0)  # arrival energy of the first leg
    with open(out / "plan.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    capsys.readouterr()
    assert run(["validate", "--plan", str(out / "plan.csv"), "--scenario", str(sc)]) == 2
    assert "Eq. (10)" in capsys.readouterr().out


@requires_cbc
def test_sweep_rows(workdir):
    out = workdir / "sweep"
    assert run(["sweep", "--scenario", str(workdir / "sc"), "--pbatt", "200,0,50",
                "--out", str(out), "--gap", "1e-6"]) == 0
    rows = _rows(out / "sweep.csv")
    assert len(rows) == 4
    assert [float(r[0]) for r in rows[1:]] == [0.0, 50.0, 200.0]


@pytest.mark.parametrize("argv", [
    [],
    ["solve"],
    ["generate", "--seed", "x", "--requests", "1", "--vehicles", "1", "--stations", "1",
     "--out", "o"],
    ["sweep", "--scenario", "s", "--out", "o", "--pbatt", "a,b"],
    ["frobnicate"],
])
def test_usage_errors(argv, capsys):
    assert run(argv) == 1


def test_missing_scenario_is_usage_error(tmp_path):
    assert run(["solve", "--scenario", str(tmp_path / "none"), "--out", str(tmp_path)]) == 1


def test_solver_failure(workdir, tmp_path, capsys):
    assert run(["solve", "--scenario", str(workdir / "sc"), "--out", str(tmp_path),
                "--solver-cmd", "echo boom; exit 4"]) == 3
    assert "boom" in capsys.readouterr().err


def test_sweep_solver_failure(workdir, tmp_path):
    assert run(["sweep", "--scenario", str(workdir / "sc"), "--pbatt", "0",
                "--out", str(tmp_path), "--solver-cmd", "exit 4"]) == 3


def test_highs_backend(workdir, tmp_path):
    assert run(["solve", "--scenario", str(workdir / "sc"), "--out", str(tmp_path),
                "--backend", "highs", "--gap", "0"]) == 0


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "evmaas.cli", "--help"],
                         capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("generate", "solve", "sweep", "validate", "report"):
        assert cmd in res.stdout
