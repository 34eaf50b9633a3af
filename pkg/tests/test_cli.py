import csv
import hashlib
import json
import subprocess
import sys

import pytest

from nehari_lab.cli import dispatch

from conftest import FIXTURES

SUB = str(FIXTURES / "subcritical.cfg")
CRIT = str(FIXTURES / "critical.cfg")


def run(tmp_path, *argv):
    return dispatch([*argv, "--out", str(tmp_path)])


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


def header(path):
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_validate_good_and_bad(tmp_path, capsys):
    assert run(tmp_path / "ok", "validate", "--config", SUB) == 0
    assert json.loads((tmp_path / "ok" / "validation.json").read_text())["valid"]
    assert run(tmp_path / "bad", "validate", "--config", str(FIXTURES / "bad.cfg")) == 2
    report = json.loads((tmp_path / "bad" / "validation.json").read_text())
    assert not report["valid"] and len(report["violations"]) == 5


def test_invalid_config_blocks_other_commands(tmp_path):
    assert run(tmp_path, "constants", "--config", str(FIXTURES / "bad.cfg")) == 2


def test_unreadable_config(tmp_path):
    assert run(tmp_path, "validate", "--config", str(tmp_path / "missing.cfg")) == 2


def test_usage_errors(tmp_path, capsys):
    assert dispatch([]) == 64
    assert dispatch(["frobnicate"]) == 64
    assert run(tmp_path, "solve", "--branch", "sideways") == 64
    assert run(tmp_path, "sweep", "--lambda-factors", "a,b") == 64


def test_runtime_errors(tmp_path):
    # talenti families need the critical regime
    assert run(tmp_path / "t", "talenti", "--config", SUB, "--grid-n", "12") == 1
    # lambda above the threshold estimate without --force
    assert run(tmp_path / "s", "solve", "--config", SUB, "--grid-n", "12", "--lambda-factor", "1.5") == 1


def test_fibering_outputs_and_manifest(tmp_path):
    assert run(tmp_path, "fibering", "--config", SUB, "--grid-n", "12", "--samples", "50") == 0
    assert header(tmp_path / "fibering.csv") == ["t", "gamma", "dgamma", "ddgamma"]
    man = manifest(tmp_path)
    assert man["subcommand"] == "fibering" and "wall_time" in man
    for entry in man["outputs"]:
        data = (tmp_path / entry["path"]).read_bytes()
        assert hashlib.sha256(data).hexdigest() == entry["sha256"]


def test_solve_outputs(tmp_path):
    assert run(tmp_path, "solve", "--config", SUB, "--grid-n", "12", "--branch", "plus", "--deterministic") == 0
    rep = json.loads((tmp_path / "solve_plus.json").read_text())
    assert rep["verification"]["passed"] and rep["energy"] < 0
    assert header(tmp_path / "field_plus.csv") == ["x", "y", "u"]
    assert "wall_time" not in manifest(tmp_path)


def test_gev_outputs(tmp_path):
    assert run(tmp_path, "gev", "--config", SUB, "--grid-n", "12") == 0
    assert header(tmp_path / "gev_curve.csv") == ["s", "U"]
    rep = json.loads((tmp_path / "gev.json").read_text())
    assert rep["monotonicity"] == {"nonincreasing": True, "shifted_nondecreasing": True}


def test_field_round_trip(tmp_path):
    assert run(tmp_path / "a", "solve", "--config", SUB, "--grid-n", "12", "--branch", "minus") == 0
    path = tmp_path / "a" / "field_minus.csv"
    assert run(tmp_path / "b", "fibering", "--config", SUB, "--grid-n", "12", "--field", str(path)) == 0
    rep = json.loads((tmp_path / "b" / "fibering.json").read_text())
    assert rep["t2"] == pytest.approx(1.0, rel=1e-6)


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "nehari_lab", "validate", "--config", SUB, "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0 and "configuration is valid" in proc.stdout
