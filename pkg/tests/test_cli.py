import json
import subprocess
import sys

import pytest

from kpolling import cli, ctmc, harness
from kpolling._io import read_csv
from kpolling.errors import AccuracyError, NumericalError
from kpolling.model import PerturbationPath

GOOD = "params: {lambda1: 0.2, lambda2: 0.5, mu1: 1, mu2: 1, k1: 2, k2: 2}\n"


def _cfg(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def test_validate_ok(tmp_path, capsys):
    assert cli.main(["validate", "--config", _cfg(tmp_path, GOOD)]) == 0
    out = capsys.readouterr().out
    assert "rho " in out and "True" in out


def test_validate_unstable(tmp_path):
    cfg = _cfg(tmp_path, "params: {lambda1: 0.5, lambda2: 0.5, mu1: 1, mu2: 1}\n")
    assert cli.main(["validate", "--config", cfg]) == 2


def test_validate_ordering_violated(tmp_path):
    cfg = _cfg(tmp_path, "params: {lambda1: 0.3, lambda2: 0.3, mu1: 1, mu2: 1}\n")
    assert cli.main(["validate", "--config", cfg]) == 2


def test_malformed_yaml_reports_position(tmp_path, capsys):
    cfg = _cfg(tmp_path, "params:\n  lambda1: 0.2\n  mu1: [1,\n")
    assert cli.main(["validate", "--config", cfg]) == 64
    err = capsys.readouterr().err
    assert "run.yaml:4:1" in err


@pytest.mark.parametrize("text, where", [
    (GOOD + "solve: {n1max: 10, bogus: 1}\n", "2:"),
    (GOOD + "extra: {}\n", "2:1"),
    ("params: {lambda1: 0.2, mu1: 1, mu2: one}\n", "1:"),
    ("params: {lambda1: 0.2, mu1: 1}\n", "mu2"),
    ("solve: {n1max: 10}\n", "params"),
    ("- 1\n- 2\n", "mapping"),
])
def test_config_errors_are_usage_errors(tmp_path, capsys, text, where):
    assert cli.main(["validate", "--config", _cfg(tmp_path, text)]) == 64
    assert where in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert cli.main(["validate", "--config", str(tmp_path / "none.yaml")]) == 64


@pytest.mark.parametrize("argv", [["bogus"], ["solve"], ["converge", "--config", "x",
                                                          "--deltas", "0.1,abc"]])
def test_bad_arguments_exit_64(argv):
    with pytest.raises(SystemExit) as exc:
        cli.main(argv)
    assert exc.value.code == 64


def test_ht_prints_eta(tmp_path, capsys):
    cfg = _cfg(tmp_path, "params: {lambda1: 0.5, mu1: 1, mu2: 1, k1: 2, k2: 1}\n")
    assert cli.main(["ht", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert "eta 1\n" in capsys.readouterr().out
    rows = read_csv(tmp_path / "o" / "ht_limit_cdf.csv")
    assert list(rows[0]) == ["n1", "xi", "cdf_lo", "cdf_hi"]
    manifest = json.loads((tmp_path / "o" / "manifest_ht.json").read_text())
    assert manifest["eta"] == 1.0 and "tail_mass" in manifest and "residuals" in manifest


def test_ht_outside_regime_prints_eta_then_fails(tmp_path, capsys):
    cfg = _cfg(tmp_path, "params: {lambda1: 0.5, mu1: 1, mu2: 1}\n")
    assert cli.main(["ht", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "eta 1\n" in capsys.readouterr().out


@pytest.mark.slow
def test_solve_then_simulate_tv(tmp_path, capsys):
    cfg = _cfg(tmp_path, GOOD + "solve: {n1max: 80, n2max: 80}\n"
               "simulate: {horizon: 1.0e+6, warmup: 1000, compare_exact: true}\n")
    out = tmp_path / "o"
    assert cli.main(["solve", "--config", cfg, "--out", str(out)]) == 0
    assert cli.main(["simulate", "--config", cfg, "--out", str(out), "--seed", "9"]) == 0
    m = json.loads((out / "manifest_simulate.json").read_text())
    assert m["seed"] == 9 and m["tv_exact_vs_sim"] < 0.01
    m = json.loads((out / "manifest_solve.json").read_text())
    assert m["residuals"]["stationary"] < 1e-10 and m["tail_mass"] < 1e-6
    assert m["truncation"] == {"n1max": 80, "n2max": 80, "boundary_policy": "reflecting"}
    rows = read_csv(out / "stationary.csv")
    assert list(rows[0]) == ["n1", "n2", "h", "probability"]


def test_solve_refuses_unstable(tmp_path):
    cfg = _cfg(tmp_path, "params: {lambda1: 0.6, lambda2: 0.5, mu1: 1, mu2: 1}\n")
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == 2


def test_vacation_outputs(tmp_path):
    cfg = _cfg(tmp_path, GOOD + "vacation: {nmax: 50}\n")
    assert cli.main(["vacation", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    assert len(read_csv(tmp_path / "o" / "vacation_pmf.csv")) == 51
    m = json.loads((tmp_path / "o" / "manifest_vacation.json").read_text())
    assert m["residuals"]["relation"] < 1e-10 and len(m["unknowns"]) == 2


def test_converge_matches_harness(tmp_path):
    cfg = _cfg(tmp_path, "params: {lambda1: 0.3, mu1: 1, mu2: 1, k1: 2, k2: 1}\n")
    out = tmp_path / "o"
    assert cli.main(["converge", "--config", cfg, "--out", str(out), "--deltas", "0.2,0.1"]) == 0
    rows = read_csv(out / "convergence.csv")
    ref = harness.converge_exact(PerturbationPath(0.3, 1, 1, 2, 1), [0.2, 0.1])
    for row, r in zip(rows, ref.rows):
        for col in ("delta", "tv_n1", "ks_xi", "indep_gap", "tail_mass"):
            assert float(row[col]) == getattr(r, col)


@pytest.mark.parametrize("exc, code", [(NumericalError("x"), 3), (AccuracyError("x"), 4)])
def test_error_classes_map_to_exit_codes(tmp_path, monkeypatch, exc, code):
    def boom(*args, **kwargs):
        raise exc
    monkeypatch.setattr(ctmc, "solve_polling", boom)
    cfg = _cfg(tmp_path, GOOD)
    assert cli.main(["solve", "--config", cfg, "--out", str(tmp_path / "o")]) == code


def test_module_entry_point(tmp_path):
    cfg = _cfg(tmp_path, GOOD)
    res = subprocess.run([sys.executable, "-m", "kpolling", "validate", "--config", cfg],
                         capture_output=True, text=True)
    assert res.returncode == 0 and "stable" in res.stdout
