from __future__ import annotations

import csv
import json
import shutil

import pytest

from wke import cli
from wke.acceptance import evaluate




def _load(d, name):
    return json.loads((d / name).read_text())


def test_cstar_writes_json(tmp_path):
    assert cli.main(["cstar", "--out", str(tmp_path)]) == 0
    s = _load(tmp_path, "summary.json")
    assert s["value"] == pytest.approx(0.32964, abs=1e-4)
    m = _load(tmp_path, "manifest.json")
    assert m["subcommand"] == "cstar" and m["scenario"] == "default"
    assert set(m["versions"]) >= {"wke", "python", "numpy", "scipy"}
    assert len(m["config_hash"]) == 64
    assert "summary.json" in m["artifacts"]


def test_delta1_trajectory_constant(tmp_path):
    assert cli.main(["simulate-weak", "--scenario", "delta1", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "trajectory.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 11
    for r in rows:
        assert float(r["mass"]) == pytest.approx(1.0, abs=1e-15)
        assert float(r["energy"]) == pytest.approx(1.0, abs=1e-15)
        assert float(r["dist_to_dirac"]) == pytest.approx(0.0, abs=1e-15)


def test_malformed_config_exit_1(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"horizon": -1, "samples": 1, "grid": {"h": 0}, "bogus": 3}))
    code = cli.main(["simulate-weak", "--config", str(bad), "--out", str(tmp_path / "o")])
    err = capsys.readouterr().err
    assert code == 1
    assert "bogus" in err
    assert not (tmp_path / "o" / "manifest.json").exists()


def test_field_level_messages(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"horizon": -1, "samples": 1, "grid": {"h": 0}}))
    assert cli.main(["simulate-weak", "--config", str(bad)]) == 1
    err = capsys.readouterr().err
    for field in ("horizon:", "samples:", "grid.h:"):
        assert field in err


def test_invalid_json_and_missing_file(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert cli.main(["cstar", "--config", str(p)]) == 1
    assert cli.main(["cstar", "--config", str(tmp_path / "nope.json")]) == 1
    assert cli.main(["cstar", "--scenario", "nonesuch"]) == 1
    err = capsys.readouterr().err
    assert "not valid JSON" in err and "does not exist" in err and "scenario:" in err


def test_initial_file(tmp_path):
    (tmp_path / "mu.json").write_text(json.dumps({"atoms": [[1.0, 1.0]]}))
    (tmp_path / "c.json").write_text(json.dumps({"scenario": "custom", "initial_file": "mu.json",
                                                 "grid": {"omega_cap": 4.0}, "horizon": 1.0, "samples": 3}))
    assert cli.main(["simulate-weak", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 0
    assert _load(tmp_path / "o", "manifest.json")["config"]["initial"] == {"atoms": [[1.0, 1.0]]}


def test_numerical_failure_exit_2(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"params": {"exponent": -2.0, "omegas_n": [1.0], "omegas_e": [1.0], "n_random": 1}}))
    assert cli.main(["flux", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    d = _load(tmp_path / "o", "diagnostic.json")
    assert d["error"] == "DivergentFluxError" and d["subcommand"] == "flux"
    assert "numerical failure" in capsys.readouterr().err


def test_config_hash_ignores_output_and_threads(tmp_path):
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.main(["equilibria", "--out", str(a), "--threads", "1"]) == 0
    assert cli.main(["equilibria", "--out", str(b), "--threads", "3"]) == 0
    assert cli.main(["equilibria", "--out", str(c), "--seed", "5"]) == 0
    ha, hb, hc = (_load(d, "manifest.json")["config_hash"] for d in (a, b, c))
    assert ha == hb != hc


def test_precedence(tmp_path, monkeypatch):
    cfgf = tmp_path / "c.json"
    cfgf.write_text(json.dumps({"horizon": 2.0, "seed": 1, "samples": 4}))
    monkeypatch.setenv("WKE_HORIZON", "3.0")
    monkeypatch.setenv("WKE_SEED", "2")
    args = cli.build_parser().parse_args(["simulate-weak", "--scenario", "delta1", "--config", str(cfgf),
                                          "--seed", "9"])
    cfg = cli.build_config("simulate-weak", args)
    assert cfg.horizon == 3.0  # env over file
    assert cfg.seed == 9  # flag over env
    assert cfg.samples == 4  # file over scenario default


def test_env_config_path_and_out(tmp_path, monkeypatch):
    cfgf = tmp_path / "c.json"
    cfgf.write_text(json.dumps({"seed": 4}))
    monkeypatch.setenv("WKE_CONFIG", str(cfgf))
    monkeypatch.setenv("WKE_OUT", str(tmp_path / "envout"))
    assert cli.main(["cstar"]) == 0
    assert _load(tmp_path / "envout", "manifest.json")["config"]["seed"] == 4


def test_rerun_byte_identical(tmp_path):
    for d, threads in (("a", "1"), ("b", "3")):
        assert cli.main(["simulate-lattice", "--scenario", "parity", "--out", str(tmp_path / d),
                         "--threads", threads]) == 0
    for f in (tmp_path / "a").glob("*.csv"):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()
    ma, mb = _load(tmp_path / "a", "manifest.json"), _load(tmp_path / "b", "manifest.json")
    assert ma["artifacts"] == mb["artifacts"]


def test_report_marks_missing_runs(tmp_path, capsys):
    assert cli.main(["cstar", "--out", str(tmp_path / "runs" / "c")]) == 0
    capsys.readouterr()
    assert cli.main(["report", str(tmp_path / "runs"), "--out", str(tmp_path / "rep")]) == 0
    out = capsys.readouterr().out
    assert "PASS      1" in out
    assert "NOT RUN   2" in out and "flux/kz" in out
    rep = _load(tmp_path / "rep", "report.json")
    assert rep[0]["status"] == "pass" and rep[1]["status"] == "not run"
    assert (tmp_path / "rep" / "report.txt").read_text() == out


@pytest.mark.slow
def test_report_all_pass(acceptance_runs, tmp_path, capsys):
    root, _ = acceptance_runs
    assert cli.main(["report", str(root), "--out", str(tmp_path)]) == 0
    assert "15/15 criteria pass" in capsys.readouterr().out


@pytest.mark.slow
def test_report_detects_tampered_mass(acceptance_runs, tmp_path):
    root, _ = acceptance_runs
    src = root / "simulate-weak-smooth"
    dst = tmp_path / "runs" / "smooth"
    shutil.copytree(src, dst)
    path = dst / "trajectory.csv"
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    j = rows[0].index("mass")
    rows[-1][j] = repr(float(rows[-1][j]) * 1.01)
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)
    c5 = next(c for c in evaluate([tmp_path / "runs"]) if c.number == 5)
    assert c5.status == "fail"
    assert next(c for c in evaluate([src]) if c.number == 5).status == "pass"


def test_help_lists_subcommands(capsys):
    with pytest.raises(SystemExit):
        cli.main(["--help"])
    out = capsys.readouterr().out
    for c in ("simulate-mild", "simulate-weak", "simulate-lattice", "pulsate", "coagfrag", "flux", "cstar",
              "equilibria", "report"):
        assert c in out
