import csv
import json
import subprocess
import sys

import pytest

from asfkit import __version__
from asfkit.cli import run


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    assert rows, f"{path} is empty"
    width = len(rows[0])
    assert all(len(r) == width for r in rows), f"ragged CSV {path}"
    return rows[0], rows[1:]


def _json(path):
    return json.loads(path.read_text())


def _manifest_ok(out, cmd):
    m = _json(out / f"{cmd}.manifest.json")
    assert m["command"] == cmd and m["version"] == __version__
    assert m["wall_time_s"] >= 0
    for f in m["outputs"]:
        if not f.endswith("manifest.json"):
            assert (out / f.split("/")[-1]).exists()
    assert m["config"]["solver"]["max_step"] == "inf"
    return m


@pytest.fixture
def tracking_toml(tmp_path):
    p = tmp_path / "tracking.toml"
    p.write_text('[system]\nname = "tracking-cubic"\nsigma = 0.0\n[tracking]\ngrid = 21\n')
    return p


# ----------------------------------------------------------------- success


def test_critical_curve(tmp_path):
    out = tmp_path / "cc"
    assert run(["critical-curve", "--mu-range", "0.5", "1.5", "--points", "3", "--out", str(out), "--jobs", "1"]) == 0
    header, rows = _rows(out / "critical_curve.csv")
    assert header == ["mu", "sigma_c", "dGdsigma"] and len(rows) == 3
    mid = [r for r in rows if float(r[0]) == 1.0][0]
    assert abs(float(mid[1]) - 0.3636) <= 1e-3
    m = _manifest_ok(out, "critical-curve")
    assert m["arguments"]["points"] == 3


def test_simulate(tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", "--sigma", "0.37", "--eps", "1e-2", "--out", str(out)]) == 0
    header, rows = _rows(out / "simulate.csv")
    assert header == ["t", "s", "x0"]
    s = [float(r[1]) for r in rows]
    assert s[0] == -1.0 and s[-1] == 1.0 and all(b > a for a, b in zip(s, s[1:]))
    summary = _json(out / "simulate.json")
    assert summary["outcome"]["branch"] in ("upper", "lower", "unresolved")
    _manifest_ok(out, "simulate")


def test_simulate_resampled(tmp_path):
    out = tmp_path / "sim"
    assert run(["simulate", "--eps", "1e-2", "--samples", "11", "--x0", "0.1", "--out", str(out)]) == 0
    _, rows = _rows(out / "simulate.csv")
    assert len(rows) == 11 and float(rows[0][2]) == 0.1


def test_heteroclinic_and_melnikov(tmp_path):
    out = tmp_path / "hm"
    assert run(["heteroclinic", "--sigma", "0.3", "--out", str(out)]) == 0
    header, rows = _rows(out / "heteroclinic.csv")
    assert header == ["t", "x0"] and all(float(r[1]) == 0.0 for r in rows)
    assert run(["melnikov", "--sigma", "0.3", "--out", str(out)]) == 0
    rep = _json(out / "melnikov.json")
    assert rep["G_eps"] < 0 and rep["quadrature_error"] >= 0


def test_gap_oracle(tmp_path):
    out = tmp_path / "gap"
    assert run(["gap-oracle", "--sigma", "0.3", "--eps", "1e-3", "5e-4", "--out", str(out)]) == 0
    header, rows = _rows(out / "gap_oracle.csv")
    assert header == ["eps", "D", "D/eps"] and len(rows) == 2
    s = _json(out / "gap_oracle.json")
    assert s["decreasing"] and max(s["relative_error"]) < 0.2


def test_tipping_scan(tmp_path):
    out = tmp_path / "scan"
    code = run(["tipping-scan", "--vary", "sigma", "--bracket", "0.36", "0.37", "--eps", "1e-3",
                "--param-tol", "1e-3", "--out", str(out)])
    assert code == 0
    s = _json(out / "tipping_scan.json")
    assert abs(s["empirical_critical"] - 0.3636) <= 0.01
    header, rows = _rows(out / "tipping_scan.csv")
    assert header == ["param", "outcome", "distance"]
    params = [float(r[0]) for r in rows]
    assert params == sorted(params)


def test_tracking_check(tmp_path, tracking_toml):
    out = tmp_path / "trk"
    assert run(["tracking-check", "--config", str(tracking_toml), "--samples", "21", "--out", str(out)]) == 0
    cert = _json(out / "tracking_certificate.json")
    assert cert["certificate"]["verified"] is True
    assert abs(cert["certificate"]["l22"] + 0.25) <= 1e-6
    _, rows = _rows(out / "tracking_omega.csv")
    assert len(rows) == 21


def test_tracking_check_unverified(tmp_path):
    out = tmp_path / "trk"
    assert run(["tracking-check", "--out", str(out)]) == 0
    cert = _json(out / "tracking_certificate.json")
    assert cert["certificate"]["verified"] is False
    assert not (out / "tracking_omega.csv").exists()


def test_charts(tmp_path):
    out = tmp_path / "ch"
    assert run(["charts", "--points", "41", "--out", str(out)]) == 0
    header, rows = _rows(out / "charts_trajectory.csv")
    assert header[:6] == ["s2", "chart", "c1", "c2", "s", "eps"] and len(rows) == 41
    assert {r[1] for r in rows} == {"K1", "K2", "K3"}
    s = _json(out / "charts.json")
    assert s["max_conjugacy_defect"] <= 1e-8
    assert s["max_roundtrip_residual"] <= 1e-12


def test_validate_config(tmp_path, tracking_toml, capsys):
    assert run(["validate-config", str(tracking_toml), "--out", str(tmp_path)]) == 0
    line = json.loads(capsys.readouterr().out.strip())
    assert line["valid"] and line["system"] == "tracking-cubic"


# ------------------------------------------------------------- determinism


def test_byte_identical_outputs(tmp_path):
    args = ["simulate", "--eps", "1e-2", "--sigma", "0.3"]
    assert run(args + ["--out", str(tmp_path / "a")]) == 0
    assert run(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "simulate.csv").read_bytes() == (tmp_path / "b" / "simulate.csv").read_bytes()
    assert b"\r\n" not in (tmp_path / "a" / "simulate.csv").read_bytes()


def test_parallel_curve_matches_serial(tmp_path):
    base = ["critical-curve", "--mu-range", "0.5", "2", "--points", "3"]
    assert run(base + ["--jobs", "1", "--out", str(tmp_path / "s")]) == 0
    assert run(base + ["--jobs", "2", "--out", str(tmp_path / "p")]) == 0
    a = _rows(tmp_path / "s" / "critical_curve.csv")[1]
    b = _rows(tmp_path / "p" / "critical_curve.csv")[1]
    assert [r[0] for r in a] == [r[0] for r in b]
    for ra, rb in zip(a, b):
        assert abs(float(ra[1]) - float(rb[1])) <= 1e-10


# -------------------------------------------------------------- exit codes


def test_broken_config_exit_two(tmp_path, capsys):
    p = tmp_path / "broken.toml"
    p.write_text("[system\nname = ")
    assert run(["validate-config", str(p)]) == 2
    assert "line" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [["bogus"], [], ["critical-curve", "--points", "3"],
                                  ["critical-curve", "--mu-range", "1", "2", "--points", "0"],
                                  ["simulate", "--jobs", "0"]])
def test_usage_errors_exit_two(argv):
    assert run(argv) == 2


def test_invalid_value_exit_two(tmp_path):
    assert run(["simulate", "--eps", "0", "--out", str(tmp_path)]) == 2
    assert run(["gap-oracle", "--eps", "1e-3", "-1e-3", "--out", str(tmp_path)]) == 2
    assert run(["charts", "--r2", "-1", "--out", str(tmp_path)]) == 2
    assert run(["critical-curve", "--mu-range", "0", "1", "--points", "2", "--out", str(tmp_path)]) == 2


def test_jobs_env(monkeypatch, tmp_path):
    monkeypatch.setenv("ASFKIT_JOBS", "zero")
    assert run(["validate-config", "--out", str(tmp_path)]) == 2


def test_computational_failure_exit_one(tmp_path, capsys):
    code = run(["tipping-scan", "--vary", "sigma", "--bracket", "0.38", "0.4", "--eps", "1e-3",
                "--out", str(tmp_path)])
    assert code == 1
    assert "SameOutcome" in capsys.readouterr().err


def test_version_and_module_entry():
    assert run(["--version"]) == 0
    res = subprocess.run([sys.executable, "-m", "asfkit.cli", "validate-config"], capture_output=True, text=True,
                         cwd="/tmp")
    assert res.returncode == 0, res.stderr
