from __future__ import annotations

import csv
import filecmp
import json

import pytest

from fransonsim import cli
from fransonsim.ftag import read_ftag


def run(*argv) -> int:
    return cli.main([str(a) for a in argv])


def header(path) -> list[str]:
    with open(path, newline="") as fh:
        return next(csv.reader(fh))


def test_spectrum_writes_two_column_csv(tmp_path, capsys):
    assert run("spectrum", "--out-dir", tmp_path, "--points", 501) == 0
    assert header(tmp_path / "spectrum.csv") == ["wavelength_nm", "transmission"]
    rows = list(csv.reader((tmp_path / "spectrum.csv").open()))[1:]
    assert len(rows) == 501
    assert all(0.0 <= float(t) <= 1.0 for _, t in rows)
    info = json.loads((tmp_path / "spectrum.json").read_text())
    assert info["pair_rate_1mw_hz"] == pytest.approx(5.8e6)
    assert "coherence_time_ps" in capsys.readouterr().out


def test_simulate_then_histogram(tmp_path):
    sim = tmp_path / "sim"
    assert run("simulate", "--out-dir", sim, "--seed", 7) == 0
    a, b = read_ftag(sim / "signal.ftag"), read_ftag(sim / "idler.ftag")
    assert (a.channel, b.channel) == (1, 2)
    assert len(a) > 0 and len(b) > 0
    meta = json.loads((sim / "streams.json").read_text())
    assert meta["signal_clicks"] == len(a)
    assert (sim / "config.json").exists() and (sim / "provenance.json").exists()

    hist = tmp_path / "hist"
    assert run("histogram", sim / "signal.ftag", sim / "idler.ftag", "--out-dir", hist) == 0
    assert header(hist / "histogram.csv") == ["bin_center_ps", "counts"]
    info = json.loads((hist / "histogram.json").read_text())
    assert info["peak_centers_ps"] == [2830, 3500, 4170]
    assert info["peaks"]["c_center"] > info["peaks"]["c_accidental"]


def test_simulate_is_deterministic(tmp_path):
    assert run("simulate", "--out-dir", tmp_path / "a", "--seed", 3) == 0
    assert run("simulate", "--out-dir", tmp_path / "b", "--seed", 3) == 0
    assert run("simulate", "--out-dir", tmp_path / "c", "--seed", 4) == 0
    assert filecmp.cmp(tmp_path / "a" / "signal.ftag", tmp_path / "b" / "signal.ftag", shallow=False)
    assert not filecmp.cmp(tmp_path / "a" / "signal.ftag", tmp_path / "c" / "signal.ftag", shallow=False)


def test_scan_phase_then_analyze_and_report(tmp_path, capsys):
    scan = tmp_path / "scan"
    assert run("scan-phase", "--out-dir", scan) == 0
    assert "V_meas" in capsys.readouterr().out
    assert header(scan / "fringe.csv") == ["phase_deg", "counts"]

    fit_dir = tmp_path / "fit"
    assert run("analyze", scan / "fringe.csv", "--out-dir", fit_dir) == 0
    refit = json.loads((fit_dir / "fit.json").read_text())
    summary = json.loads((scan / "summary.json").read_text())
    assert refit["v_meas"] == pytest.approx(summary["fit"]["v_meas"], rel=1e-9)

    capsys.readouterr()
    assert run("report", scan) == 0
    assert "fit.v_meas" in capsys.readouterr().out


def test_scan_power_and_report(tmp_path, capsys):
    assert run("scan-power", "--out-dir", tmp_path, "--powers", 1.5, 2.0) == 0
    printed = capsys.readouterr().out
    for name in ("report.json", "report.csv", "report.txt"):
        assert (tmp_path / name).exists()
    assert header(tmp_path / "report.csv")[0] == "pump_power_mw"
    assert run("report", tmp_path) == 0
    assert capsys.readouterr().out == printed


def test_stabilize_closed_and_open_loop(tmp_path):
    assert run("stabilize", "--out-dir", tmp_path / "c", "--steps", 2000) == 0
    assert run("stabilize", "--out-dir", tmp_path / "o", "--steps", 2000, "--open-loop") == 0
    assert header(tmp_path / "c" / "stabilization.csv") == ["step", "drift_nm", "actuation_nm", "residual_nm", "residual_deg"]
    closed = json.loads((tmp_path / "c" / "stabilization.json").read_text())
    opened = json.loads((tmp_path / "o" / "stabilization.json").read_text())
    assert closed["rms_nm"] < 1.0 < opened["rms_nm"]


def test_full_loss_profile_loads(tmp_path):
    assert run("spectrum", "--profile", "paper", "--out-dir", tmp_path, "--points", 11) == 0
    cfg = json.loads((tmp_path / "spectrum.json").read_text())
    assert cfg["coherence_time_ps"] == pytest.approx(12.34, abs=0.01)


# exit code 2: invalid input ----------------------------------------------


def test_unknown_config_key_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"losses_db": {"splitter": -1.0}, "bogus": 1}))
    assert run("scan-phase", "--config", bad, "--out-dir", tmp_path) == 2
    err = capsys.readouterr().err
    assert "losses_db.splitter" in err and "bogus" in err


def test_malformed_json_exits_2(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("spectrum", "--config", bad, "--out-dir", tmp_path) == 2


def test_bad_ftag_exits_2(tmp_path):
    junk = tmp_path / "junk.ftag"
    junk.write_bytes(b"XXXX\x01\x01")
    assert run("histogram", junk, junk, "--out-dir", tmp_path) == 2


def test_missing_run_dir_exits_2(tmp_path):
    assert run("report", tmp_path / "nothing") == 2


def test_bad_fringe_csv_exits_2(tmp_path):
    f = tmp_path / "f.csv"
    f.write_text("a,b\n1,2\n")
    assert run("analyze", f, "--out-dir", tmp_path) == 2


def test_usage_error_exits_2():
    assert run("no-such-command") == 2
    assert run("scan-phase", "--profile", "lab") == 2


# exit code 3: runtime / statistical failure -------------------------------


def test_zero_pump_exits_3(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"pump_power_mw": 0.0}))
    assert run("scan-phase", "--config", cfg, "--out-dir", tmp_path) == 3
    assert "pump" in capsys.readouterr().err


def test_lost_fringe_exits_3(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"stabilization": {"fringe_amplitude_counts": 0.0}}))
    assert run("stabilize", "--config", cfg, "--out-dir", tmp_path, "--steps", 200) == 3
