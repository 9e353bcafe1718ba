import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from coordreg.cli import run_command, trace_header, write_trace_csv
from coordreg.scenario import preset_document
from coordreg.sim import SimTrace


def test_check_preset(capsys):
    assert run_command(["check", "example1"]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out and "PASS  agent3.non_resonance" in out


def test_check_file(tmp_path):
    path = tmp_path / "example1.json"
    assert run_command(["preset", "example1", "-o", str(path)]) == 0
    assert run_command(["check", str(path)]) == 0


def test_check_broken_adjacency(tmp_path, capsys):
    doc = preset_document("example1")
    doc["graphs"][0][0][0] = 1
    path = tmp_path / "broken.json"
    path.write_text(json.dumps(doc))
    assert run_command(["check", str(path)]) == 2
    assert "diagonal" in capsys.readouterr().err


def test_check_failed_assumption(tmp_path):
    doc = preset_document("example1")
    doc["agents"][1]["D_s"] = [[0, 0]]
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert run_command(["check", str(path)]) == 1


def test_input_errors(tmp_path):
    assert run_command(["check", str(tmp_path / "missing.json")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run_command(["check", str(bad)]) == 2
    assert run_command(["frobnicate"]) == 2
    assert run_command(["simulate", "example1", "--epsilon", "3"]) == 2


def test_certify_warns(capsys):
    assert run_command(["certify", "example1"]) == 0
    out = capsys.readouterr().out
    assert "kappa_achieved  = 9" in out
    assert "WARN" in out


def test_certify_json(tmp_path):
    out = tmp_path / "cert.json"
    assert run_command(["certify", "example3", "-o", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["kappa_achieved"] == 9
    assert doc["kappa_ok"] is False


def test_synthesize_then_simulate_with_gains(tmp_path):
    gains = tmp_path / "gains.json"
    assert run_command(["synthesize", "example3", "-o", str(gains)]) == 0
    doc = json.loads(gains.read_text())
    assert doc["mode"] == "CASE2" and len(doc["agents"]) == 3
    assert doc["agents"][2]["Gamma1"] == [[pytest.approx(2.0)]]
    trace = tmp_path / "t.csv"
    code = run_command(["simulate", "example3", "--gains", str(gains), "--horizon", "40", "-o", str(trace)])
    assert code == 0


def test_simulate_tolerance_exit_code(tmp_path):
    trace = tmp_path / "t.csv"
    assert run_command(["simulate", "example2", "--horizon", "1", "--tol", "1e-9", "-o", str(trace)]) == 1
    assert run_command(["simulate", "example2", "--horizon", "40", "--tol", "1e-2", "-o", str(trace)]) == 0


def test_simulate_design_error_exit_code(tmp_path):
    # agent 1 is not observable from C_d alone, so the CASE2 design is impossible
    assert run_command(["simulate", "example1", "--mode", "CASE2", "-o", str(tmp_path / "t.csv")]) == 1


def test_simulate_csv_contract(tmp_path):
    trace = tmp_path / "t.csv"
    plot = tmp_path / "t.gp"
    assert run_command(["simulate", "example1", "--horizon", "20", "-o", str(trace), "--gnuplot", str(plot)]) == 0
    raw = trace.read_bytes()
    assert b"\r" not in raw
    rows = list(csv.reader(raw.decode().splitlines()))
    assert rows[0] == ["t", "sigma", "e1_1", "e2_1", "e3_1", "obs_err_1", "obs_err_2", "obs_err_3"]
    assert {len(r) for r in rows} == {8}
    by_t = {r[0]: r for r in rows[1:]}
    assert by_t["19.99"][1] == "4"
    assert by_t["6.0"][1] == "2"
    times = [float(r[0]) for r in rows[1:]]
    assert times == sorted(times) and times[-1] == 20.0
    assert "plot" in plot.read_text()


def test_csv_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    t = np.cumsum(rng.uniform(0.01, 0.1, 30))
    e = rng.standard_normal((30, 2, 2)) * 10.0 ** rng.integers(-15, 5, (30, 2, 2))
    obs = np.abs(rng.standard_normal((30, 2)))
    tr = SimTrace(t, rng.integers(1, 5, 30), e, np.zeros((30, 2, 1)), obs, np.zeros((30, 0)))
    path = tmp_path / "r.csv"
    write_trace_csv(tr, path)
    rows = list(csv.reader(path.read_text().splitlines()))
    assert rows[0] == ["t", "sigma", "e1_1", "e1_2", "e2_1", "e2_2", "obs_err_1", "obs_err_2"]
    data = np.array([[float(x) for x in r] for r in rows[1:]])
    assert np.array_equal(data[:, 0], t)
    assert np.array_equal(data[:, 2:6], e.reshape(30, -1))
    assert np.array_equal(data[:, 6:], obs)


def test_empty_trace_header_only(tmp_path):
    z = np.zeros(0)
    tr = SimTrace(z, z.astype(int), np.zeros((0, 3, 1)), np.zeros((0, 3, 1)), np.zeros((0, 3)), np.zeros((0, 5)))
    path = tmp_path / "e.csv"
    write_trace_csv(tr, path)
    assert path.read_text() == ",".join(trace_header(tr)) + "\n"


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "coordreg.cli", "check", "example2"], capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
