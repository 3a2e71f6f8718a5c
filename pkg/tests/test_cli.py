import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from goldilocks.cli import EXIT_CONFIG, EXIT_NO_DOSE, main
from goldilocks.config import patient_a_document


def read_table(path):
    lines = path.read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.reader(ln for ln in lines if not ln.startswith("#")))
    return meta, rows[0], rows[1:]


def write_config(tmp_path, **updates):
    doc = patient_a_document()
    doc.update(updates)
    path = tmp_path / "run.config"
    path.write_text(json.dumps(doc))
    return path


def run(args, capsys):
    code = main(args)
    out, err = capsys.readouterr()
    return code, out, err


def test_simulate_untreated(tmp_path, capsys):
    code, _, err = run(["simulate", "--out", str(tmp_path), "--horizon", "200"], capsys)
    assert code == 0 and err == ""
    meta, header, rows = read_table(tmp_path / "patient_a_simulate_trajectory.csv")
    assert header == ["time", "U", "I", "V", "D", "eta", "event"]
    assert any("rtol=1e-09" in m for m in meta)
    assert float(rows[-1][1]) == pytest.approx(2.57e5, rel=0.05)
    report = json.loads((tmp_path / "patient_a_simulate_report.json").read_text())
    obs = report["observables"]
    assert obs["u_infinity_predicted"]["method"] == "closed-form"
    assert obs["u_infinity_simulated"]["method"] == "simulation"
    assert obs["auc_v"]["value"] == pytest.approx(obs["auc_v_identity"]["value"], rel=5e-3)
    assert report["software"]["version"] and report["integrator"]["rtol"] == 1e-9
    assert report["warnings"] == []


def test_global_flags_before_or_after_command(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["--out", str(a), "--horizon", "50", "simulate"], capsys)[0] == 0
    assert run(["simulate", "--out", str(b), "--horizon", "50"], capsys)[0] == 0
    assert (a / "patient_a_simulate_trajectory.csv").read_text() == (b / "patient_a_simulate_trajectory.csv").read_text()


def test_equilibrium_config_gives_constant_table(tmp_path, capsys):
    cfg = write_config(tmp_path, initial_state={"u": 1e6, "i": 0, "v": 0, "d": 0}, horizon=10.0)
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)[0] == 0
    _, _, rows = read_table(tmp_path / "patient_a_simulate_trajectory.csv")
    values = np.array([[float(x) for x in r[1:6]] for r in rows])
    assert np.all(values == values[0])


def test_treated_peak_below_untreated(tmp_path, capsys):
    cfg = write_config(tmp_path, plan={"t_i": 4, "t_f": 30, "dose": 20}, horizon=100.0)
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "t")], capsys)[0] == 0
    assert run(["simulate", "--out", str(tmp_path / "u"), "--horizon", "100"], capsys)[0] == 0
    treated = json.loads((tmp_path / "t" / "patient_a_simulate_report.json").read_text())
    untreated = json.loads((tmp_path / "u" / "patient_a_simulate_report.json").read_text())
    assert treated["observables"]["v_peak"]["value"] < untreated["observables"]["v_peak"]["value"]
    _, _, rows = read_table(tmp_path / "t" / "patient_a_simulate_trajectory.csv")
    t = np.array([float(r[0]) for r in rows])
    d = np.array([float(r[4]) for r in rows])
    flags = np.array([int(r[6]) for r in rows])
    assert np.all(np.diff(t) >= 0)
    dup = np.flatnonzero(np.diff(t) == 0)
    assert len(dup) == 27 and np.all(d[dup + 1] > d[dup])
    assert np.all(flags[dup] == 1) and np.all(flags[dup + 1] == 2)
    assert len(set(t[dup])) == len(dup)


def test_report_echo_round_trip(tmp_path, capsys):
    cfg = write_config(tmp_path, plan={"t_i": 4, "t_f": 30, "dose": 20}, horizon=80.0)
    assert run(["simulate", "--config", str(cfg), "--out", str(tmp_path / "a"), "--rtol", "1e-8"], capsys)[0] == 0
    first = json.loads((tmp_path / "a" / "patient_a_simulate_report.json").read_text())
    echo = tmp_path / "echo.config"
    echo.write_text(json.dumps(first["inputs"]))
    assert run(["simulate", "--config", str(echo), "--out", str(tmp_path / "b")], capsys)[0] == 0
    second = json.loads((tmp_path / "b" / "patient_a_simulate_report.json").read_text())
    assert second["observables"] == first["observables"]
    assert second["integrator"] == first["integrator"]


def test_classify_prints_verdict(tmp_path, capsys):
    code, out, err = run(["classify", "--ti", "4", "--tf", "15", "--dose", "15", "--out", str(tmp_path)], capsys)
    assert code == 0 and err == ""
    assert out.strip() == "ShortTerm"
    report = json.loads((tmp_path / "patient_a_classify_report.json").read_text())
    assert report["verdict"]["kind"] == "ShortTerm"
    assert report["inputs"]["plan"] == {"t_i": 4.0, "t_f": 15.0, "dose": 15.0}


def test_classify_needs_plan(tmp_path, capsys):
    code, _, err = run(["classify", "--ti", "4", "--out", str(tmp_path)], capsys)
    assert code == EXIT_CONFIG and "plan" in err


def test_goldilocks_command(tmp_path, capsys):
    code, out, _ = run(["goldilocks", "--ti", "4", "--tf", "30", "--out", str(tmp_path), "--horizon", "200"], capsys)
    assert code == 0
    report = json.loads((tmp_path / "patient_a_goldilocks_report.json").read_text())
    dose = report["goldilocks_dose"]["value"]
    assert out.strip() == f"goldilocks dose: {dose:.3f} mg"
    obs = report["observables"]
    assert obs["u_at_tf"]["value"] > obs["u_star"]["value"]
    assert set(obs) >= {"v_at_tf", "u_infinity_predicted", "v_peak"}


def test_goldilocks_low_cap_exit_code(tmp_path, capsys):
    doc = patient_a_document()
    doc["pkpd"]["u_max"] = 1.0
    cfg = tmp_path / "cap.config"
    cfg.write_text(json.dumps(doc))
    code, _, _ = run(["goldilocks", "--config", str(cfg), "--ti", "4", "--tf", "30", "--out", str(tmp_path)], capsys)
    assert code == EXIT_NO_DOSE
    report = json.loads((tmp_path / "patient_a_goldilocks_report.json").read_text())
    assert report["goldilocks_dose"] is None


def test_goldilocks_after_prior_phase(tmp_path, capsys):
    code, _, _ = run(["goldilocks", "--ti", "30", "--tf", "60", "--prior-dose", "25",
                      "--out", str(tmp_path)], capsys)
    assert code == EXIT_NO_DOSE


def test_sweep_rows(tmp_path, capsys):
    code, _, err = run(["sweep", "--doses", "0,4,8", "--ti", "4", "--tf", "30", "--out", str(tmp_path),
                        "--horizon", "300"], capsys)
    assert code == 0 and err == ""
    _, header, rows = read_table(tmp_path / "patient_a_sweep_sweep.csv")
    assert header[:3] == ["dose", "kind", "qss"]
    assert [float(r[0]) for r in rows] == [0.0, 4.0, 8.0]
    finals = [float(r[header.index("u_infinity_simulated")]) for r in rows]
    assert finals[0] == pytest.approx(2.513e5, rel=1e-3)
    assert finals[0] < finals[1] < finals[2]


def test_phase_outputs(tmp_path, capsys):
    doc = {
        "model": {"beta": 0.5, "delta": 0.2, "p": 2.0, "c": 5.0},
        "initial_state": {"u": 2.5, "i": 0.0, "v": 0.01},
        "horizon": 80.0,
        "phase": {"u_min": 0.0, "u_max": 3.0, "v_max": 0.5, "nu": 31, "nv": 11},
        "output": {"prefix": "toy", "dt": 0.05},
    }
    cfg = tmp_path / "toy.config"
    cfg.write_text(json.dumps(doc))
    assert run(["phase", "--config", str(cfg), "--out", str(tmp_path)], capsys)[0] == 0
    _, header, rows = read_table(tmp_path / "toy_phase_level_grid.csv")
    assert header == ["U", "V", "I", "level"] and len(rows) == 31 * 11
    grid = np.array(rows, dtype=float)
    best = grid[np.argmin(grid[:, 3])]
    assert best[0] == pytest.approx(1.0) and best[1] == 0.0
    _, header, rows = read_table(tmp_path / "toy_phase_phase_trajectory.csv")
    assert header == ["time", "U", "V", "I"]
    report = json.loads((tmp_path / "toy_phase_report.json").read_text())
    assert report["grid"]["argmin"] == [pytest.approx(1.0), 0.0]


@pytest.mark.parametrize("args", [
    ["simulate", "--config", "/nonexistent/x.config"],
    ["simulate", "--rtol", "-1"],
    ["sweep", "--doses", "a,b"],
    ["sweep", "--doses", ""],
    ["frobnicate"],
    [],
])
def test_config_exit_codes(args, capsys, tmp_path):
    code, _, err = run(args + ["--out", str(tmp_path)] if args else args, capsys)
    assert code == EXIT_CONFIG
    assert err


def test_unknown_key_named_on_stderr(tmp_path, capsys):
    cfg = write_config(tmp_path, integrator={"rtol": 1e-9, "stiff": True})
    code, _, err = run(["simulate", "--config", str(cfg), "--out", str(tmp_path)], capsys)
    assert code == EXIT_CONFIG and "integrator.stiff" in err


def test_integration_failure_exit_code(tmp_path, capsys, monkeypatch):
    from goldilocks import integrator

    monkeypatch.setattr(integrator, "MAX_STEPS", 3)
    code, _, err = run(["simulate", "--out", str(tmp_path), "--horizon", "50"], capsys)
    assert code == 3 and "integration failed" in err


def test_warning_captured_in_report(tmp_path, capsys):
    code, _, err = run(["classify", "--ti", "15", "--tf", "20", "--dose", "1", "--horizon", "60",
                        "--out", str(tmp_path)], capsys)
    assert code == 0 and err == ""
    report = json.loads((tmp_path / "patient_a_classify_report.json").read_text())
    assert any("after the untreated viral peak" in w for w in report["warnings"])


def test_env_output_override(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("GOLDILOCKS_OUT", str(tmp_path / "env"))
    assert run(["simulate", "--horizon", "20"], capsys)[0] == 0
    assert (tmp_path / "env" / "patient_a_simulate_report.json").exists()


def test_console_script_is_silent_on_stderr(tmp_path):
    exe = shutil.which("goldilocks")
    cmd = [exe] if exe else [sys.executable, "-m", "goldilocks.cli"]
    proc = subprocess.run(cmd + ["simulate", "--horizon", "30", "--out", str(tmp_path)],
                          capture_output=True, text=True, timeout=120)
    assert proc.returncode == 0
    assert proc.stderr == ""
