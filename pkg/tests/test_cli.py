import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from robust_precoding.cli import main

SWEEP = ["--trials", "2", "--targets-db", "0,6", "--oracle-samples", "500"]


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_sweep_requires_seed(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sweep-sinr", *SWEEP])
    assert "--seed" in str(exc.value)


def test_sweep_stdout_header_and_determinism(capsys):
    c1, a, _ = run(["sweep-sinr", "--seed", "1", *SWEEP], capsys)
    c2, b, _ = run(["sweep-sinr", "--seed", "1", *SWEEP], capsys)
    assert c1 == c2 == 0 and a == b
    assert a.splitlines()[0] == "trial,method,delta,target_db,verdict,power,max_cert_mse,wall_ms"


def test_timing_fills_wall_time(capsys):
    _, out, _ = run(["sweep-sinr", "--seed", "1", "--timing", *SWEEP, "--methods", "perfect-csi"],
                    capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert all(float(r["wall_ms"]) > 0 for r in rows)


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "study.cfg"
    cfg.write_text("seed = 5\ntrials = 3\ntargets_db = 4\nmethods = perfect-csi\n")
    out = tmp_path / "t.csv"
    summ = tmp_path / "s.csv"
    code, _, _ = run(["sweep-sinr", "--config", str(cfg), "--trials", "2", "--out", str(out),
                      "--summary", str(summ)], capsys)
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 2 and {r["target_db"] for r in rows} == {"4"}
    summary = list(csv.DictReader(summ.open()))
    assert summary[0]["feasible_fraction"] == "1"


def test_design_verify_simulate_round_trip(tmp_path, capsys):
    npz = tmp_path / "d.npz"
    code, out, _ = run(["design", "--seed", "3", "--method", "thp-robust-order1", "--save", str(npz)],
                       capsys)
    report = json.loads(out)
    assert code == 0 and report["feasible"] and report["power"] > 0
    code, out, _ = run(["verify", str(npz), "--oracle-samples", "2000"], capsys)
    assert code == 0 and out.count("pass") == 3
    # a larger region than the design was built for fails certification
    code, out, _ = run(["verify", str(npz), "--delta", "0.3", "--oracle-samples", "2000"], capsys)
    assert code == 1 and "FAIL" in out
    code, out, err = run(["simulate", str(npz), "--symbols", "5000", "--qam", "16"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 3
    assert all(abs(float(r["mse"]) / float(r["analytic_mse"]) - 1) < 0.2 for r in rows)
    assert "tx_power" in err


def test_design_from_channel_file(tmp_path, capsys):
    ch = tmp_path / "h.txt"
    ch.write_text("# one user per line\n1+0.2j, 0.3\n-0.1j 0.9\n")
    code, out, _ = run(["design", "--channel", str(ch), "--delta", "0.05", "--target-db", "3"], capsys)
    assert code == 0 and json.loads(out)["feasible"]
    np.save(tmp_path / "h.npy", np.array([[1.0 + 0.2j, 0.3], [-0.1j, 0.9]]))
    code, out2, _ = run(["design", "--channel", str(tmp_path / "h.npy"), "--delta", "0.05",
                         "--target-db", "3"], capsys)
    assert json.loads(out2)["power"] == pytest.approx(json.loads(out)["power"], rel=1e-9)


def test_infeasible_design_exit_code(capsys):
    code, out, _ = run(["design", "--seed", "0", "--delta", "5.0"], capsys)
    assert code == 1 and json.loads(out)["status"] == "infeasible"


def test_bad_config_value_is_reported(capsys):
    code, _, err = run(["sweep-sinr", "--seed", "1", "--methods", "nope", *SWEEP], capsys)
    assert code == 2 and "unknown methods" in err


def test_maxdelta_and_minimax_commands(capsys):
    code, out, _ = run(["maxdelta", "--seed", "2", "--trials", "1", "--targets-db", "6",
                        "--methods", "linear-robust"], capsys)
    assert code == 0 and out.splitlines()[0].startswith("trial,method,target_db,delta_max")
    code, out, _ = run(["minimax", "--seed", "2", "--trials", "1", "--p-totals", "1",
                        "--methods", "perfect-csi", "--oracle-samples", "500"], capsys)
    assert code == 0 and len(out.splitlines()) == 2


def test_console_script_entry():
    out = subprocess.run([sys.executable, "-m", "robust_precoding.cli", "--help"],
                         capture_output=True, text=True, check=True)
    assert "sweep-sinr" in out.stdout
