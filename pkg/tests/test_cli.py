import json
import subprocess
import sys
from pathlib import Path

from laplacegreen.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(tmp_path, text, command, *flags, name="run.yaml"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / "out"
    code = main([command, "--config", str(cfg), "--out", str(out), *flags])
    summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else None
    return code, out, summary


AUTONOMOUS = """model: {kind: autonomous, dim: 16, time_step: 1.0}
initial_state: {kind: random}
T_grid: [0.5, 1, 5, 20]
seed: 4
"""


def test_verify_identity_autonomous(tmp_path):
    code, out, s = run(tmp_path, AUTONOMOUS, "verify-identity", "--tol", "1e-8")
    assert code == 0 and s["passed"]
    lines = (out / "verify_identity.csv").read_text().splitlines()
    assert lines[0].startswith("# command: verify-identity")
    assert any(l.startswith("# config_hash: ") for l in lines)
    assert any(l.startswith("# tool_version: ") for l in lines)
    assert "T,L_time,L_green,rel_err,leakage,m_max,N_E" in lines


def test_verify_identity_tiny_grid_fails_with_diagnostic(tmp_path, capsys):
    code, out, s = run(tmp_path, (CONFIGS / "rotor_cosine.yaml").read_text(), "verify-identity",
                       "--n-e", "16")
    assert code == 1
    assert any("quadrature-suspect" in d for d in s["diagnostics"])
    assert "quadrature-suspect" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    code, _, _ = run(tmp_path, "model: {kind: autonomous}\nT_grid: []\n", "verify-identity")
    assert code == 2
    assert "run.yaml:2:1: T_grid: T_grid must not be empty" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    assert main(["sweep", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_sweep_columns_and_determinism(tmp_path):
    text = """model: {kind: rank_one_kicked, dim: 64, kappa: 0.3}
T_grid: [2, 4, 8]
n_e: 256
"""
    a = tmp_path / "a"
    b = tmp_path / "b"
    a.mkdir(), b.mkdir()
    _, o1, _ = run(a, text, "sweep", "--threads", "1")
    _, o8, _ = run(b, text, "sweep", "--threads", "8")
    t1 = (o1 / "sweep.csv").read_bytes()
    assert t1 == (o8 / "sweep.csv").read_bytes()
    assert b"\nT,L_green,L_time,C,leakage\n" in t1


def test_rotor_sweep_slope(tmp_path):
    text = """model: {kind: rotor, half_width: 512, potential: {kind: linear, k: 1}}
probe: {q: 1}
T_grid: [5, 10, 20, 40]
n_e: 64
"""
    code, _, s = run(tmp_path, text, "sweep")
    assert code == 0
    assert abs(s["slope_L_green"] - 2) < 0.1 and abs(s["slope_L_time"] - 2) < 0.1


def test_exponents_from_csv(tmp_path):
    series = tmp_path / "ones.csv"
    series.write_text("# constant\nm,h\n" + "".join(f"{m},1\n" for m in range(200001)))
    text = "model: {kind: autonomous, dim: 2}\nT_grid: {start: 100, stop: 10000, num: 8}\n"
    code, _, s = run(tmp_path, text, "exponents", "--series", str(series))
    assert code == 0
    assert abs(s["exponents"]["beta_e_plus"] - 1) < 0.01


def test_exponents_malformed_csv(tmp_path):
    series = tmp_path / "bad.csv"
    series.write_text("m,h\n0,1\n1\n")
    code, _, _ = run(tmp_path, "model: {kind: autonomous, dim: 2}\nT_grid: [1,2,3,4,5,6]\n",
                     "exponents", "--series", str(series))
    assert code == 2


def test_exponents_sparse_flag(tmp_path):
    code, _, s = run(tmp_path, (CONFIGS / "exponents_sparse.yaml").read_text(), "exponents")
    ex = s["exponents"]
    assert code == 0 and ex["bounded_average_unbounded_sequence"]
    assert abs(ex["beta_d_plus"] - 1) < 0.05


def test_exponents_rotor_series(tmp_path):
    text = """model: {kind: rotor, half_width: auto, potential: {kind: linear, k: 1}}
probe: {q: 1}
T_grid: {start: 50, stop: 800, num: 6}
"""
    code, _, s = run(tmp_path, text, "exponents")
    assert code == 0 and abs(s["exponents"]["beta_d_plus_normalized"] - 2) < 0.05


def test_oracle_compare_suite(tmp_path):
    code, out, s = run(tmp_path, (CONFIGS / "oracles.yaml").read_text(), "oracle-compare")
    assert code == 0 and s["failing"] == []
    assert s["n_fixtures"] == 6


def test_oracle_compare_corrupted_level(tmp_path, capsys):
    chi = list(range(1, 33))
    chi[4] = 5.5
    text = f"""model: {{kind: autonomous, dim: 2}}
T_grid: [1]
fixtures:
  - name: corrupted
    oracle: kicked_ho
    model: {{kind: rank_one_kicked, dim: 32, kappa: 0.25, chi: {chi}}}
    T_grid: [1, 10]
    tol: 1.0e-4
"""
    code, _, s = run(tmp_path, text, "oracle-compare")
    assert code == 1
    assert s["failing"] == ["corrupted (kicked_ho)"]
    assert "FAIL corrupted (kicked_ho)" in capsys.readouterr().err


def test_oracle_compare_empty(tmp_path):
    code, out, s = run(tmp_path, "model: {kind: autonomous, dim: 2}\nT_grid: [1]\n", "oracle-compare")
    assert code == 0 and s["n_fixtures"] == 0


def test_oracle_mismatched_model(tmp_path):
    text = """model: {kind: autonomous, dim: 2}
T_grid: [1]
fixtures:
  - {name: x, oracle: shift, model: {kind: autonomous, dim: 4}}
"""
    code, _, _ = run(tmp_path, text, "oracle-compare")
    assert code == 2


def test_shift_check(tmp_path):
    code, out, s = run(tmp_path, (CONFIGS / "shift.yaml").read_text(), "shift-check")
    assert code == 0 and s["max_defect"] <= 1e-12
    rows = (out / "shift_check.csv").read_text().splitlines()
    assert len([r for r in rows if not r.startswith("#")]) == 1 + 18


def test_certificate(tmp_path):
    code, out, s = run(tmp_path, (CONFIGS / "certificate.yaml").read_text(), "certificate")
    assert code == 0 and s["unsound_T"] == []
    records = [l for l in (out / "certificate.txt").read_text().splitlines() if not l.startswith("#")]
    assert len(records) == 4 and records[0].startswith("T=2,N=2,hypothesis_ok=1,bound=")


def test_certificate_needs_section(tmp_path):
    code, _, _ = run(tmp_path, AUTONOMOUS, "certificate")
    assert code == 2


def test_module_entry_point(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(AUTONOMOUS)
    r = subprocess.run([sys.executable, "-m", "laplacegreen", "verify-identity", "--config", str(cfg),
                        "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "verify_identity.csv" in r.stdout
