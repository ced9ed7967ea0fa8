"""CLI front end: commands, exit codes, artifacts and determinism."""

import csv
import json
from pathlib import Path

import pytest

from rbsde.cli import main

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_solve_one_counterexample(tmp_path, capsys):
    code = run("solve-one", "--config", CONFIGS / "counterexample.json",
               "--out", tmp_path)
    assert code == 0
    rows = read_csv(tmp_path / "summary.csv")
    jump_row = next(r for r in rows if float(r["time"]) == 0.5)
    assert float(jump_row["kd_increment"]) == pytest.approx(0.5, abs=1e-12)
    assert float(jump_row["y_mean"]) == pytest.approx(0.5, abs=1e-12)
    early = next(r for r in rows if float(r["time"]) == 0.25)
    assert float(early["y_mean"]) == pytest.approx(1.0, abs=1e-12)
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] is True
    solution = json.loads((tmp_path / "solution.json").read_text())
    assert solution["summary"]["expected_terminal_kd"] == pytest.approx(0.5)


def test_terminal_below_barrier_exits_3(tmp_path, capsys):
    config = {
        "grid": {"steps": 4},
        "terminal": {"kind": "constant", "value": -0.5},
        "driver": {},
        "barrier": {"pieces": [[0.0, 0.0]]},
        "solver": {"kind": "one_barrier"},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config))
    assert run("solve-one", "--config", path, "--out", tmp_path / "out") == 3
    assert "TerminalBelowBarrier" in capsys.readouterr().err


def test_infeasible_intensity_exits_3(tmp_path, capsys):
    config = {
        "grid": {"steps": 1},
        "marks": [{"size": 1.0, "intensity": 1.1}],
        "terminal": {"kind": "constant", "value": 0.5},
        "driver": {},
        "barrier": {"pieces": [[0.0, 0.0]]},
        "solver": {"kind": "one_barrier"},
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(config))
    assert run("solve-one", "--config", path, "--out", tmp_path / "out") == 3
    assert "InfeasibleIntensity" in capsys.readouterr().err


def test_schema_violation_exits_2(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"grid": {"steps": 0}}))
    assert run("solve-one", "--config", path, "--out", tmp_path / "out") == 2


def test_solver_kind_mismatch_exits_2(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({
        "grid": {"steps": 2},
        "terminal": {"kind": "constant", "value": 0.0},
        "driver": {},
        "solver": {"kind": "one_barrier"},
    }))
    assert run("solve-one", "--config", path, "--out", tmp_path / "out") == 2


def test_verify_round_trip_and_tamper(tmp_path):
    out = tmp_path / "out"
    assert run("solve-one", "--config", CONFIGS / "counterexample.json",
               "--out", out) == 0
    verify_out = tmp_path / "verify"
    assert run("verify", "--config", CONFIGS / "counterexample.json",
               "--solution", out / "solution.json", "--out", verify_out) == 0
    assert (out / "report.json").read_bytes() == (verify_out / "report.json").read_bytes()

    payload = json.loads((out / "solution.json").read_text())
    payload["nodes"]["k"][4] = [v + 0.1 for v in payload["nodes"]["k"][4]]
    tampered = tmp_path / "tampered.json"
    tampered.write_text(json.dumps(payload))
    assert run("verify", "--config", CONFIGS / "counterexample.json",
               "--solution", tampered, "--out", tmp_path / "v2") == 4


def test_byte_identical_outputs(tmp_path):
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert run("solve-one", "--config", CONFIGS / "counterexample.json",
                   "--out", out) == 0
    for name in ("solution.json", "report.json", "summary.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_solve_two_band(tmp_path):
    assert run("solve-two", "--config", CONFIGS / "two_barrier_band.json",
               "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "summary.csv")
    assert "k_plus_mean" in rows[0]
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["passed"] is True


def test_solve_two_one_sided_transplant(tmp_path):
    config = {
        "grid": {"steps": 4},
        "terminal": {"kind": "constant", "value": 0.5},
        "driver": {},
        "barriers": {
            "lower": {"pieces": [[0.0, 1.0], [0.5, -10.0]]},
            "upper": {"pieces": [[0.0, 10.0]]},
        },
        "solver": {"kind": "two_barrier"},
    }
    path = tmp_path / "transplant.json"
    path.write_text(json.dumps(config))
    assert run("solve-two", "--config", path, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "summary.csv")
    assert all(float(r["k_minus_mean"]) == 0.0 for r in rows)
    jump_row = next(r for r in rows if float(r["time"]) == 0.5)
    assert float(jump_row["k_plus_d_increment"]) == pytest.approx(0.5, abs=1e-12)


def test_penalize_sweep_counterexample(tmp_path):
    assert run("penalize-sweep", "--config", CONFIGS / "counterexample.json",
               "--out", tmp_path, "--n-list", "1,2,4,8,16,32") == 0
    rows = read_csv(tmp_path / "sweep.csv")
    roots = [float(r["y0"]) for r in rows]
    assert all(b > a for a, b in zip(roots, roots[1:]))
    gaps = [float(r["sup_gap"]) for r in rows]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_snell_command(tmp_path):
    assert run("snell", "--config", CONFIGS / "counterexample.json",
               "--out", tmp_path) == 0
    payload = json.loads((tmp_path / "snell.json").read_text())
    assert payload["value"] == pytest.approx(1.0, abs=1e-12)
    assert payload["kd_mass"] == pytest.approx(0.5, abs=1e-12)
    assert payload["regular"] is False


def test_contraction_study(tmp_path):
    assert run("contraction-study", "--config", CONFIGS / "contraction.json",
               "--out", tmp_path, "--alpha-list", "2.0,8.0") == 0
    rows = read_csv(tmp_path / "contraction.csv")
    assert len(rows) == 2
    assert all(r["converged"] == "true" for r in rows)
    assert all(float(r["max_ratio"]) < 1.0 for r in rows)
