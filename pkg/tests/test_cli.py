import csv
import json
from pathlib import Path

import pytest

from rdforms.cli import load_schema, main

DOCS = Path(__file__).resolve().parents[1] / "docs"


def write(tmp_path, obj, name="model.json"):
    p = tmp_path / name
    p.write_text(json.dumps(obj))
    return str(p)


def tiny_obj():
    return json.loads((DOCS / "tiny.json").read_text())


def test_schema_copy_in_docs_matches_package():
    assert json.loads((DOCS / "model.schema.json").read_text()) == load_schema()


def test_check_tiny(capsys):
    assert main(["check", str(DOCS / "tiny.json")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["checks"]["passed"]
    assert out["checks"]["flux_symmetry"]["max_residual"] <= 1e-15


def test_check_broken_balance(tmp_path, capsys):
    obj = tiny_obj()
    obj["chain"]["rho"] = [0.5, 0.25, 0.25]
    assert main(["check", write(tmp_path, obj)]) == 1
    captured = capsys.readouterr()
    assert "(H1)" in captured.err
    assert json.loads(captured.out)["checks"]["H1"]["max_residual"] == pytest.approx(0.25)


def test_malformed_json(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text("{bad")
    assert main(["check", str(p)]) == 2


def test_schema_violation_reports_pointer(tmp_path, capsys):
    obj = tiny_obj()
    obj["measures"]["mu1"] = "uniform"
    assert main(["check", write(tmp_path, obj)]) == 2
    assert "/measures" in capsys.readouterr().err


def test_cross_field_errors(tmp_path):
    obj = tiny_obj()
    obj["measures"]["mu1"] = [0.2, 0.3, 0.5]
    assert main(["check", write(tmp_path, obj)]) == 2
    obj = tiny_obj()
    obj["chain"]["births"] = [1]
    obj["chain"]["deaths"] = [1]
    assert main(["check", write(tmp_path, obj)]) == 2


def test_missing_file(tmp_path):
    assert main(["check", str(tmp_path / "nope.json")]) == 2


def test_capacity(capsys):
    assert main(["check", str(DOCS / "tiny.json"), "--max-states", "3"]) == 3
    assert "6 states" in capsys.readouterr().err


def test_analyze_tiny(tmp_path, capsys):
    assert main(["analyze", str(DOCS / "tiny.json"), "--gap", "--sandwiches", "--starts", "8",
                 "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "gap(E_Q) = 1\n" in out and "verdict PASS" in out
    rep = json.loads((tmp_path / "report.json").read_text())
    assert 1 / 3 <= rep["gap"]["reaction"]["gap"] <= 1
    sw = rep["sandwiches"]["gap"]
    assert sw["passed"] and "margins" in sw and "tol" in sw


def test_analyze_example31_strict_note(capsys):
    assert main(["analyze", str(DOCS / "example31.json"), "--sandwiches", "--starts", "8"]) == 0
    rep = json.loads(capsys.readouterr().out)
    notes = rep["sandwiches"]["gap"]["notes"]
    assert any(n.startswith("strict") for n in notes)
    assert rep["gap"]["reaction"]["gap"] <= 0.25 + 1e-8


def test_analyze_criteria_csv(tmp_path):
    assert main(["analyze", str(DOCS / "poisson.json"), "--criteria", "--out", str(tmp_path)]) == 0
    for kind in ("poincare", "superPoincare", "lambdaPhi", "superLogSobolev"):
        rows = list(csv.reader(open(tmp_path / f"criteria_{kind}.csv")))
        assert rows[0] == ["n", "S_n", "multiplier", "cumulative_sum"]
        assert all(len(r) == 4 for r in rows)
        assert len(rows) == 21


def test_analyze_lsc_and_lambda_phi(capsys):
    assert main(["analyze", str(DOCS / "tiny.json"), "--lsc", "--lambda-phi", "one", "--lambda-phi", "power:0.5",
                 "--starts", "4"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["lambda_phi"]["one"]["value"] == pytest.approx(rep["log_sobolev"]["combined"]["gap"], abs=1e-6)
    assert set(rep["lambda_phi"]) == {"one", "power:0.5"}


def test_analyze_bad_profile(tmp_path):
    assert main(["analyze", str(DOCS / "tiny.json"), "--lambda-phi", "cubic"]) == 2


def test_simulate_deterministic(tmp_path, capsys):
    args = ["simulate", str(DOCS / "tiny.json"), "--expected-jumps", "20000"]
    assert main(args) == 0
    first = capsys.readouterr().out
    assert main(args) == 0
    assert capsys.readouterr().out == first
    rep = json.loads(first)
    assert rep["tv_distance"] < 0.02 and rep["seed"] == 42


def test_simulate_outputs(tmp_path, capsys):
    assert main(["simulate", str(DOCS / "tiny.json"), "--expected-jumps", "5000", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trajectory.csv").exists()
    assert json.loads((tmp_path / "simulate.json").read_text())["jumps"] > 1000


def test_simulate_horizon_zero():
    assert main(["simulate", str(DOCS / "tiny.json"), "--horizon", "0"]) == 2


def test_simulate_degenerate(tmp_path):
    obj = {"sites": 1, "truncation": 0, "chain": {"rates": [[0]], "rho": [1.0]},
           "measures": {"mode": "product", "mu1": [1.0]}}
    assert main(["simulate", write(tmp_path, obj)]) == 1


def test_explicit_measures_model(tmp_path, capsys):
    obj = tiny_obj()
    obj.pop("diffusion")
    obj["measures"] = {"mode": "explicit", "tables": {"1": {"1": 0.5, "2": 0.5},
                                                      "2": {"1,1": 0.4, "1,2": 0.2, "2,2": 0.4}}}
    assert main(["check", write(tmp_path, obj)]) == 0
