import csv
import json
import math
from pathlib import Path

import pytest

from degcontrol.cli import main

GOLDEN = Path(__file__).parent / "golden"
CASES = json.loads((GOLDEN / "cases.json").read_text())


def run(args, out):
    argv = [a if not a.endswith(".json") else str(GOLDEN / a) for a in args]
    return main(argv + ["--out", str(out)])


@pytest.mark.parametrize("case", CASES, ids=[c["name"] for c in CASES])
def test_golden_exit_codes(case, tmp_path):
    assert run(case["args"], tmp_path) == case["exit"]


def test_every_exit_code_is_exercised():
    assert {c["exit"] for c in CASES} == {0, 2, 3, 4, 5}


def load(path):
    return json.loads(Path(path).read_text())


def test_minimal_solve_summary(tmp_path):
    assert run(["solve", "--config", "solve_minimal.json"], tmp_path) == 0
    s = load(tmp_path / "summary.json")
    assert s["mass_drift"] < 1e-12
    assert abs(s["norms"]["sup"] - 1.0) < 1e-14 and abs(s["norms"]["min"] - 1.0) < 1e-14
    assert len(s["config_hash"]) == 64 and "numpy" in s["versions"]
    rows = list(csv.reader(open(tmp_path / "trajectory.csv")))
    assert rows[0] == ["t", "x", "value"] and len(rows) == 1 + 33 * 17


def test_uniform_solve_matches_closed_form(tmp_path):
    assert run(["solve", "--config", "solve_uniform.json"], tmp_path) == 0
    s = load(tmp_path / "summary.json")
    pred = 2.0 * (1 - 0.7 / 50) ** -50
    assert math.isclose(s["uniform_mode_prediction"], pred, rel_tol=1e-15)
    assert abs(s["norms"]["sup"] - pred) <= 1e-12 * pred


def test_guard_message_names_values(tmp_path, capsys):
    assert run(["solve", "--config", "solve_guard.json"], tmp_path) == 2
    err = capsys.readouterr().err
    assert "0.1" in err and "10" in err and "guard" in err


def test_optimize_artifacts(tmp_path):
    assert run(["optimize", "--config", "optimize_planted.json", "--dump-trajectories"], tmp_path) == 0
    for name in ("iterations.csv", "control.csv", "certification.json", "state.csv", "adjoint.csv"):
        assert (tmp_path / name).exists()
    rep = load(tmp_path / "certification.json")
    assert rep["converged"] and rep["stationarity_residual"] < 1e-10
    cert = rep["certification"]
    assert cert["trichotomy"]["passed"] and cert["ssc"]["satisfied"]
    assert cert["hessian"]["coercivity_holds"] and cert["growth_probe"]["gamma_hat"] > 0


def test_below_threshold_flagged(tmp_path):
    assert run(["optimize", "--config", "optimize_below_threshold.json"], tmp_path) == 0
    rep = load(tmp_path / "certification.json")
    assert rep["ssc"]["satisfied"] is False
    assert rep["certification"]["hessian"]["coercivity_holds"] is None


def test_zero_budget_still_writes_artifacts(tmp_path):
    assert run(["optimize", "--config", "optimize_zero_budget.json"], tmp_path) == 4
    rep = load(tmp_path / "certification.json")
    assert rep["status"] == "max_iters" and rep["stationarity_residual"] > 0
    assert rep["certification"] is None and "trichotomy" in rep
    assert (tmp_path / "iterations.csv").exists()


def test_corrupted_scheme_reports_witness(tmp_path):
    assert run(["verify", "--config", "verify_consistent_mass.json", "--suite", "max_principle"], tmp_path) == 5
    rep = load(tmp_path / "verify_report.json")
    (check,) = rep["checks"]
    assert check["status"] == "fail" and check["witness"]["value"] < -1e-12


def test_alpha_sweep_table(tmp_path):
    assert run(["sweep", "--config", "sweep_alpha.json", "--sweep", "alpha=5,15,30"], tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert [r["value"] for r in rows] == ["5", "15", "30"]
    delta = [float(r["delta"]) for r in rows]
    assert delta[0] < 0 < delta[1] < delta[2]
    assert all(r["status"] == "converged" for r in rows)
    assert all((tmp_path / f"row_{k:03d}" / "certification.json").exists() for k in range(3))


def test_mesh_sweep_costs_settle(tmp_path):
    assert run(["sweep", "--config", "sweep_alpha.json", "--sweep", "n_cells=8,16,32"], tmp_path) == 0
    costs = [float(r["cost"]) for r in csv.DictReader(open(tmp_path / "sweep.csv"))]
    assert abs(costs[2] - costs[1]) < abs(costs[1] - costs[0])


def test_sweep_row_failures_are_isolated(tmp_path):
    assert run(["sweep", "--config", "sweep_alpha.json", "--sweep", "alpha=-1,20"], tmp_path) == 0
    rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
    assert rows[0]["status"] == "config_error" and rows[1]["status"] == "converged"


@pytest.mark.parametrize(
    "args",
    [
        ["solve", "--config", "solve_minimal.json"],
        ["optimize", "--config", "optimize_planted.json", "--dump-trajectories"],
        ["verify", "--config", "verify_small.json", "--suite", "gradient"],
        ["sweep", "--config", "sweep_alpha.json", "--sweep", "alpha=15,30"],
    ],
    ids=["solve", "optimize", "verify", "sweep"],
)
def test_byte_identical_reruns(args, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(args, a) == run(args, b)
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file())
    assert files
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_seed_changes_random_start(tmp_path):
    args = ["optimize", "--config", "optimize_zero_budget.json"]
    run(args + ["--seed", "1"], tmp_path / "s1")
    run(args + ["--seed", "2"], tmp_path / "s2")
    assert (tmp_path / "s1" / "control.csv").read_bytes() != (tmp_path / "s2" / "control.csv").read_bytes()


def test_bad_cli_usage_exits_with_config_code(tmp_path):
    assert main(["solve"]) == 2
    assert main(["frobnicate", "--config", "x"]) == 2
