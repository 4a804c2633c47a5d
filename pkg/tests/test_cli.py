import json
import subprocess
import sys

import numpy as np
import pytest

import fuelsched as fs
from fuelsched import mip
from fuelsched.cli import main


def run_cli(*args) -> int:
    return main([str(a) for a in args])


@pytest.fixture
def small_land(tmp_path):
    path = tmp_path / "land.json"
    assert run_cli("generate", "--rows", 3, "--cols", 3, "--seed", 4, "--out", path) == 0
    return path


def test_generate_writes_valid_landscape(small_land):
    land = fs.read_landscape(small_land)
    assert land.n_cells == 9
    assert (land.initial_age >= 0).all() and (land.initial_age <= 16).all()


def test_generate_with_age_probs(tmp_path):
    path = tmp_path / "land.json"
    code = run_cli("generate", "--rows", 2, "--cols", 2, "--age-probs", "0,1",
                   "--out", path)
    assert code == 0
    land = fs.read_landscape(path)
    assert (land.initial_age == 1).all()


def test_generate_rejects_bad_dims(tmp_path, capsys):
    code = run_cli("generate", "--rows", 0, "--cols", 3,
                   "--out", tmp_path / "x.json")
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_solve_evaluate_simulate_chain(tmp_path, small_land, capsys):
    sched_path = tmp_path / "sched.txt"
    code = run_cli("solve", "--landscape", small_land, "--setting", 4,
                   "--horizon", 3, "--budget", 0.34, "--solver", "anneal",
                   "--iterations", 300, "--seed", 2, "--out", sched_path)
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["feasible"] is True

    code = run_cli("evaluate", "--landscape", small_land, "--schedule", sched_path,
                   "--setting", 4, "--horizon", 3, "--budget", 0.34)
    assert code == 0
    out = capsys.readouterr().out
    assert "feasible True" in out
    assert f"objective {summary['objective']}" in out

    occ_path = tmp_path / "occ.txt"
    code = run_cli("simulate", "--landscape", small_land, "--schedule", sched_path,
                   "--out", occ_path)
    assert code == 0
    assert len(occ_path.read_text().splitlines()) == 4  # years 0..3


def test_solve_exact_and_infeasible_exit(tmp_path, capsys):
    path = tmp_path / "land.json"
    fs.write_landscape(fs.build_grid(2, 2).with_initial_ages([17, 17, 17, 17]), path)
    sched_path = tmp_path / "sched.txt"
    # budget of one cell per year cannot cover the forced treatments
    code = run_cli("solve", "--landscape", path, "--setting", 4, "--horizon", 2,
                   "--budget", 0.25, "--solver", "exact", "--out", sched_path)
    assert code == 1
    summary = json.loads(capsys.readouterr().out)
    assert summary["feasible"] is False

    # half the landscape per year is enough
    code = run_cli("solve", "--landscape", path, "--setting", 4, "--horizon", 2,
                   "--budget", 0.5, "--solver", "exact", "--out", sched_path)
    assert code == 0
    sched = fs.read_schedule(sched_path)
    assert sched.horizon == 2 and sched.n_cells == 4


def test_solve_ramps_the_floor(tmp_path, capsys):
    path = tmp_path / "land.json"
    fs.write_landscape(fs.build_grid(2, 2).with_initial_ages([17, 17, 17, 17]), path)
    code = run_cli("solve", "--landscape", path, "--setting", 2, "--horizon", 2,
                   "--budget", 0.5, "--solver", "exact", "--out", tmp_path / "s.txt")
    summary = json.loads(capsys.readouterr().out)
    assert code in (0, 1)
    if code == 0:
        assert summary["ramp_years"] >= 1


def test_export_and_import_solution(tmp_path, small_land, capsys):
    mps_path = tmp_path / "model.mps"
    code = run_cli("export-mps", "--landscape", small_land, "--setting", 4,
                   "--horizon", 2, "--budget", 0.34, "--out", mps_path)
    assert code == 0
    assert mps_path.read_text().startswith("NAME")

    land = fs.read_landscape(small_land)
    setting = fs.table_setting(4, 2, 0, budget_fraction=0.34)
    res = fs.solve_exact(land, setting, 2, cap=36)
    point = mip.assignment_from_schedule(land, res.schedule)
    sol_path = tmp_path / "model.sol"
    mip.write_solution(point, sol_path, objective=res.objective)

    sched_out = tmp_path / "imported.txt"
    code = run_cli("import-solution", "--landscape", small_land, "--setting", 4,
                   "--horizon", 2, "--budget", 0.34, "--solution", sol_path,
                   "--schedule-out", sched_out)
    assert code == 0
    out = capsys.readouterr().out
    assert "status feasible" in out
    assert (fs.read_schedule(sched_out).x == res.schedule.x).all()

    # corrupting an age makes the cross-check fail
    bad = dict(point)
    bad["A_0_1"] = bad["A_0_1"] + 5
    mip.write_solution(bad, sol_path)
    code = run_cli("import-solution", "--landscape", small_land, "--setting", 4,
                   "--horizon", 2, "--budget", 0.34, "--solution", sol_path)
    assert code == 1
    assert "status infeasible" in capsys.readouterr().out


def test_import_solution_unknown_variable_exit_2(tmp_path, small_land, capsys):
    sol_path = tmp_path / "bad.sol"
    sol_path.write_text("mystery 1\n")
    code = run_cli("import-solution", "--landscape", small_land, "--setting", 4,
                   "--horizon", 2, "--solution", sol_path)
    assert code == 2
    assert "error:" in capsys.readouterr().err


def test_missing_landscape_exit_2(tmp_path, capsys):
    code = run_cli("solve", "--landscape", tmp_path / "nope.json", "--setting", 4,
                   "--horizon", 2, "--out", tmp_path / "s.txt")
    assert code == 2


def test_experiment_subcommand(tmp_path, capsys):
    config = {
        "sizes": [[3, 3]],
        "replicates": 2,
        "horizon": 2,
        "budget_fraction": 0.34,
        "settings": [3, 4],
        "seed": 1,
        "solver": "anneal",
        "anneal": {"iterations": 200, "seed": 0},
        "ramp_probe_iterations": 100,
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    outdir = tmp_path / "results"
    code = run_cli("experiment", "--config", config_path, "--outdir", outdir)
    assert code == 0
    for name in ("high_conn.csv", "habitat_conn.csv", "pct_high.csv", "pct_mature.csv",
                 "pct_occupied.csv", "metrics_long.csv", "replicates.csv", "runs.csv",
                 "resolved_config.json"):
        assert (outdir / name).exists()
    resolved = json.loads((outdir / "resolved_config.json").read_text())
    assert resolved["settings"] == [3, 4]
    assert resolved["age_probs"] is not None


def test_console_entry_point(tmp_path):
    out = tmp_path / "land.json"
    proc = subprocess.run(
        [sys.executable, "-c",
         "import sys; from fuelsched.cli import main; sys.exit(main())",
         "generate", "--rows", "2", "--cols", "2", "--out", str(out)],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert out.exists()
