import numpy as np
import pytest

import fuelsched as fs
from fuelsched import mip
from tests.conftest import grid_landscape, line_landscape, random_instance


def small_instance(setting_number=4, budget=0.5, horizon=2):
    land = grid_landscape(2, 2, [12, 5, 9, 16])
    setting = fs.table_setting(setting_number, horizon, fs.initial_mature_pairs(land),
                               budget_fraction=budget)
    return land, setting, mip.build(land, setting, horizon)


def test_variable_space_2x2_T2():
    land, setting, inst = small_instance()
    kinds = inst.variables
    hc = [v for v in kinds if v.startswith("HC_")]
    assert len(hc) == 8  # 4 pairs x 2 years
    assert len([v for v in kinds if v.startswith("x_")]) == 8
    assert len([v for v in kinds if v.startswith("A_")]) == 12  # years 0..2
    assert len([v for v in kinds if v.startswith("Old_")]) == 8  # years 0..1
    assert len([v for v in kinds if v.startswith("MC_")]) == 8
    assert kinds["x_0_1"] == "binary" and kinds["A_0_0"] == "continuous"


def test_single_cell_objective_is_constant_zero():
    land = line_landscape([5])
    setting = fs.table_setting(4, 1, 0, budget_fraction=1.0)
    inst = mip.build(land, setting, 1)
    assert inst.objective == ()
    assert not any(v.startswith(("HC_", "MC_")) for v in inst.variables)


def test_row_counts_and_setting_difference():
    land, _, inst4 = small_instance(4)
    setting1 = fs.table_setting(1, 2, fs.initial_mature_pairs(land), budget_fraction=0.5)
    inst1 = mip.build(land, setting1, 2)
    n, T = 4, 2
    fam4 = {}
    for row in inst4.rows:
        fam4[row.family] = fam4.get(row.family, 0) + 1
    assert fam4["AGELB"] == n * T
    assert fam4["BUDGET"] == T
    assert fam4["AGEINIT"] == n
    assert fam4["HIGHPAIR"] == 4 * T
    assert "NBRHAB" not in fam4
    assert "HABTARGET" not in fam4  # zero floors are omitted
    assert inst4.omitted_habitat_years == (1, 2)
    # setting 1 adds exactly the neighbor rows and the nonzero floor rows
    extra = len(inst1.rows) - len(inst4.rows)
    nonzero_targets = sum(1 for g in setting1.habitat_target if g > 0)
    assert extra == n * T + nonzero_targets


def test_big_m_exceeds_max_attainable_age():
    land = grid_landscape(2, 2, [3, 16, 7, 11])
    setting = fs.table_setting(4, 5, 0)
    inst = mip.build(land, setting, 5)
    assert inst.big_m == 16 + 5 + 1


def test_build_rejects_bad_inputs():
    land = grid_landscape(2, 2, [0, 0, 0, 0])
    with pytest.raises(ValueError):
        mip.build(land, fs.table_setting(4, 1, 0), 0)
    with pytest.raises(ValueError):
        mip.build(land, fs.SettingSpec((5,), False, 0.5), 1)  # only 4 pairs exist


def test_export_import_roundtrip_rows(tmp_path):
    for number in (1, 4):
        land, setting, inst = small_instance(number)
        path = tmp_path / f"model{number}.mps"
        mip.export_mps(inst, path)
        model = mip.read_mps(path)
        assert model.name == inst.name
        assert model.rows_map() == inst.rows_map()
        assert model.binaries == inst.binaries
        assert model.objective_coeffs() == dict(inst.objective)
        assert model.variables == list(inst.variables)
        assert all(model.upper_bounds[b] == 1.0 for b in model.binaries)


def test_mps_file_structure(tmp_path):
    _, _, inst = small_instance()
    path = tmp_path / "model.mps"
    mip.export_mps(inst, path)
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0].startswith("NAME")
    for section in ("ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"):
        assert section in lines
    assert sum("'INTORG'" in ln for ln in lines) == 1
    assert sum("'INTEND'" in ln for ln in lines) == 1
    # continuous age variables come after the integer block
    assert text.index("'INTEND'") < text.index(" A_0_0 ")


def test_schedule_point_satisfies_parsed_model(tmp_path):
    rng = np.random.default_rng(17)
    for trial in range(5):
        land, setting, T = random_instance(rng, 2, 2, 2)
        res = fs.solve_exact(land, setting, T)
        if res.status != "optimal":
            continue
        inst = mip.build(land, setting, T)
        path = tmp_path / f"m{trial}.mps"
        mip.export_mps(inst, path)
        model = mip.read_mps(path)
        point = mip.assignment_from_schedule(land, res.schedule)
        assert mip.point_violations(model, point, tol=1e-6) == []
        obj = sum(c * point.get(v, 0.0) for v, c in model.objective_coeffs().items())
        assert obj == res.objective


def test_point_violations_flags_broken_rows():
    land, setting, inst = small_instance()
    res = fs.solve_exact(land, setting, 2)
    point = mip.assignment_from_schedule(land, res.schedule)
    assert mip.point_violations(inst, point) == []
    # claim an extra treatment without resetting the age: a row must fire
    year = 1 if res.schedule.x[0, 0] == 0 else 2
    point[f"x_0_{year}"] = 1.0
    broken = {name for name, _ in mip.point_violations(inst, point)}
    assert broken


def test_point_violations_flags_fractional_binaries():
    land, setting, inst = small_instance()
    point = mip.assignment_from_schedule(land, fs.Schedule.empty(4, 2))
    point["High_0_1"] = 0.4
    broken = mip.point_violations(inst, point)
    assert any(name == "integrality:High_0_1" for name, _ in broken)


def test_feasible_schedules_extend_to_feasible_points_exhaustive():
    # evaluator feasibility and MIP-row feasibility agree on every one of the
    # 2^(4*2) schedules of a 2x2, two-year instance (both directions: a
    # feasible schedule's canonical point satisfies all rows, and a canonical
    # point satisfying all rows has an evaluator-feasible x restriction; the
    # age/indicator variables are pinned by the rows, only the high-pair
    # variables have slack and they sit at their lower bounds here)
    for number, ages in ((1, [12, 5, 9, 0]), (4, [3, 14, 8, 11])):
        land = grid_landscape(2, 2, ages)
        setting = fs.table_setting(number, 2, fs.initial_mature_pairs(land),
                                   budget_fraction=0.5)
        inst = mip.build(land, setting, 2)
        bits = np.arange(8)
        feasible_count = 0
        for code in range(256):
            x = ((code >> bits) & 1).astype(np.int8).reshape(4, 2)
            sched = fs.Schedule(x)
            point = mip.assignment_from_schedule(land, sched)
            row_ok = mip.point_violations(inst, point) == []
            eval_ok = fs.check(land, sched, setting).feasible
            assert row_ok == eval_ok, f"disagree on {x.tolist()} (setting {number})"
            feasible_count += row_ok
        assert 0 < feasible_count < 256


def test_import_solution_roundtrip(tmp_path):
    land, setting, inst = small_instance()
    res = fs.solve_exact(land, setting, 2)
    point = mip.assignment_from_schedule(land, res.schedule)
    path = tmp_path / "model.sol"
    mip.write_solution(point, path, objective=res.objective)
    sol = mip.import_solution(inst, path)
    assert sol.status == "feasible"
    assert sol.objective_value == res.objective
    assert sol.claimed_objective == res.objective
    assert not sol.objective_mismatch
    sched = mip.schedule_from_values(4, 2, sol.values)
    assert (sched.x == res.schedule.x).all()


def test_import_solution_empty_file(tmp_path):
    # missing variables default to zero, so the objective is 0; the all-zero
    # point cannot satisfy the age rows (ages must grow when untreated), so
    # the cross-check reports infeasible
    land, setting, inst = small_instance()
    path = tmp_path / "empty.sol"
    path.write_text("")
    sol = mip.import_solution(inst, path)
    assert sol.objective_value == 0.0
    assert sol.status == "infeasible"
    assert any(name.startswith("AGEINIT") or name.startswith("AGELB")
               for name, _ in sol.violated_rows)


def test_import_solution_rejects_unknown_and_malformed(tmp_path):
    _, _, inst = small_instance()
    path = tmp_path / "bad.sol"
    path.write_text("nosuchvar 1\n")
    with pytest.raises(ValueError):
        mip.import_solution(inst, path)
    path.write_text("x_0_1 1 extra\n")
    with pytest.raises(ValueError):
        mip.import_solution(inst, path)
    path.write_text("x_0_1 notanumber\n")
    with pytest.raises(ValueError):
        mip.import_solution(inst, path)


def test_import_solution_claimed_objective_mismatch(tmp_path):
    land, setting, inst = small_instance()
    res = fs.solve_exact(land, setting, 2)
    point = mip.assignment_from_schedule(land, res.schedule)
    path = tmp_path / "model.sol"
    lines = [f"# objective {res.objective + 5}"]
    lines += [f"{k} {v}" for k, v in sorted(point.items())]
    path.write_text("\n".join(lines) + "\n")
    sol = mip.import_solution(inst, path)
    assert sol.claimed_objective == res.objective + 5
    assert sol.objective_mismatch


def test_import_solution_budget_violation_flagged(tmp_path):
    # a point that treats more area than the yearly budget is cross-checked
    # as infeasible
    land = grid_landscape(2, 2, [10, 10, 10, 10])
    setting = fs.table_setting(4, 1, 0, budget_fraction=0.25)
    inst = mip.build(land, setting, 1)
    x = np.ones((4, 1), dtype=np.int8)
    point = mip.assignment_from_schedule(land, fs.Schedule(x))
    path = tmp_path / "over.sol"
    mip.write_solution(point, path)
    sol = mip.import_solution(inst, path)
    assert sol.status == "infeasible"
    assert any(name == "BUDGET_1" for name, _ in sol.violated_rows)
    report = fs.check(land, fs.Schedule(x), setting)
    assert any(v.kind == "budget" for v in report.violations)


def _solve_parsed_with_scipy(model):
    """Solve a parsed model with scipy's HiGHS MILP (independent of solve_exact)."""
    from scipy.optimize import Bounds, LinearConstraint, milp

    names = model.variables
    idx = {v: k for k, v in enumerate(names)}
    nv = len(names)
    c = np.zeros(nv)
    for v, coeff in model.objective_coeffs().items():
        c[idx[v]] = coeff
    rows, lo, hi = [], [], []
    for _, coeffs, sense, rhs in model.iter_rows():
        arr = np.zeros(nv)
        for v, coeff in coeffs:
            arr[idx[v]] = coeff
        rows.append(arr)
        lo.append(rhs if sense in ("G", "E") else -np.inf)
        hi.append(rhs if sense in ("L", "E") else np.inf)
    integrality = np.array([1 if v in model.binaries else 0 for v in names])
    ub = np.array([model.upper_bounds.get(v, np.inf) for v in names])
    return milp(c=c, constraints=LinearConstraint(np.array(rows), lo, hi),
                integrality=integrality, bounds=Bounds(np.zeros(nv), ub))


def test_exported_model_agrees_with_independent_milp(tmp_path):
    pytest.importorskip("scipy.optimize")
    cases = [
        (1, [12, 5, 9, 0], 2, 0.5),
        (2, [3, 14, 8, 11], 2, 0.5),
        (3, [16, 2, 13, 7], 2, 0.5),
        (4, [12, 12, 6, 15], 3, 0.25),
        (4, [17, 17, 17, 17], 2, 0.25),  # forced treatments exceed the budget
    ]
    for trial, (number, ages, horizon, budget) in enumerate(cases):
        land = grid_landscape(2, 2, ages)
        setting = fs.table_setting(number, horizon, fs.initial_mature_pairs(land),
                                   budget_fraction=budget)
        exact = fs.solve_exact(land, setting, horizon)
        path = tmp_path / f"x{trial}.mps"
        mip.export_mps(mip.build(land, setting, horizon), path)
        res = _solve_parsed_with_scipy(mip.read_mps(path))
        if exact.status == "infeasible":
            assert res.status == 2  # HiGHS: infeasible
        else:
            assert res.status == 0, res.message
            assert round(res.fun) == exact.objective


def test_ramp_targets_trivial_when_feasible():
    land = grid_landscape(2, 2, [10, 10, 10, 10])
    calls = []

    def solve_fn(targets):
        calls.append(targets)
        return True

    targets = mip.ramp_targets(land, 4, 3, solve_fn)
    assert targets == (4, 4, 4)
    assert calls == [(4, 4, 4)]


def test_ramp_targets_finds_smallest_relaxation():
    # all cells over max TFI: year-1 forced treatments destroy mature pairs,
    # so the full floor is infeasible but relaxing year 1 may not be
    land = grid_landscape(2, 2, [17, 17, 17, 17])
    base = fs.initial_mature_pairs(land)
    assert base == 4
    T = 2

    def solve_fn(targets):
        setting = fs.SettingSpec(targets, False, 0.5)
        return fs.solve_exact(land, setting, T).status == "optimal"

    assert not solve_fn((base,) * T)
    targets = mip.ramp_targets(land, base, T, solve_fn)
    relaxed = sum(1 for g in targets if g == 0)
    assert relaxed >= 1
    assert targets[relaxed:] == (base,) * (T - relaxed)


def test_ramp_targets_exhausts_to_full_relaxation():
    land = grid_landscape(2, 2, [17, 17, 17, 17])

    def solve_fn(targets):
        return False

    assert mip.ramp_targets(land, 4, 2, solve_fn) == (0, 0)


def test_ramp_targets_propagates_solver_errors():
    land = grid_landscape(2, 2, [0, 0, 0, 0])

    def solve_fn(targets):
        raise RuntimeError("backend failure")

    with pytest.raises(RuntimeError):
        mip.ramp_targets(land, 2, 2, solve_fn)
