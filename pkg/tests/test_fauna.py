import numpy as np
import pytest

import fuelsched as fs
from fuelsched.fauna import format_occupancy
from tests.conftest import grid_landscape, line_landscape


def test_static_mature_landscape_constant_occupancy():
    land = grid_landscape(3, 3, [9] * 9)
    occ = fs.simulate_occupancy(land, fs.Schedule.empty(9, 5))
    assert occ.occupied.all()
    for t in range(6):
        assert fs.occupancy_fraction(occ, t) == 1.0


def test_initial_occupancy_equals_initial_maturity():
    land = line_landscape([8, 7, 12, 0])
    occ = fs.simulate_occupancy(land, fs.Schedule.empty(4, 1))
    assert occ.occupied[:, 0].tolist() == [True, False, True, False]


def test_treated_cell_without_mature_neighbor_dies():
    # lone mature cell at the end of a line; treating it kills its occupants
    # and nothing ever recolonises it
    land = line_landscape([8, 0, 0])
    x = np.zeros((3, 10), dtype=np.int8)
    x[0, 0] = 1
    occ = fs.simulate_occupancy(land, fs.Schedule(x))
    assert occ.occupied[0, 0]
    # the cell re-matures in year 9 but there is no occupied neighbor ever
    assert not occ.occupied[:, 1:].any()


def test_relocation_marks_all_mature_neighbors():
    # treated center of a plus: every mature neighbor receives occupants
    ages = [0, 9, 0,
            9, 9, 2,
            0, 9, 0]
    land = grid_landscape(3, 3, ages)
    x = np.zeros((9, 1), dtype=np.int8)
    x[4, 0] = 1
    occ = fs.simulate_occupancy(land, fs.Schedule(x))
    assert occ.occupied[:, 1].tolist() == [False, True, False,
                                           True, False, False,
                                           False, True, False]


def test_relocated_cell_not_occupied_itself():
    land = line_landscape([9, 9])
    x = np.array([[1], [0]], dtype=np.int8)
    occ = fs.simulate_occupancy(land, fs.Schedule(x))
    assert occ.occupied[:, 1].tolist() == [False, True]


def test_recolonisation_one_step_per_year():
    # cells mature in year 2; the occupancy front then advances one cell per
    # year from the initially occupied end
    land = line_landscape([8, 6, 6])
    occ = fs.simulate_occupancy(land, fs.Schedule.empty(3, 4))
    assert occ.occupied[:, 0].tolist() == [True, False, False]
    assert occ.occupied[:, 1].tolist() == [True, False, False]
    assert occ.occupied[:, 2].tolist() == [True, True, False]
    assert occ.occupied[:, 3].tolist() == [True, True, True]


def test_displaced_animals_seed_recolonisation_same_year():
    # relocation happens before the recolonisation step, so cells freshly
    # occupied by displaced animals can propagate one further step that year
    land = line_landscape([2, 9, 7, 7])
    x = np.zeros((4, 1), dtype=np.int8)
    x[1, 0] = 1
    occ = fs.simulate_occupancy(land, fs.Schedule(x))
    # only cell 1 is occupied initially; its occupants move into cell 2 (newly
    # mature), and recolonisation reaches cell 3 in the same year
    assert occ.occupied[:, 0].tolist() == [False, True, False, False]
    assert occ.occupied[:, 1].tolist() == [False, False, True, True]


def test_occupancy_fraction_bounds_and_errors():
    land = line_landscape([9, 0])
    occ = fs.simulate_occupancy(land, fs.Schedule.empty(2, 1))
    assert fs.occupancy_fraction(occ, 0) == 0.5
    with pytest.raises(ValueError):
        fs.occupancy_fraction(occ, 2)
    with pytest.raises(ValueError):
        fs.occupancy_fraction(occ, -1)


def test_occupancy_subset_of_mature():
    rng = np.random.default_rng(31)
    for _ in range(50):
        rows, cols = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        n = rows * cols
        T = int(rng.integers(1, 6))
        land = grid_landscape(rows, cols, rng.integers(0, 17, size=n))
        x = (rng.random((n, T)) < 0.3).astype(np.int8)
        sched = fs.Schedule(x)
        state = fs.derive(land, sched)
        occ = fs.simulate_occupancy(land, sched, state)
        assert (occ.occupied[:, 1:] <= state.mature).all()


def test_disabling_recolonisation_only_shrinks_occupancy():
    rng = np.random.default_rng(32)
    for _ in range(30):
        n, T = 6, 4
        land = line_landscape(rng.integers(0, 17, size=n))
        x = (rng.random((n, T)) < 0.3).astype(np.int8)
        sched = fs.Schedule(x)
        full = fs.simulate_occupancy(land, sched)
        reduced = fs.simulate_occupancy(land, sched, recolonise=False)
        assert (reduced.occupied <= full.occupied).all()


def test_simulation_deterministic():
    land = grid_landscape(2, 3, [4, 9, 12, 0, 8, 16])
    x = np.array([[0, 1], [1, 0], [0, 0], [0, 0], [0, 1], [1, 0]], dtype=np.int8)
    a = fs.simulate_occupancy(land, fs.Schedule(x))
    b = fs.simulate_occupancy(land, fs.Schedule(x))
    assert (a.occupied == b.occupied).all()


def test_occupancy_text_format():
    land = line_landscape([9, 0])
    occ = fs.simulate_occupancy(land, fs.Schedule.empty(2, 1))
    lines = format_occupancy(occ).splitlines()
    assert lines == ["1 0", "1 0"]
