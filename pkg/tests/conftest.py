"""Shared builders and the brute-force scheduling oracle."""

from __future__ import annotations

import numpy as np

import fuelsched as fs


def line_landscape(ages, **params) -> fs.Landscape:
    """1 x len(ages) grid with the given initial ages."""
    land = fs.build_grid(1, len(ages), fs.CellParams(**params))
    return land.with_initial_ages(list(ages))


def grid_landscape(rows, cols, ages, **params) -> fs.Landscape:
    land = fs.build_grid(rows, cols, fs.CellParams(**params))
    return land.with_initial_ages(list(ages))


def brute_force_optimum(land: fs.Landscape, setting: fs.SettingSpec, horizon: int):
    """Minimum objective over every 0/1 schedule passing the evaluator, or None.

    Direct enumeration of all 2^(cells*years) treatment matrices, each checked
    with fuelsched.check; independent of the branch-and-bound search path.
    """
    n, T = land.n_cells, horizon
    bits = np.arange(n * T)
    best = None
    for code in range(2 ** (n * T)):
        x = ((code >> bits) & 1).astype(np.int8).reshape(n, T)
        sched = fs.Schedule(x)
        state = fs.derive(land, sched)
        if not fs.check(land, sched, setting, state).feasible:
            continue
        obj = fs.objective(state)
        if best is None or obj < best:
            best = obj
    return best


def random_instance(rng: np.random.Generator, rows, cols, horizon,
                    setting_number=None, budget_fraction=0.5, max_age=16):
    """Random desk-scale (landscape, setting, horizon) triple."""
    n = rows * cols
    ages = rng.integers(0, max_age + 1, size=n)
    land = grid_landscape(rows, cols, ages)
    if setting_number is None:
        setting_number = int(rng.integers(1, 5))
    setting = fs.table_setting(setting_number, horizon, fs.initial_mature_pairs(land),
                               budget_fraction=budget_fraction)
    return land, setting, horizon
