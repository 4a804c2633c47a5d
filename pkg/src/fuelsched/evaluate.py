"""Deterministic schedule evaluation: fuel ages, classifications, constraints.

Given a landscape and a 0/1 treatment schedule this module computes the full
derived state (ages, High/Mature/Old indicators, per-year connectivity
counts), the objective (total adjacent high-fuel pairs across the horizon),
and an exhaustive constraint report. Both native solvers and the MIP export
defer to these semantics.

Age recursion: ``A[i,0]`` is the initial age; in year t the age resets to 0
if cell i is treated, otherwise it is the previous age plus one. A cell is
High/Mature/Old in a year exactly when its age is >= the corresponding
threshold; a treated cell has age 0 that year, so it is neither mature nor
high at the time of treatment.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .landscape import Landscape

# Constraint identifiers used in violation reports.
BUDGET = "budget"
MIN_TFI = "min_tfi"
NEIGHBOR_HABITAT = "neighbor_habitat"
FORCED_TREATMENT = "forced_treatment"
HABITAT_TARGET = "habitat_target"

# Constraints the annealing solver keeps hard by construction vs. penalizes.
HARD_KINDS = (BUDGET, MIN_TFI)
SOFT_KINDS = (NEIGHBOR_HABITAT, FORCED_TREATMENT, HABITAT_TARGET)

# Slack for floating-point area sums in budget comparisons.
BUDGET_EPS = 1e-9


@dataclass(frozen=True)
class Schedule:
    """Binary treatment matrix x[cell, year], years 1..horizon."""

    x: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x)
        if x.ndim != 2:
            raise ValueError(f"schedule must be 2-D (cells x years), got shape {x.shape}")
        if x.size and not np.isin(x, (0, 1)).all():
            raise ValueError("schedule entries must be 0 or 1")
        x = x.astype(np.int8)
        x.setflags(write=False)
        object.__setattr__(self, "x", x)

    @property
    def n_cells(self) -> int:
        return self.x.shape[0]

    @property
    def horizon(self) -> int:
        return self.x.shape[1]

    @classmethod
    def empty(cls, n_cells: int, horizon: int) -> "Schedule":
        return cls(np.zeros((n_cells, horizon), dtype=np.int8))


@dataclass(frozen=True)
class SettingSpec:
    """Active constraint configuration for one optimisation run.

    ``habitat_target[t-1]`` is the minimum number of adjacent mature pairs
    required in year t; ``require_neighbor_habitat`` gates the rule that a
    treated cell must have at least one mature neighbor that year;
    ``budget_fraction`` is the maximum treatable share of total area per year.
    """

    habitat_target: tuple[int, ...]
    require_neighbor_habitat: bool
    budget_fraction: float

    def __post_init__(self) -> None:
        if not (0 < self.budget_fraction <= 1):
            raise ValueError(f"budget_fraction must be in (0, 1], got {self.budget_fraction}")
        if any(g < 0 for g in self.habitat_target):
            raise ValueError("habitat targets must be >= 0")
        object.__setattr__(self, "habitat_target", tuple(int(g) for g in self.habitat_target))

    @property
    def horizon(self) -> int:
        return len(self.habitat_target)


def table_setting(number: int, horizon: int, initial_habitat: int,
                  budget_fraction: float = 0.10) -> SettingSpec:
    """One of the four standard settings.

    1: habitat floor at the initial connectivity, neighbor rule on
    2: habitat floor at the initial connectivity, neighbor rule off
    3: no habitat floor, neighbor rule on
    4: no habitat floor, neighbor rule off
    """
    if number not in (1, 2, 3, 4):
        raise ValueError(f"setting must be 1..4, got {number}")
    floor = initial_habitat if number in (1, 2) else 0
    return SettingSpec(
        habitat_target=tuple(floor for _ in range(horizon)),
        require_neighbor_habitat=number in (1, 3),
        budget_fraction=budget_fraction,
    )


@dataclass(frozen=True)
class DerivedState:
    """Everything a schedule determines: ages, indicators, connectivity counts.

    age          (n, T+1) ages for years 0..T
    high, mature (n, T)   indicators for years 1..T
    old          (n, T)   indicator age >= max_tfi for years 0..T-1
    high_conn    (T,)     adjacent pairs both high, per year 1..T
    habitat_conn (T,)     adjacent pairs both mature, per year 1..T
    """

    age: np.ndarray
    high: np.ndarray
    mature: np.ndarray
    old: np.ndarray
    high_conn: np.ndarray
    habitat_conn: np.ndarray


def ages_from_x(landscape: Landscape, x: np.ndarray) -> np.ndarray:
    """Age recursion on a raw treatment matrix: reset on treatment, else +1."""
    n, T = x.shape
    age = np.empty((n, T + 1), dtype=np.int64)
    age[:, 0] = landscape.initial_age
    for t in range(1, T + 1):
        age[:, t] = np.where(x[:, t - 1] == 1, 0, age[:, t - 1] + 1)
    return age


def classify(landscape: Landscape, age: np.ndarray):
    """(high, mature, old) indicator matrices from an age matrix."""
    T = age.shape[1] - 1
    high = age[:, 1:] >= landscape.high_threshold[:, None]
    mature = age[:, 1:] >= landscape.mature_threshold[:, None]
    old = age[:, :T] >= landscape.max_tfi[:, None]
    return high, mature, old


def pair_counts(landscape: Landscape, flags: np.ndarray) -> np.ndarray:
    """Per-year adjacent pairs with both cells flagged; flags is (n, T)."""
    return (flags[landscape.pair_i] & flags[landscape.pair_j]).sum(axis=0).astype(np.int64)


def derive(landscape: Landscape, schedule: Schedule) -> DerivedState:
    """Compute the unique derived state of a schedule (pure function)."""
    x = schedule.x
    if x.shape[0] != landscape.n_cells:
        raise ValueError(
            f"schedule has {x.shape[0]} cells, landscape has {landscape.n_cells}"
        )
    age = ages_from_x(landscape, x)
    high, mature, old = classify(landscape, age)
    high_conn = pair_counts(landscape, high)
    habitat_conn = pair_counts(landscape, mature)
    for arr in (age, high, mature, old, high_conn, habitat_conn):
        arr.setflags(write=False)
    return DerivedState(age, high, mature, old, high_conn, habitat_conn)


def objective(state: DerivedState) -> int:
    """Total count of adjacent high-fuel pairs summed over years 1..T."""
    return int(state.high_conn.sum())


def count_adjacent_pairs(landscape: Landscape, flags) -> int:
    """Adjacent pairs (i<j) with both cells flagged."""
    flags = np.asarray(flags, dtype=bool)
    return int(np.count_nonzero(flags[landscape.pair_i] & flags[landscape.pair_j]))


def initial_high_pairs(landscape: Landscape) -> int:
    """Adjacent high-fuel pairs at year 0."""
    return count_adjacent_pairs(landscape, landscape.initial_age >= landscape.high_threshold)


def initial_mature_pairs(landscape: Landscape) -> int:
    """Adjacent mature pairs at year 0 (the natural habitat-floor base target)."""
    return count_adjacent_pairs(landscape, landscape.initial_age >= landscape.mature_threshold)


@dataclass(frozen=True)
class Violation:
    """One constraint violation: kind, location (cell, pair or None), year, magnitude."""

    kind: str
    where: int | tuple[int, int] | None
    year: int
    magnitude: float


@dataclass
class ConstraintReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def feasible(self) -> bool:
        return not self.violations

    def total_magnitude(self, kinds=None) -> float:
        if kinds is None:
            return sum(v.magnitude for v in self.violations)
        kinds = set(kinds)
        return sum(v.magnitude for v in self.violations if v.kind in kinds)


def soft_masks(landscape: Landscape, setting: SettingSpec, x: np.ndarray,
               mature: np.ndarray, old: np.ndarray, habitat_conn: np.ndarray):
    """Mask arithmetic for the penalised constraints (raw-array fast path).

    Returns (neighbor_missing, forced, forced_frac, habitat_short):
    cell-year masks for the neighbor-habitat and forced-treatment rules, the
    forced magnitudes (mature-neighbor fraction), and the per-year habitat
    floor shortfall (violated where > 0).
    """
    treated = x == 1
    nbr_mature = landscape.adjacency @ mature.astype(np.int16)  # (n, T)

    if setting.require_neighbor_habitat:
        neighbor_missing = treated & (nbr_mature == 0)
    else:
        neighbor_missing = np.zeros_like(treated, dtype=bool)

    # Over-max-TFI cells with any mature neighbor this year must be treated;
    # the violation magnitude is the mature-neighbor fraction.
    forced = old & ~treated & (nbr_mature >= 1)
    deg = np.maximum(landscape.degree, 1)[:, None]
    forced_frac = nbr_mature / deg

    target = np.asarray(setting.habitat_target, dtype=np.int64)
    habitat_short = target - habitat_conn
    return neighbor_missing, forced, forced_frac, habitat_short


def _violation_masks(landscape: Landscape, schedule: Schedule, setting: SettingSpec,
                     state: DerivedState):
    """Shared constraint arithmetic for check() and soft_penalty()."""
    x = schedule.x
    n, T = x.shape
    treated = x == 1

    budget_limit = setting.budget_fraction * landscape.total_area
    loads = landscape.area @ x  # (T,)
    budget_excess = loads - budget_limit  # violated where > BUDGET_EPS

    prev_age = state.age[:, :T]
    min_tfi_short = np.where(treated, landscape.min_tfi[:, None] - prev_age, 0)  # violated where > 0

    neighbor_missing, forced, forced_frac, habitat_short = soft_masks(
        landscape, setting, x, state.mature, state.old, state.habitat_conn
    )
    return budget_excess, min_tfi_short, neighbor_missing, forced, forced_frac, habitat_short


def check(landscape: Landscape, schedule: Schedule, setting: SettingSpec,
          state: DerivedState | None = None) -> ConstraintReport:
    """Evaluate every constraint and report all violations (never fail-fast).

    Checks, for each year t = 1..T:
      budget            treated area <= budget_fraction * total area
      min_tfi           a treated cell's previous-year age >= its min_tfi
      neighbor_habitat  (if enabled) a treated cell has >= 1 mature neighbor in year t
      forced_treatment  a cell over max_tfi in year t-1 with >= 1 mature
                        neighbor in year t must be treated in year t
      habitat_target    adjacent mature pairs in year t >= habitat_target[t-1]
    """
    if schedule.horizon != setting.horizon:
        raise ValueError(
            f"schedule horizon {schedule.horizon} != setting horizon {setting.horizon}"
        )
    if state is None:
        state = derive(landscape, schedule)
    T = schedule.horizon
    budget_excess, min_tfi_short, neighbor_missing, forced, forced_frac, habitat_short = (
        _violation_masks(landscape, schedule, setting, state)
    )

    violations: list[Violation] = []
    for t in range(T):
        if budget_excess[t] > BUDGET_EPS:
            violations.append(Violation(BUDGET, None, t + 1, float(budget_excess[t])))
    for t in range(T):
        for i in np.flatnonzero(min_tfi_short[:, t] > 0):
            violations.append(Violation(MIN_TFI, int(i), t + 1, float(min_tfi_short[i, t])))
    for t in range(T):
        for i in np.flatnonzero(neighbor_missing[:, t]):
            violations.append(Violation(NEIGHBOR_HABITAT, int(i), t + 1, 1.0))
    for t in range(T):
        for i in np.flatnonzero(forced[:, t]):
            violations.append(Violation(FORCED_TREATMENT, int(i), t + 1, float(forced_frac[i, t])))
    for t in range(T):
        if habitat_short[t] > 0:
            violations.append(Violation(HABITAT_TARGET, None, t + 1, float(habitat_short[t])))
    return ConstraintReport(violations)


def soft_penalty(landscape: Landscape, schedule: Schedule, setting: SettingSpec,
                 state: DerivedState) -> float:
    """Sum of violation magnitudes for the penalised constraint kinds.

    Fast path for the annealing solver; agrees with check() restricted to
    SOFT_KINDS by construction (same mask arithmetic).
    """
    _, _, neighbor_missing, forced, forced_frac, habitat_short = _violation_masks(
        landscape, schedule, setting, state
    )
    return (
        float(np.count_nonzero(neighbor_missing))
        + float(forced_frac[forced].sum())
        + float(habitat_short[habitat_short > 0].sum())
    )


# Schedule text format: one line per year, one 0/1 token per cell, row-major.

def format_schedule(schedule: Schedule) -> str:
    return "\n".join(" ".join(str(v) for v in schedule.x[:, t]) for t in range(schedule.horizon)) + "\n"


def parse_schedule(text: str) -> Schedule:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty schedule text")
    rows = []
    for ln in lines:
        tokens = ln.split()
        if any(tok not in ("0", "1") for tok in tokens):
            raise ValueError(f"schedule entries must be 0 or 1: {ln!r}")
        rows.append([int(tok) for tok in tokens])
    if len(set(len(r) for r in rows)) != 1:
        raise ValueError("all schedule lines must list the same number of cells")
    return Schedule(np.array(rows, dtype=np.int8).T)


def write_schedule(schedule: Schedule, path) -> None:
    Path(path).write_text(format_schedule(schedule))


def read_schedule(path) -> Schedule:
    return parse_schedule(Path(path).read_text())
