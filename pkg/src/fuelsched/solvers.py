"""Native solvers over the treatment-decision space.

solve_exact: depth-first branch-and-bound over per-year treatment subsets,
for desk-scale instances; proves optimality by exhausting the pruned tree.

solve_anneal: simulated annealing for experiment-scale instances. Budget and
min-TFI constraints are kept hard by move construction and repair; the
neighbor-habitat, forced-treatment and habitat-floor constraints are
penalised using violation magnitudes from the evaluator.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from . import evaluate
from .evaluate import BUDGET_EPS, Schedule, SettingSpec
from .landscape import Landscape

EXACT_CELL_YEAR_CAP = 36


@dataclass
class ExactResult:
    schedule: Schedule | None
    objective: int | None
    status: str  # 'optimal' | 'infeasible'


def solve_exact(landscape: Landscape, setting: SettingSpec, horizon: int,
                incumbent_limit: int | None = None,
                cap: int = EXACT_CELL_YEAR_CAP) -> ExactResult:
    """Exact minimisation of total high-fuel pair connectivity.

    Depth-first search year by year; each year enumerates the budget- and
    min-TFI-feasible treatment subsets (cells ordered by descending current
    fuel age, subsets in lexicographic order over that ordering). Subsets
    violating the neighbor-habitat rule, the forced-treatment rule or the
    habitat floor of the completed year are discarded; nodes whose
    accumulated pair count reaches the incumbent are pruned.

    ``incumbent_limit`` acts as an exclusive upper bound: only schedules with
    a strictly smaller objective are found, and 'infeasible' then means no
    feasible schedule beats the limit. Refuses instances with
    n_cells * horizon > cap.
    """
    T = int(horizon)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if setting.horizon != T:
        raise ValueError(f"setting horizon {setting.horizon} != horizon {T}")
    n = landscape.n_cells
    if n * T > cap:
        raise ValueError(f"instance too large for exact search: {n}*{T} > cap {cap}")

    areas = landscape.area
    m_thr = landscape.mature_threshold
    d_thr = landscape.high_threshold
    min_tfi = landscape.min_tfi
    max_tfi = landscape.max_tfi
    budget = setting.budget_fraction * landscape.total_area
    targets = setting.habitat_target
    require_nbr = setting.require_neighbor_habitat
    pi, pj = landscape.pair_i, landscape.pair_j
    nbrs = [np.array(ns, dtype=np.int64) for ns in landscape.neighbors]

    x = np.zeros((n, T), dtype=np.int8)
    best_obj = math.inf if incumbent_limit is None else int(incumbent_limit)
    best_x: np.ndarray | None = None

    def year_subsets(eligible: list[int]):
        # Include-first DFS yields subsets in lexicographic order over the
        # (descending-age) cell ordering; budget-infeasible branches are cut
        # at generation.
        chosen: list[int] = []

        def rec(k: int, remaining: float):
            if k == len(eligible):
                yield list(chosen)
                return
            i = eligible[k]
            if areas[i] <= remaining + BUDGET_EPS:
                chosen.append(i)
                yield from rec(k + 1, remaining - areas[i])
                chosen.pop()
            yield from rec(k + 1, remaining)

        yield from rec(0, budget)

    def search(t: int, ages_prev: np.ndarray, acc: int) -> None:
        nonlocal best_obj, best_x
        if acc >= best_obj:
            return
        if t > T:
            best_obj = acc
            best_x = x.copy()
            return
        order = sorted(range(n), key=lambda i: (-int(ages_prev[i]), i))
        eligible = [i for i in order if ages_prev[i] >= min_tfi[i]]
        old_prev = np.flatnonzero(ages_prev >= max_tfi)
        for subset in year_subsets(eligible):
            ages_t = ages_prev + 1
            if subset:
                ages_t[subset] = 0
            mature_t = ages_t >= m_thr
            if require_nbr and any(not mature_t[nbrs[i]].any() for i in subset):
                continue
            chosen = set(subset)
            forced_violated = any(
                i not in chosen and nbrs[i].size and mature_t[nbrs[i]].any()
                for i in old_prev
            )
            if forced_violated:
                continue
            if int(np.count_nonzero(mature_t[pi] & mature_t[pj])) < targets[t - 1]:
                continue
            high_t = ages_t >= d_thr
            inc = int(np.count_nonzero(high_t[pi] & high_t[pj]))
            if acc + inc >= best_obj:
                continue
            x[:, t - 1] = 0
            if subset:
                x[subset, t - 1] = 1
            search(t + 1, ages_t, acc + inc)
            x[:, t - 1] = 0

    search(1, landscape.initial_age.copy(), 0)
    if best_x is None:
        return ExactResult(None, None, "infeasible")
    return ExactResult(Schedule(best_x), int(best_obj), "optimal")


@dataclass(frozen=True)
class AnnealConfig:
    initial_temperature: float = 10.0
    cooling_rate: float = 0.9995
    iterations: int = 20000
    target_penalty_weight: float = 100.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.initial_temperature <= 0:
            raise ValueError("initial_temperature must be positive")
        if not (0 < self.cooling_rate < 1):
            raise ValueError("cooling_rate must be in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.target_penalty_weight <= 0:
            raise ValueError("target_penalty_weight must be positive")


@dataclass
class AnnealResult:
    schedule: Schedule
    objective: int
    feasible: bool
    penalized: float
    # Best-so-far penalised score improvements as (iteration, score); index 0
    # is the initial schedule. Nonincreasing in score by construction.
    trace: list[tuple[int, float]]


def _greedy_schedule(landscape: Landscape, setting: SettingSpec, horizon: int,
                     rng: random.Random) -> np.ndarray:
    """Constructive start: cover forced treatments, then grow spatially
    contiguous treatment patches around them without dropping the year's
    habitat floor.

    Clustering the yearly treatments keeps the immature area compact, which
    preserves far more adjacent mature pairs than scattered treatments for the
    same treated area. Keeps budget and min-TFI satisfied by construction;
    soft constraints may remain violated and are left to the annealing loop.
    """
    n, T = landscape.n_cells, horizon
    areas = landscape.area
    m_thr = landscape.mature_threshold
    min_tfi = landscape.min_tfi
    max_tfi = landscape.max_tfi
    budget = setting.budget_fraction * landscape.total_area
    pi, pj = landscape.pair_i, landscape.pair_j
    nbrs = landscape.neighbors

    x = np.zeros((n, T), dtype=np.int8)
    ages = landscape.initial_age.copy()
    for t in range(T):
        remaining = budget
        treated: list[int] = []
        mature_t = (ages + 1) >= m_thr  # before any treatment this year

        def allowed(i: int) -> bool:
            if ages[i] < min_tfi[i] or areas[i] > remaining + BUDGET_EPS:
                return False
            if setting.require_neighbor_habitat:
                return bool(len(nbrs[i]) and mature_t[list(nbrs[i])].any())
            return True

        for i in sorted(np.flatnonzero(ages >= max_tfi), key=lambda i: (-int(ages[i]), i)):
            if len(nbrs[i]) and mature_t[list(nbrs[i])].any() and allowed(i):
                treated.append(i)
                remaining -= areas[i]
                mature_t[i] = False

        # Grow patches: prefer cells next to immature ground (young, recently
        # treated or treated this year), oldest first.
        target = setting.habitat_target[t]
        immature_t = ~mature_t
        candidates = [i for i in range(n)
                      if i not in treated and ages[i] + 1 >= m_thr[i]]
        while remaining > BUDGET_EPS and candidates:
            scored = []
            for i in candidates:
                if not allowed(i):
                    continue
                cluster = int(immature_t[list(nbrs[i])].sum()) if len(nbrs[i]) else 0
                scored.append((-cluster, -int(ages[i]), i))
            if not scored:
                break
            scored.sort()
            picked = None
            for _, _, i in scored:
                mature_t[i] = False
                immature_t[i] = True
                if int(np.count_nonzero(mature_t[pi] & mature_t[pj])) >= target:
                    picked = i
                    break
                mature_t[i] = True
                immature_t[i] = False
            if picked is None:
                break
            treated.append(picked)
            remaining -= areas[picked]
            candidates.remove(picked)

        ages += 1
        if treated:
            x[treated, t] = 1
            ages[treated] = 0
    return x


class _AnnealEval:
    """Scored schedule snapshot used inside the annealing loop."""

    __slots__ = ("x", "age", "obj", "penalty", "score",
                 "neighbor_missing", "forced", "habitat_short")

    def __init__(self, landscape, setting, weight, x):
        self.x = x
        self.age = evaluate.ages_from_x(landscape, x)
        high, mature, old = evaluate.classify(landscape, self.age)
        habitat_conn = evaluate.pair_counts(landscape, mature)
        self.obj = int(evaluate.pair_counts(landscape, high).sum())
        neighbor_missing, forced, forced_frac, habitat_short = evaluate.soft_masks(
            landscape, setting, x, mature, old, habitat_conn
        )
        self.neighbor_missing = neighbor_missing
        self.forced = forced
        self.habitat_short = habitat_short
        self.penalty = (
            float(np.count_nonzero(neighbor_missing))
            + float(forced_frac[forced].sum())
            + float(habitat_short[habitat_short > 0].sum())
        )
        self.score = self.obj + weight * self.penalty

    def repair_moves(self, landscape) -> list[tuple[str, int, int]]:
        """Flip candidates aimed at the current soft violations.

        Forced-treatment violations suggest switching the cell on; a treated
        cell without a mature neighbor suggests switching it off; a habitat
        shortfall in year t suggests switching off a treatment that keeps a
        cell immature in year t.
        """
        moves: list[tuple[str, int, int]] = []
        for i, t in np.argwhere(self.forced):
            moves.append(("on", int(i), int(t)))
        for i, t in np.argwhere(self.neighbor_missing):
            moves.append(("off", int(i), int(t)))
        m_thr = landscape.mature_threshold
        for t in np.flatnonzero(self.habitat_short > 0):
            immature_now = self.age[:, t + 1] < m_thr
            for i, t2 in np.argwhere(self.x[:, : t + 1] == 1):
                if immature_now[i]:
                    moves.append(("off", int(i), int(t2)))
        return moves


def solve_anneal(landscape: Landscape, setting: SettingSpec, horizon: int,
                 config: AnnealConfig = AnnealConfig()) -> AnnealResult:
    """Simulated annealing over single-flip moves with repair.

    A move flips one x[i, t]; half the proposals are drawn uniformly, half
    target a current soft-constraint violation. Turning a treatment on is only
    proposed when the cell's previous-year age allows it; any later treatments
    of the same cell invalidated by the new reset are dropped, and budget
    overruns are repaired by switching off uniformly random other treatments
    in that year, so budget and min-TFI hold for every visited schedule. The
    score is the true objective plus target_penalty_weight times the
    soft-constraint violation magnitude; geometric cooling; deterministic
    under a fixed seed.

    Returns the best feasible schedule found, or the best penalised one if no
    feasible schedule was visited.
    """
    T = int(horizon)
    if T < 1:
        raise ValueError("horizon must be >= 1")
    if setting.horizon != T:
        raise ValueError(f"setting horizon {setting.horizon} != horizon {T}")
    n = landscape.n_cells
    rng = random.Random(config.seed)
    areas = landscape.area
    min_tfi = landscape.min_tfi
    budget = setting.budget_fraction * landscape.total_area
    weight = config.target_penalty_weight

    def flip_on(cand: np.ndarray, i: int, t: int) -> np.ndarray | None:
        ages = evaluate.ages_from_x(landscape, cand)
        if ages[i, t] < min_tfi[i] or areas[i] > budget + BUDGET_EPS:
            return None
        cand[i, t] = 1
        # Drop later same-cell treatments that the new reset invalidates.
        age = 0
        for t2 in range(t + 1, T):
            if cand[i, t2] == 1:
                if age < min_tfi[i]:
                    cand[i, t2] = 0
                    age += 1
                else:
                    age = 0
            else:
                age += 1
        # Budget repair: switch off random other treatments in year t.
        load = float(areas[cand[:, t] == 1].sum())
        while load > budget + BUDGET_EPS:
            others = [j for j in np.flatnonzero(cand[:, t]) if j != i]
            if not others:
                return None
            j = others[rng.randrange(len(others))]
            cand[j, t] = 0
            load -= areas[j]
        return cand

    def propose(state: _AnnealEval) -> np.ndarray | None:
        if state.penalty > 0 and rng.random() < 0.5:
            moves = state.repair_moves(landscape)
            if moves:
                direction, i, t = moves[rng.randrange(len(moves))]
                cand = state.x.copy()
                if direction == "off":
                    cand[i, t] = 0
                    return cand
                if cand[i, t] == 1:
                    return None
                return flip_on(cand, i, t)
        i = rng.randrange(n)
        t = rng.randrange(T)
        cand = state.x.copy()
        if cand[i, t] == 1:
            cand[i, t] = 0
            return cand
        return flip_on(cand, i, t)

    cur = _AnnealEval(landscape, setting, weight,
                      _greedy_schedule(landscape, setting, horizon, rng))
    best = cur
    best_feasible: _AnnealEval | None = cur if cur.penalty == 0.0 else None
    trace: list[tuple[int, float]] = [(0, cur.score)]

    temp = config.initial_temperature
    for it in range(1, config.iterations + 1):
        cand_x = propose(cur)
        if cand_x is not None:
            cand = _AnnealEval(landscape, setting, weight, cand_x)
            if cand.score < best.score:
                best = cand
                trace.append((it, best.score))
            if cand.penalty == 0.0 and (best_feasible is None or cand.obj < best_feasible.obj):
                best_feasible = cand
            delta = cand.score - cur.score
            if delta <= 0 or rng.random() < math.exp(-delta / temp):
                cur = cand
        temp *= config.cooling_rate

    winner = best_feasible if best_feasible is not None else best
    return AnnealResult(Schedule(winner.x.copy()), winner.obj,
                        winner.penalty == 0.0, winner.score, trace)
