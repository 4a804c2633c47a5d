"""Batch experiments: replicate landscapes, the four settings, metric aggregation.

For each (grid size, replicate, setting) the runner generates a seeded random
landscape, solves the treatment schedule, replays faunal occupancy and records
per-year metrics. Replicate failures (infeasible even after relaxing the
habitat floor) are counted and excluded from aggregation, never dropped
silently. Everything is deterministic given the config.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import mip
from .evaluate import (
    Schedule,
    SettingSpec,
    count_adjacent_pairs,
    derive,
    initial_mature_pairs,
)
from .fauna import OccupancyState, simulate_occupancy
from .landscape import CellParams, GenerationConfig, Landscape, generate_random, write_landscape
from .solvers import AnnealConfig, solve_anneal, solve_exact

METRICS = ("high_conn", "habitat_conn", "pct_high", "pct_mature", "pct_occupied")

SOLVERS = ("anneal", "exact", "external-mps")

# 95% confidence half-width via the normal approximation.
CI_Z = 1.96

# Initial-age profile for trend experiments (probability of age 0..16).
# Young-leaning with a thin over-14 tail: most of the initially mature cohort
# crosses the maximum TFI only late in a 10-year horizon, so the mandatory
# treatment load stays within budget and habitat floors near the initial
# connectivity remain attainable. With uniform ages the floor settings are
# almost always infeasible (every year ~6% of cells cross the maximum TFI and
# their forced treatments crash the mature-pair count), so uniform generation
# exercises the relaxation path more than the maintained-floor regime.
EXPERIMENT_AGE_PROFILE = (
    0.09, 0.09, 0.09, 0.09, 0.08, 0.08,  # ages 0-5
    0.05, 0.05,                          # ages 6-7
    0.04, 0.04, 0.04, 0.04,             # ages 8-11
    0.06, 0.06, 0.05,                    # ages 12-14
    0.03, 0.02,                          # ages 15-16
)


@dataclass(frozen=True)
class ExperimentConfig:
    sizes: tuple[tuple[int, int], ...] = ((10, 10), (15, 15))
    replicates: int = 30
    horizon: int = 10
    budget_fraction: float = 0.10
    settings: tuple[int, ...] = (1, 2, 3, 4)
    seed: int = 0
    solver: str = "anneal"
    cell: CellParams = field(default_factory=CellParams)
    # age_probs[k] is the probability of initial age k; None means uniform
    # over 0..cell.max_tfi. Runs record the distribution actually used.
    age_probs: tuple[float, ...] | None = None
    anneal: AnnealConfig = field(default_factory=AnnealConfig)
    exact_cap: int = 36
    export_mps: bool = False
    # Iteration count for the quick feasibility probe tried at each relaxation
    # level before the full-quality solve; None disables probing.
    ramp_probe_iterations: int | None = 8000

    def __post_init__(self) -> None:
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.solver not in SOLVERS:
            raise ValueError(f"solver must be one of {SOLVERS}, got {self.solver!r}")
        if not self.settings or any(s not in (1, 2, 3, 4) for s in self.settings):
            raise ValueError("settings must be a non-empty subset of {1, 2, 3, 4}")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    def resolved_age_probs(self) -> tuple[float, ...]:
        if self.age_probs is not None:
            return self.age_probs
        k = self.cell.max_tfi + 1
        return tuple(1.0 / k for _ in range(k))

    def generation(self, rows: int, cols: int, seed: int) -> GenerationConfig:
        probs = self.resolved_age_probs()
        return GenerationConfig(rows, cols, tuple(range(len(probs))), probs, seed)

    def to_dict(self) -> dict:
        return {
            "sizes": [list(s) for s in self.sizes],
            "replicates": self.replicates,
            "horizon": self.horizon,
            "budget_fraction": self.budget_fraction,
            "settings": list(self.settings),
            "seed": self.seed,
            "solver": self.solver,
            "cell": {
                "area": self.cell.area,
                "mature_threshold": self.cell.mature_threshold,
                "high_threshold": self.cell.high_threshold,
                "min_tfi": self.cell.min_tfi,
                "max_tfi": self.cell.max_tfi,
            },
            "age_probs": list(self.resolved_age_probs()),
            "anneal": {
                "initial_temperature": self.anneal.initial_temperature,
                "cooling_rate": self.anneal.cooling_rate,
                "iterations": self.anneal.iterations,
                "target_penalty_weight": self.anneal.target_penalty_weight,
                "seed": self.anneal.seed,
            },
            "exact_cap": self.exact_cap,
            "export_mps": self.export_mps,
            "ramp_probe_iterations": self.ramp_probe_iterations,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        kwargs: dict = {}
        if "sizes" in doc:
            kwargs["sizes"] = tuple(tuple(int(v) for v in s) for s in doc["sizes"])
        for key in ("replicates", "horizon", "seed", "exact_cap"):
            if key in doc:
                kwargs[key] = int(doc[key])
        if "budget_fraction" in doc:
            kwargs["budget_fraction"] = float(doc["budget_fraction"])
        if "settings" in doc:
            kwargs["settings"] = tuple(int(s) for s in doc["settings"])
        if "solver" in doc:
            kwargs["solver"] = str(doc["solver"])
        if "export_mps" in doc:
            kwargs["export_mps"] = bool(doc["export_mps"])
        if "ramp_probe_iterations" in doc:
            value = doc["ramp_probe_iterations"]
            kwargs["ramp_probe_iterations"] = None if value is None else int(value)
        if "cell" in doc:
            kwargs["cell"] = CellParams(
                area=float(doc["cell"].get("area", 1.0)),
                mature_threshold=int(doc["cell"].get("mature_threshold", 8)),
                high_threshold=int(doc["cell"].get("high_threshold", 12)),
                min_tfi=int(doc["cell"].get("min_tfi", 2)),
                max_tfi=int(doc["cell"].get("max_tfi", 16)),
            )
        if "age_probs" in doc and doc["age_probs"] is not None:
            kwargs["age_probs"] = tuple(float(p) for p in doc["age_probs"])
        if "anneal" in doc:
            a = doc["anneal"]
            kwargs["anneal"] = AnnealConfig(
                initial_temperature=float(a.get("initial_temperature", 10.0)),
                cooling_rate=float(a.get("cooling_rate", 0.9995)),
                iterations=int(a.get("iterations", 20000)),
                target_penalty_weight=float(a.get("target_penalty_weight", 100.0)),
                seed=int(a.get("seed", 0)),
            )
        return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))


def _child_seed(*key: int) -> int:
    return int(np.random.SeedSequence(tuple(int(k) for k in key)).generate_state(1)[0])


@dataclass
class SolveOutcome:
    schedule: Schedule | None
    objective: int | None
    feasible: bool
    habitat_target: tuple[int, ...]
    ramp_years: int


@dataclass
class ReplicateRun:
    size: str
    rows: int
    cols: int
    replicate: int
    setting: int
    status: str  # 'feasible' | 'infeasible' | 'exported'
    objective: int | None
    ramp_years: int
    habitat_target: tuple[int, ...]
    metrics: dict[str, list[float]] | None
    schedule: Schedule | None

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


def _solve_once(landscape: Landscape, setting: SettingSpec, config: ExperimentConfig,
                seed_key: tuple[int, ...], iterations: int | None = None):
    if config.solver == "exact":
        res = solve_exact(landscape, setting, config.horizon, cap=config.exact_cap)
        return res.schedule, res.objective, res.status == "optimal"
    anneal = replace(config.anneal, seed=_child_seed(config.seed, *seed_key))
    if iterations is not None:
        anneal = replace(anneal, iterations=iterations)
    res = solve_anneal(landscape, setting, config.horizon, anneal)
    return res.schedule, res.objective, res.feasible


def solve_setting(landscape: Landscape, setting_number: int, config: ExperimentConfig,
                  seed_key: tuple[int, ...] = ()) -> SolveOutcome:
    """Solve one setting, relaxing the habitat floor year-prefix on infeasibility.

    Settings with a zero floor have nothing to relax; for the others the floor
    is the initial mature-pair count, and infeasibility triggers the smallest
    feasible prefix relaxation (ramp_years counts the relaxed years). With the
    annealing solver each relaxation level is first screened with a short
    probe run; a full-quality solve confirms (and is the recorded result).
    """
    T = config.horizon
    base = initial_mature_pairs(landscape) if setting_number in (1, 2) else 0
    nbr = setting_number in (1, 3)
    probe_iters = config.ramp_probe_iterations
    if config.solver == "exact" or (probe_iters is not None
                                    and probe_iters >= config.anneal.iterations):
        probe_iters = None

    cache: dict[tuple[int, ...], tuple] = {}

    def attempt(targets: tuple[int, ...]) -> bool:
        if targets in cache:
            return cache[targets][2]
        k = sum(1 for g in targets if g != base) if base else 0
        setting = SettingSpec(targets, nbr, config.budget_fraction)
        if probe_iters is not None and k > 0:
            probe = _solve_once(landscape, setting, config,
                                (*seed_key, setting_number, k, 1), iterations=probe_iters)
            if not probe[2]:
                cache[targets] = probe
                return False
        outcome = _solve_once(landscape, setting, config, (*seed_key, setting_number, k, 0))
        cache[targets] = outcome
        return outcome[2]

    full = tuple(base for _ in range(T))
    if attempt(full) or base == 0:
        schedule, obj, feasible = cache[full]
        return SolveOutcome(schedule, obj, feasible, full, 0)

    targets = mip.ramp_targets(landscape, base, T, attempt)
    schedule, obj, feasible = cache[targets]
    ramp_years = sum(1 for g in targets if g != base)
    return SolveOutcome(schedule, obj, feasible, targets, ramp_years)


def _run_metrics(landscape: Landscape, state, occupancy: OccupancyState) -> dict[str, list[float]]:
    n = landscape.n_cells
    age0 = state.age[:, 0]
    high0 = age0 >= landscape.high_threshold
    mature0 = age0 >= landscape.mature_threshold
    return {
        "high_conn": [float(count_adjacent_pairs(landscape, high0))] + state.high_conn.astype(float).tolist(),
        "habitat_conn": [float(count_adjacent_pairs(landscape, mature0))] + state.habitat_conn.astype(float).tolist(),
        "pct_high": [100.0 * float(high0.sum()) / n] + (100.0 * state.high.sum(axis=0) / n).tolist(),
        "pct_mature": [100.0 * float(mature0.sum()) / n] + (100.0 * state.mature.sum(axis=0) / n).tolist(),
        "pct_occupied": (100.0 * occupancy.occupied.sum(axis=0) / n).tolist(),
    }


def run_experiments(config: ExperimentConfig, mps_dir=None):
    """Run the full grid of (size, replicate, setting) and aggregate metrics.

    Returns (MetricSeries, list[ReplicateRun]). With solver='external-mps'
    instances are exported to ``mps_dir`` instead of being solved.
    """
    if (config.solver == "external-mps" or config.export_mps) and mps_dir is None:
        raise ValueError("model export needs an output directory for the files")
    runs: list[ReplicateRun] = []
    for size_idx, (rows, cols) in enumerate(config.sizes):
        size = f"{rows}x{cols}"
        for rep in range(config.replicates):
            gen = config.generation(rows, cols, config.seed + rep)
            landscape = generate_random(gen, config.cell)
            if config.export_mps or config.solver == "external-mps":
                write_landscape(landscape, Path(mps_dir) / f"{size}_r{rep}.json")
            for setting_number in config.settings:
                if config.solver == "external-mps":
                    base = initial_mature_pairs(landscape) if setting_number in (1, 2) else 0
                    setting = SettingSpec(tuple(base for _ in range(config.horizon)),
                                          setting_number in (1, 3), config.budget_fraction)
                    instance = mip.build(landscape, setting, config.horizon)
                    mip.export_mps(instance, Path(mps_dir) / f"{size}_r{rep}_s{setting_number}.mps")
                    runs.append(ReplicateRun(size, rows, cols, rep, setting_number,
                                             "exported", None, 0, setting.habitat_target,
                                             None, None))
                    continue
                outcome = solve_setting(landscape, setting_number, config,
                                        seed_key=(size_idx, rep))
                if not outcome.feasible or outcome.schedule is None:
                    runs.append(ReplicateRun(size, rows, cols, rep, setting_number,
                                             "infeasible", outcome.objective,
                                             outcome.ramp_years, outcome.habitat_target,
                                             None, outcome.schedule))
                    continue
                state = derive(landscape, outcome.schedule)
                occupancy = simulate_occupancy(landscape, outcome.schedule, state)
                metrics = _run_metrics(landscape, state, occupancy)
                if config.export_mps:
                    setting = SettingSpec(outcome.habitat_target, setting_number in (1, 3),
                                          config.budget_fraction)
                    instance = mip.build(landscape, setting, config.horizon)
                    mip.export_mps(instance, Path(mps_dir) / f"{size}_r{rep}_s{setting_number}.mps")
                runs.append(ReplicateRun(size, rows, cols, rep, setting_number,
                                         "feasible", outcome.objective, outcome.ramp_years,
                                         outcome.habitat_target, metrics, outcome.schedule))
    return aggregate(runs, config), runs


@dataclass(frozen=True)
class MetricRecord:
    setting: int
    size: str
    year: int
    metric: str
    mean: float
    half_width: float
    n: int
    excluded: int
    degenerate: bool  # fewer than two replicates: half_width reported as 0

    @property
    def ci_low(self) -> float:
        return self.mean - self.half_width

    @property
    def ci_high(self) -> float:
        return self.mean + self.half_width


@dataclass
class MetricSeries:
    records: list[MetricRecord]

    def get(self, setting: int, size: str, year: int, metric: str) -> MetricRecord:
        for r in self.records:
            if (r.setting, r.size, r.year, r.metric) == (setting, size, year, metric):
                return r
        raise KeyError((setting, size, year, metric))


def aggregate(runs: list[ReplicateRun], config: ExperimentConfig) -> MetricSeries:
    """Cross-replicate means with 95% CI half-widths (1.96 * sd / sqrt(n))."""
    records: list[MetricRecord] = []
    for rows, cols in config.sizes:
        size = f"{rows}x{cols}"
        for setting_number in config.settings:
            group = [r for r in runs if r.size == size and r.setting == setting_number]
            ok = [r for r in group if r.feasible and r.metrics is not None]
            excluded = len(group) - len(ok)
            if not ok:
                continue
            n = len(ok)
            degenerate = n < 2
            for year in range(config.horizon + 1):
                for metric in METRICS:
                    values = np.array([r.metrics[metric][year] for r in ok], dtype=float)
                    mean = float(values.mean())
                    if degenerate:
                        hw = 0.0
                    else:
                        hw = CI_Z * float(values.std(ddof=1)) / float(np.sqrt(n))
                    records.append(MetricRecord(setting_number, size, year, metric,
                                                mean, hw, n, excluded, degenerate))
    return MetricSeries(records)


def _w(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_report(series: MetricSeries, destination) -> list[Path]:
    """Write one CSV per metric (setting,size,year,mean,ci_low,ci_high) plus a
    combined long-format CSV with replicate counts. Returns the paths."""
    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    paths = []
    for metric in METRICS:
        path = dest / f"{metric}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["setting", "size", "year", "mean", "ci_low", "ci_high"])
            for r in series.records:
                if r.metric == metric:
                    writer.writerow([r.setting, r.size, r.year,
                                     _w(r.mean), _w(r.ci_low), _w(r.ci_high)])
        paths.append(path)
    path = dest / "metrics_long.csv"
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "size", "year", "metric", "mean", "ci_low", "ci_high",
                         "n", "excluded", "degenerate"])
        for r in series.records:
            writer.writerow([r.setting, r.size, r.year, r.metric,
                             _w(r.mean), _w(r.ci_low), _w(r.ci_high),
                             r.n, r.excluded, int(r.degenerate)])
    paths.append(path)
    return paths


def write_replicates_csv(runs: list[ReplicateRun], path) -> None:
    """Raw per-replicate, per-year metric values (feasible runs only)."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size", "replicate", "setting", "year", *METRICS])
        for r in runs:
            if not r.feasible or r.metrics is None:
                continue
            years = len(r.metrics[METRICS[0]])
            for year in range(years):
                writer.writerow([r.size, r.replicate, r.setting, year,
                                 *[_w(r.metrics[m][year]) for m in METRICS]])


def write_runs_csv(runs: list[ReplicateRun], path) -> None:
    """Per-run summary: status, objective, relaxed years, final habitat floor."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["size", "replicate", "setting", "status", "objective",
                         "ramp_years", "habitat_target"])
        for r in runs:
            writer.writerow([r.size, r.replicate, r.setting, r.status,
                             "" if r.objective is None else r.objective,
                             r.ramp_years, " ".join(str(g) for g in r.habitat_target)])


@dataclass
class IllustrationRun:
    setting: int
    status: str
    objective: int | None
    ramp_years: int
    habitat_target: tuple[int, ...]
    schedule: Schedule | None
    occupancy: OccupancyState | None
    metrics: dict[str, list[float]] | None

    @property
    def feasible(self) -> bool:
        return self.status == "feasible"


@dataclass
class IllustrationResult:
    landscape: Landscape
    horizon: int
    runs: list[IllustrationRun]


def run_illustration(config: ExperimentConfig, landscape: Landscape | None = None) -> IllustrationResult:
    """Solve every configured setting on a single landscape and replay occupancy.

    The landscape is generated from the config seed when not provided.
    Infeasibility is handled by the same habitat-floor relaxation as the batch
    runner, and the relaxation is recorded on the run.
    """
    if landscape is None:
        rows, cols = config.sizes[0]
        landscape = generate_random(config.generation(rows, cols, config.seed), config.cell)
    runs: list[IllustrationRun] = []
    for setting_number in config.settings:
        outcome = solve_setting(landscape, setting_number, config, seed_key=(273,))
        if not outcome.feasible or outcome.schedule is None:
            runs.append(IllustrationRun(setting_number, "infeasible", outcome.objective,
                                        outcome.ramp_years, outcome.habitat_target,
                                        outcome.schedule, None, None))
            continue
        state = derive(landscape, outcome.schedule)
        occupancy = simulate_occupancy(landscape, outcome.schedule, state)
        runs.append(IllustrationRun(setting_number, "feasible", outcome.objective,
                                    outcome.ramp_years, outcome.habitat_target,
                                    outcome.schedule, occupancy,
                                    _run_metrics(landscape, state, occupancy)))
    return IllustrationResult(landscape, config.horizon, runs)


def write_illustration(result: IllustrationResult, destination) -> None:
    """Write per-setting metrics, schedules, occupancy and the year-by-year age
    mosaic (long CSV: setting,year,row,col,age,high,mature,occupied)."""
    from .evaluate import write_schedule
    from .fauna import write_occupancy

    dest = Path(destination)
    dest.mkdir(parents=True, exist_ok=True)
    land = result.landscape
    rows = land.rows or 1
    cols = land.cols or land.n_cells

    with (dest / "illustration_metrics.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "year", "metric", "value"])
        for run in result.runs:
            if run.metrics is None:
                continue
            for metric in METRICS:
                for year, value in enumerate(run.metrics[metric]):
                    writer.writerow([run.setting, year, metric, _w(value)])

    with (dest / "illustration_mosaic.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["setting", "year", "row", "col", "age", "high", "mature", "occupied"])
        for run in result.runs:
            if run.schedule is None or run.occupancy is None:
                continue
            state = derive(land, run.schedule)
            for year in range(result.horizon + 1):
                age = state.age[:, year]
                high = age >= land.high_threshold
                mature = age >= land.mature_threshold
                occ = run.occupancy.occupied[:, year]
                for r in range(rows):
                    for c in range(cols):
                        i = r * cols + c
                        writer.writerow([run.setting, year, r, c, int(age[i]),
                                         int(high[i]), int(mature[i]), int(occ[i])])

    summary = []
    for run in result.runs:
        summary.append({
            "setting": run.setting,
            "status": run.status,
            "objective": run.objective,
            "ramp_years": run.ramp_years,
            "habitat_target": list(run.habitat_target),
        })
        if run.schedule is not None:
            write_schedule(run.schedule, dest / f"schedule_setting{run.setting}.txt")
        if run.occupancy is not None:
            write_occupancy(run.occupancy, dest / f"occupancy_setting{run.setting}.txt")
    (dest / "illustration_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
