"""Command-line interface.

Subcommands: generate, solve, evaluate, simulate, experiment, export-mps,
import-solution. Exit codes: 0 success, 1 infeasible after relaxing the
habitat floor, 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import mip
from .evaluate import (
    Schedule,
    SettingSpec,
    check,
    derive,
    initial_high_pairs,
    initial_mature_pairs,
    objective,
    read_schedule,
    write_schedule,
)
from .experiment import (
    ExperimentConfig,
    load_config,
    emit_report,
    run_experiments,
    write_replicates_csv,
    write_runs_csv,
)
from .fauna import occupancy_fraction, simulate_occupancy, write_occupancy
from .landscape import CellParams, GenerationConfig, generate_random, read_landscape, write_landscape
from .solvers import AnnealConfig, solve_anneal, solve_exact

EXIT_OK = 0
EXIT_INFEASIBLE = 1
EXIT_INVALID = 2


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="random seed")
    parser.add_argument("--config", type=Path, default=None, help="experiment config JSON")
    parser.add_argument("--outdir", type=Path, default=Path("."), help="output directory")


def _cell_params(args) -> CellParams:
    return CellParams(
        area=args.area,
        mature_threshold=args.mature,
        high_threshold=args.high,
        min_tfi=args.min_tfi,
        max_tfi=args.max_tfi,
    )


def _setting_for(args, landscape) -> SettingSpec:
    base = initial_mature_pairs(landscape) if args.setting in (1, 2) else 0
    if args.habitat_target is not None:
        base = args.habitat_target
    return SettingSpec(
        habitat_target=tuple(base for _ in range(args.horizon)),
        require_neighbor_habitat=args.setting in (1, 3),
        budget_fraction=args.budget,
    )


def _cmd_generate(args) -> int:
    if args.age_probs:
        probs = tuple(float(p) for p in args.age_probs.split(","))
        gen = GenerationConfig(args.rows, args.cols, tuple(range(len(probs))), probs, args.seed)
    else:
        gen = GenerationConfig.uniform(args.rows, args.cols, max_age=args.max_tfi, seed=args.seed)
    landscape = generate_random(gen, _cell_params(args))
    write_landscape(landscape, args.out)
    print(f"wrote {args.out}: {args.rows}x{args.cols}, "
          f"{initial_high_pairs(landscape)} high pairs, "
          f"{initial_mature_pairs(landscape)} mature pairs")
    return EXIT_OK


def _cmd_solve(args) -> int:
    landscape = read_landscape(args.landscape)
    setting = _setting_for(args, landscape)
    base = setting.habitat_target[0]
    ramp_years = 0

    def run(candidate: SettingSpec):
        if args.solver == "exact":
            res = solve_exact(landscape, candidate, args.horizon, cap=args.exact_cap)
            return res.schedule, res.objective, res.status == "optimal"
        config = AnnealConfig(iterations=args.iterations, seed=args.seed)
        res = solve_anneal(landscape, candidate, args.horizon, config)
        return res.schedule, res.objective, res.feasible

    schedule, obj, feasible = run(setting)
    if not feasible and base > 0 and not args.no_ramp:
        cache = {}

        def attempt(targets):
            candidate = SettingSpec(targets, setting.require_neighbor_habitat, args.budget)
            cache[targets] = run(candidate)
            return cache[targets][2]

        targets = mip.ramp_targets(landscape, base, args.horizon, attempt)
        schedule, obj, feasible = cache[targets]
        ramp_years = sum(1 for g in targets if g != base)
        setting = SettingSpec(targets, setting.require_neighbor_habitat, args.budget)

    if schedule is not None:
        write_schedule(schedule, args.out)
    summary = {
        "feasible": feasible,
        "objective": obj,
        "ramp_years": ramp_years,
        "habitat_target": list(setting.habitat_target),
        "schedule": str(args.out) if schedule is not None else None,
    }
    print(json.dumps(summary, indent=2))
    return EXIT_OK if feasible else EXIT_INFEASIBLE


def _cmd_evaluate(args) -> int:
    landscape = read_landscape(args.landscape)
    schedule = read_schedule(args.schedule)
    setting = _setting_for(args, landscape)
    state = derive(landscape, schedule)
    report = check(landscape, schedule, setting, state)
    print(f"objective {objective(state)}")
    print(f"feasible {report.feasible}")
    print(f"high_conn {' '.join(str(int(v)) for v in state.high_conn)}")
    print(f"habitat_conn {' '.join(str(int(v)) for v in state.habitat_conn)}")
    for v in report.violations:
        print(f"violation {v.kind} where={v.where} year={v.year} magnitude={v.magnitude:g}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    landscape = read_landscape(args.landscape)
    schedule = read_schedule(args.schedule)
    occupancy = simulate_occupancy(landscape, schedule)
    write_occupancy(occupancy, args.out)
    fractions = " ".join(f"{occupancy_fraction(occupancy, t):.4f}"
                         for t in range(occupancy.horizon + 1))
    print(f"occupied_fraction {fractions}")
    return EXIT_OK


def _cmd_experiment(args) -> int:
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = ExperimentConfig(seed=args.seed)
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    needs_mps = config.solver == "external-mps" or config.export_mps
    series, runs = run_experiments(config, mps_dir=outdir if needs_mps else None)
    emit_report(series, outdir)
    write_replicates_csv(runs, outdir / "replicates.csv")
    write_runs_csv(runs, outdir / "runs.csv")
    (outdir / "resolved_config.json").write_text(
        json.dumps(config.to_dict(), indent=2) + "\n"
    )
    solved = [r for r in runs if r.status != "exported"]
    failures = [r for r in solved if not r.feasible]
    print(f"{len(solved)} runs solved, {len(failures)} infeasible; report in {outdir}")
    return EXIT_INFEASIBLE if failures else EXIT_OK


def _cmd_export_mps(args) -> int:
    landscape = read_landscape(args.landscape)
    setting = _setting_for(args, landscape)
    instance = mip.build(landscape, setting, args.horizon)
    mip.export_mps(instance, args.out)
    print(f"wrote {args.out}: {len(instance.variables)} variables, "
          f"{len(instance.rows)} rows, big_m {instance.big_m:g}")
    return EXIT_OK


def _cmd_import_solution(args) -> int:
    landscape = read_landscape(args.landscape)
    setting = _setting_for(args, landscape)
    instance = mip.build(landscape, setting, args.horizon)
    solution = mip.import_solution(instance, args.solution)
    print(f"status {solution.status}")
    print(f"objective {solution.objective_value:g}")
    if solution.claimed_objective is not None:
        print(f"claimed_objective {solution.claimed_objective:g}"
              + (" MISMATCH" if solution.objective_mismatch else ""))
    for name, amount in solution.violated_rows:
        print(f"violated {name} by {amount:g}")
    if args.schedule_out is not None:
        schedule = mip.schedule_from_values(landscape.n_cells, args.horizon, solution.values)
        write_schedule(schedule, args.schedule_out)
    return EXIT_OK if solution.status == "feasible" else EXIT_INFEASIBLE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fuelsched",
                                     description="Fuel treatment scheduling toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def cell_flags(p):
        p.add_argument("--area", type=float, default=1.0)
        p.add_argument("--mature", type=int, default=8)
        p.add_argument("--high", type=int, default=12)
        p.add_argument("--min-tfi", dest="min_tfi", type=int, default=2)
        p.add_argument("--max-tfi", dest="max_tfi", type=int, default=16)

    def setting_flags(p):
        p.add_argument("--setting", type=int, choices=(1, 2, 3, 4), required=True)
        p.add_argument("--horizon", type=int, required=True)
        p.add_argument("--budget", type=float, default=0.10)
        p.add_argument("--habitat-target", dest="habitat_target", type=int, default=None,
                       help="override the yearly habitat floor")

    p = sub.add_parser("generate", help="generate a random landscape file")
    _add_common(p)
    cell_flags(p)
    p.add_argument("--rows", type=int, required=True)
    p.add_argument("--cols", type=int, required=True)
    p.add_argument("--age-probs", dest="age_probs", default=None,
                   help="comma-separated probabilities for ages 0..k")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("solve", help="solve a treatment schedule")
    _add_common(p)
    setting_flags(p)
    p.add_argument("--landscape", type=Path, required=True)
    p.add_argument("--solver", choices=("anneal", "exact"), default="anneal")
    p.add_argument("--iterations", type=int, default=20000)
    p.add_argument("--exact-cap", dest="exact_cap", type=int, default=36)
    p.add_argument("--no-ramp", dest="no_ramp", action="store_true",
                   help="fail instead of relaxing the habitat floor")
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("evaluate", help="evaluate a schedule against a setting")
    _add_common(p)
    setting_flags(p)
    p.add_argument("--landscape", type=Path, required=True)
    p.add_argument("--schedule", type=Path, required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("simulate", help="replay faunal occupancy over a schedule")
    _add_common(p)
    p.add_argument("--landscape", type=Path, required=True)
    p.add_argument("--schedule", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("experiment", help="run the replicate experiment grid")
    _add_common(p)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("export-mps", help="write the model as a free-format MPS file")
    _add_common(p)
    setting_flags(p)
    p.add_argument("--landscape", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=_cmd_export_mps)

    p = sub.add_parser("import-solution", help="map a solver solution file back")
    _add_common(p)
    setting_flags(p)
    p.add_argument("--landscape", type=Path, required=True)
    p.add_argument("--solution", type=Path, required=True)
    p.add_argument("--schedule-out", dest="schedule_out", type=Path, default=None)
    p.set_defaults(func=_cmd_import_solution)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
