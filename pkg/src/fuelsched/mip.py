"""Mixed-integer model lowering and solver file exchange.

Lowers (landscape, setting, horizon) to an explicit MIP over named variables
and linear rows, writes it as free-format MPS for external solvers, and maps
solver solution files back. No solver is embedded; exchange is file-based.

Variable names (the public naming contract, also in FORMATS.md):

    x_{i}_{t}      binary     treat cell i in year t            t = 1..T
    A_{i}_{t}      continuous fuel age of cell i in year t      t = 0..T
    High_{i}_{t}   binary     age >= high threshold             t = 1..T
    HC_{i}_{j}_{t} binary     cells i,j adjacent and both high  t = 1..T
    Mat_{i}_{t}    binary     age >= mature threshold           t = 1..T
    MC_{i}_{j}_{t} binary     cells i,j adjacent and both mature t = 1..T
    Old_{i}_{t}    binary     age >= max TFI                    t = 0..T-1

The objective row COST minimises the sum of all HC variables. Fuel ages are
modelled as continuous variables; the rows only ever assign them integer
values. The big-M constant exceeds the maximum attainable fuel age.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evaluate import Schedule, SettingSpec, derive
from .landscape import Landscape

MODEL_NAME = "FUELSCHED"

# Row family tags; each row name is "<FAMILY>_<indices>".
BUDGET_ROW = "BUDGET"          # treated area per year within budget
AGE_INIT = "AGEINIT"           # year-0 age fixed to the initial age
AGE_GROW_LB = "AGELB"          # untreated age grows by at least one
AGE_RESET = "AGERESET"         # treated age forced to zero
AGE_GROW_UB = "AGEUB"          # age grows by at most one
HIGH_ON = "HIGHON"             # age >= high threshold forces High = 1
HIGH_OFF = "HIGHOFF"           # High = 1 requires age >= high threshold
HIGH_PAIR = "HIGHPAIR"         # both-high adjacent pair forces HC = 1
MATURE_ON = "MATON"            # age >= mature threshold forces Mat = 1
MATURE_OFF = "MATOFF"          # Mat = 1 requires age >= mature threshold
NEIGHBOR_HABITAT_ROW = "NBRHAB"  # treated cell needs a mature neighbor
MATURE_PAIR_LB = "MATPAIRLB"   # both-mature adjacent pair forces MC = 1
MATURE_PAIR_UB = "MATPAIRUB"   # MC = 1 requires both cells mature
HABITAT_TARGET_ROW = "HABTARGET"  # yearly mature-pair count floor
OLD_ON = "OLDON"               # age >= max TFI forces Old = 1
OLD_OFF = "OLDOFF"             # Old = 1 requires age >= max TFI
FORCED_ROW = "FORCED"          # over-max-TFI cell with mature neighbor must be treated
MIN_TFI_ROW = "MINTFI"         # treatment requires previous age >= min TFI


def var_x(i: int, t: int) -> str:
    return f"x_{i}_{t}"


def var_age(i: int, t: int) -> str:
    return f"A_{i}_{t}"


def var_high(i: int, t: int) -> str:
    return f"High_{i}_{t}"


def var_high_conn(i: int, j: int, t: int) -> str:
    return f"HC_{i}_{j}_{t}"


def var_mature(i: int, t: int) -> str:
    return f"Mat_{i}_{t}"


def var_mature_conn(i: int, j: int, t: int) -> str:
    return f"MC_{i}_{j}_{t}"


def var_old(i: int, t: int) -> str:
    return f"Old_{i}_{t}"


@dataclass(frozen=True)
class Row:
    """One linear constraint: coeffs . vars  (sense)  rhs."""

    name: str
    family: str
    coeffs: tuple[tuple[str, float], ...]
    sense: str  # 'L' (<=), 'G' (>=), 'E' (=)
    rhs: float


@dataclass
class MipInstance:
    name: str
    n_cells: int
    horizon: int
    big_m: float
    variables: dict[str, str]  # name -> 'binary' | 'continuous', declaration order
    rows: list[Row]
    objective: tuple[tuple[str, float], ...]
    omitted_habitat_years: tuple[int, ...] = ()

    @property
    def binaries(self) -> set[str]:
        return {v for v, kind in self.variables.items() if kind == "binary"}

    def rows_map(self) -> dict[str, tuple[str, float, dict[str, float]]]:
        return {r.name: (r.sense, r.rhs, dict(r.coeffs)) for r in self.rows}

    def iter_rows(self):
        for r in self.rows:
            yield r.name, r.coeffs, r.sense, r.rhs


def build(landscape: Landscape, setting: SettingSpec, horizon: int) -> MipInstance:
    """Lower a landscape and setting to the explicit MIP.

    Emits every constraint family listed in the module docstring; the
    neighbor-habitat rows only when the setting enables them, and the yearly
    habitat-floor rows only for years with a nonzero target (omissions are
    recorded on the instance).
    """
    T = int(horizon)
    if T < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if setting.horizon != T:
        raise ValueError(f"setting horizon {setting.horizon} != horizon {T}")
    n = landscape.n_cells
    pairs = list(zip(landscape.pair_i.tolist(), landscape.pair_j.tolist()))
    for t, g in enumerate(setting.habitat_target, start=1):
        if g > len(pairs):
            raise ValueError(
                f"habitat target {g} in year {t} exceeds the {len(pairs)} adjacent pairs"
            )
    big_m = float(int(landscape.initial_age.max()) + T + 1)

    variables: dict[str, str] = {}
    for i in range(n):
        for t in range(1, T + 1):
            variables[var_x(i, t)] = "binary"
    for i in range(n):
        for t in range(1, T + 1):
            variables[var_high(i, t)] = "binary"
    for (i, j) in pairs:
        for t in range(1, T + 1):
            variables[var_high_conn(i, j, t)] = "binary"
    for i in range(n):
        for t in range(1, T + 1):
            variables[var_mature(i, t)] = "binary"
    for (i, j) in pairs:
        for t in range(1, T + 1):
            variables[var_mature_conn(i, j, t)] = "binary"
    for i in range(n):
        for t in range(T):
            variables[var_old(i, t)] = "binary"
    for i in range(n):
        for t in range(T + 1):
            variables[var_age(i, t)] = "continuous"

    area = landscape.area
    m_thr = landscape.mature_threshold
    d_thr = landscape.high_threshold
    min_tfi = landscape.min_tfi
    max_tfi = landscape.max_tfi
    a0 = landscape.initial_age
    budget_limit = setting.budget_fraction * landscape.total_area

    rows: list[Row] = []

    for t in range(1, T + 1):
        coeffs = tuple((var_x(i, t), float(area[i])) for i in range(n))
        rows.append(Row(f"{BUDGET_ROW}_{t}", BUDGET_ROW, coeffs, "L", budget_limit))

    for i in range(n):
        rows.append(Row(f"{AGE_INIT}_{i}", AGE_INIT, ((var_age(i, 0), 1.0),), "E", float(a0[i])))

    for i in range(n):
        for t in range(1, T + 1):
            rows.append(Row(
                f"{AGE_GROW_LB}_{i}_{t}", AGE_GROW_LB,
                ((var_age(i, t), 1.0), (var_age(i, t - 1), -1.0), (var_x(i, t), big_m)),
                "G", 1.0,
            ))
    for i in range(n):
        for t in range(1, T + 1):
            rows.append(Row(
                f"{AGE_RESET}_{i}_{t}", AGE_RESET,
                ((var_age(i, t), 1.0), (var_x(i, t), big_m)),
                "L", big_m,
            ))
    for i in range(n):
        for t in range(1, T + 1):
            rows.append(Row(
                f"{AGE_GROW_UB}_{i}_{t}", AGE_GROW_UB,
                ((var_age(i, t), 1.0), (var_age(i, t - 1), -1.0)),
                "L", 1.0,
            ))

    for i in range(n):
        for t in range(1, T + 1):
            rows.append(Row(
                f"{HIGH_ON}_{i}_{t}", HIGH_ON,
                ((var_age(i, t), 1.0), (var_high(i, t), -big_m)),
                "L", float(d_thr[i]) - 1.0,
            ))
    for i in range(n):
        for t in range(1, T + 1):
            rows.append(Row(
                f"{HIGH_OFF}_{i}_{t}", HIGH_OFF,
                ((var_age(i, t), 1.0), (var_high(i, t), -float(d_thr[i]))),
                "G", 0.0,
            ))
    for (i, j) in pairs:
        for t in range(1, T + 1):
            rows.append(Row(
                f"{HIGH_PAIR}_{i}_{j}_{t}", HIGH_PAIR,
                ((var_high(i, t), 1.0), (var_high(j, t), 1.0), (var_high_conn(i, j, t), -1.0)),
                "L", 1.0,
            ))

    for i in range(n):
        for t in range(1, T + 1):
            rows.append(Row(
                f"{MATURE_ON}_{i}_{t}", MATURE_ON,
                ((var_age(i, t), 1.0), (var_mature(i, t), -big_m)),
                "L", float(m_thr[i]) - 1.0,
            ))
    for i in range(n):
        for t in range(1, T + 1):
            rows.append(Row(
                f"{MATURE_OFF}_{i}_{t}", MATURE_OFF,
                ((var_age(i, t), 1.0), (var_mature(i, t), -float(m_thr[i]))),
                "G", 0.0,
            ))

    if setting.require_neighbor_habitat:
        for i in range(n):
            for t in range(1, T + 1):
                coeffs = tuple((var_mature(j, t), 1.0) for j in landscape.neighbors[i])
                coeffs += ((var_x(i, t), -1.0),)
                rows.append(Row(f"{NEIGHBOR_HABITAT_ROW}_{i}_{t}", NEIGHBOR_HABITAT_ROW,
                                coeffs, "G", 0.0))

    for (i, j) in pairs:
        for t in range(1, T + 1):
            rows.append(Row(
                f"{MATURE_PAIR_LB}_{i}_{j}_{t}", MATURE_PAIR_LB,
                ((var_mature(i, t), 1.0), (var_mature(j, t), 1.0), (var_mature_conn(i, j, t), -1.0)),
                "L", 1.0,
            ))
    for (i, j) in pairs:
        for t in range(1, T + 1):
            rows.append(Row(
                f"{MATURE_PAIR_UB}_{i}_{j}_{t}", MATURE_PAIR_UB,
                ((var_mature(i, t), 1.0), (var_mature(j, t), 1.0), (var_mature_conn(i, j, t), -2.0)),
                "G", 0.0,
            ))

    omitted = []
    for t in range(1, T + 1):
        g = setting.habitat_target[t - 1]
        if g == 0:
            omitted.append(t)
            continue
        coeffs = tuple((var_mature_conn(i, j, t), 1.0) for (i, j) in pairs)
        rows.append(Row(f"{HABITAT_TARGET_ROW}_{t}", HABITAT_TARGET_ROW, coeffs, "G", float(g)))

    for i in range(n):
        for t in range(T):
            rows.append(Row(
                f"{OLD_ON}_{i}_{t}", OLD_ON,
                ((var_age(i, t), 1.0), (var_old(i, t), -big_m)),
                "L", float(max_tfi[i]) - 1.0,
            ))
    for i in range(n):
        for t in range(T):
            rows.append(Row(
                f"{OLD_OFF}_{i}_{t}", OLD_OFF,
                ((var_age(i, t), 1.0), (var_old(i, t), -float(max_tfi[i]))),
                "G", 0.0,
            ))

    for i in range(n):
        deg = len(landscape.neighbors[i])
        for t in range(1, T + 1):
            coeffs = ((var_old(i, t - 1), 1.0),)
            if deg:
                coeffs += tuple((var_mature(j, t), 1.0 / deg) for j in landscape.neighbors[i])
            coeffs += ((var_x(i, t), -1.0),)
            rows.append(Row(f"{FORCED_ROW}_{i}_{t}", FORCED_ROW, coeffs, "L", 1.0))

    for i in range(n):
        for t in range(1, T + 1):
            rows.append(Row(
                f"{MIN_TFI_ROW}_{i}_{t}", MIN_TFI_ROW,
                ((var_age(i, t - 1), 1.0), (var_x(i, t), -float(min_tfi[i]))),
                "G", 0.0,
            ))

    objective = tuple(
        (var_high_conn(i, j, t), 1.0) for (i, j) in pairs for t in range(1, T + 1)
    )
    return MipInstance(
        name=MODEL_NAME,
        n_cells=n,
        horizon=T,
        big_m=big_m,
        variables=variables,
        rows=rows,
        objective=objective,
        omitted_habitat_years=tuple(omitted),
    )


def _fmt(v: float) -> str:
    return format(v, ".17g")


def export_mps(instance: MipInstance, destination) -> None:
    """Write free-format MPS: NAME, ROWS, COLUMNS (with INTORG/INTEND integrality
    markers), RHS (nonzero entries), BOUNDS (binaries bounded to [0, 1]), ENDATA.

    Minimisation is implied; one coefficient per COLUMNS line; variables appear
    in declaration order, binaries first.
    """
    entries: dict[str, list[tuple[str, float]]] = {v: [] for v in instance.variables}
    for vname, coeff in instance.objective:
        entries[vname].append(("COST", coeff))
    for row in instance.rows:
        for vname, coeff in row.coeffs:
            entries[vname].append((row.name, coeff))

    lines = [f"NAME {instance.name}", "ROWS", " N COST"]
    for row in instance.rows:
        lines.append(f" {row.sense} {row.name}")
    lines.append("COLUMNS")
    in_integer = False
    marker = 0
    for vname, kind in instance.variables.items():
        want_integer = kind == "binary"
        if want_integer != in_integer:
            marker += 1
            keyword = "'INTORG'" if want_integer else "'INTEND'"
            lines.append(f"    MARKER{marker} 'MARKER' {keyword}")
            in_integer = want_integer
        for rname, coeff in entries[vname]:
            lines.append(f"    {vname} {rname} {_fmt(coeff)}")
    if in_integer:
        marker += 1
        lines.append(f"    MARKER{marker} 'MARKER' 'INTEND'")
    lines.append("RHS")
    for row in instance.rows:
        if row.rhs != 0.0:
            lines.append(f"    RHS {row.name} {_fmt(row.rhs)}")
    lines.append("BOUNDS")
    for vname, kind in instance.variables.items():
        if kind == "binary":
            lines.append(f" UP BND {vname} 1")
    lines.append("ENDATA")
    text = "\n".join(lines) + "\n"
    if hasattr(destination, "write"):
        destination.write(text)
    else:
        Path(destination).write_text(text)


@dataclass
class MpsModel:
    """Companion reader's view of an MPS file, comparable row-for-row to a MipInstance."""

    name: str
    objective_row: str
    row_sense: dict[str, str]
    coeffs: dict[str, dict[str, float]]  # row name -> {var: coeff}; includes the objective row
    rhs: dict[str, float]
    binaries: set[str]
    upper_bounds: dict[str, float]
    variables: list[str]

    def rows_map(self) -> dict[str, tuple[str, float, dict[str, float]]]:
        return {
            name: (sense, self.rhs.get(name, 0.0), dict(self.coeffs.get(name, {})))
            for name, sense in self.row_sense.items()
        }

    def objective_coeffs(self) -> dict[str, float]:
        return dict(self.coeffs.get(self.objective_row, {}))

    def iter_rows(self):
        for name, sense in self.row_sense.items():
            coeffs = tuple(self.coeffs.get(name, {}).items())
            yield name, coeffs, sense, self.rhs.get(name, 0.0)


def read_mps(path) -> MpsModel:
    """Parse a free-format MPS file as written by export_mps."""
    name = ""
    objective_row = ""
    row_sense: dict[str, str] = {}
    coeffs: dict[str, dict[str, float]] = {}
    rhs: dict[str, float] = {}
    binaries: set[str] = set()
    upper_bounds: dict[str, float] = {}
    variables: list[str] = []
    seen_vars: set[str] = set()

    section = None
    in_integer = False
    for raw in Path(path).read_text().splitlines():
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        tokens = raw.split()
        head = tokens[0].upper()
        if head in ("ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA") and raw[0] not in " \t":
            section = head
            if head == "ENDATA":
                break
            continue
        if head == "NAME" and raw[0] not in " \t":
            name = tokens[1] if len(tokens) > 1 else ""
            continue
        if section == "ROWS":
            sense, rname = tokens[0].upper(), tokens[1]
            if sense == "N":
                if not objective_row:
                    objective_row = rname
            else:
                row_sense[rname] = sense
            continue
        if section == "COLUMNS":
            if len(tokens) >= 3 and tokens[1] == "'MARKER'":
                if tokens[2] == "'INTORG'":
                    in_integer = True
                elif tokens[2] == "'INTEND'":
                    in_integer = False
                continue
            vname = tokens[0]
            if vname not in seen_vars:
                seen_vars.add(vname)
                variables.append(vname)
                if in_integer:
                    binaries.add(vname)
            for k in range(1, len(tokens) - 1, 2):
                rname, value = tokens[k], float(tokens[k + 1])
                coeffs.setdefault(rname, {})[vname] = value
            continue
        if section == "RHS":
            for k in range(1, len(tokens) - 1, 2):
                rhs[tokens[k]] = float(tokens[k + 1])
            continue
        if section == "BOUNDS":
            btype = tokens[0].upper()
            if btype in ("UP", "FX"):
                upper_bounds[tokens[2]] = float(tokens[3])
            elif btype == "BV":
                binaries.add(tokens[2])
                upper_bounds[tokens[2]] = 1.0
            continue
    return MpsModel(name, objective_row, row_sense, coeffs, rhs, binaries,
                    upper_bounds, variables)


def point_violations(model, values: dict[str, float], tol: float = 1e-6) -> list[tuple[str, float]]:
    """Rows of a MipInstance or MpsModel violated by a point, with magnitudes.

    Missing variables count as zero. Binary variables further than ``tol``
    from an integer are reported as ``integrality:<name>`` entries.
    """
    out: list[tuple[str, float]] = []
    for rname, row_coeffs, sense, rhs in model.iter_rows():
        lhs = sum(c * values.get(v, 0.0) for v, c in row_coeffs)
        if sense == "L" and lhs > rhs + tol:
            out.append((rname, lhs - rhs))
        elif sense == "G" and lhs < rhs - tol:
            out.append((rname, rhs - lhs))
        elif sense == "E" and abs(lhs - rhs) > tol:
            out.append((rname, abs(lhs - rhs)))
    for vname in model.binaries:
        v = values.get(vname, 0.0)
        if abs(v - round(v)) > tol:
            out.append((f"integrality:{vname}", abs(v - round(v))))
    return out


@dataclass
class SolutionVector:
    """Solver point mapped back onto instance variables."""

    values: dict[str, float]
    objective_value: float
    status: str  # 'optimal' | 'feasible' | 'infeasible' | 'unknown'
    claimed_objective: float | None = None
    violated_rows: list[tuple[str, float]] = field(default_factory=list)

    @property
    def objective_mismatch(self) -> bool:
        return (self.claimed_objective is not None
                and abs(self.claimed_objective - self.objective_value) > 1e-6)


_OBJ_COMMENT = re.compile(r"objective[^-+0-9]*([-+]?[0-9]+(?:\.[0-9]*)?(?:[eE][-+]?[0-9]+)?)",
                          re.IGNORECASE)


def import_solution(instance: MipInstance, path, tol: float = 1e-6) -> SolutionVector:
    """Read a solution file of whitespace-separated ``name value`` lines.

    Comment lines start with ``#`` or ``*`` (a stated objective there, or an
    ``=obj= <value>`` line, is cross-checked against the recomputed one).
    Unknown variable names are rejected; missing variables default to 0. The
    objective is recomputed from the HC variables, and the point is checked
    against every instance row; the status is 'feasible' or 'infeasible'
    accordingly.
    """
    values: dict[str, float] = {}
    claimed: float | None = None
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#") or line.startswith("*") or line.startswith("//"):
            match = _OBJ_COMMENT.search(line)
            if match:
                claimed = float(match.group(1))
            continue
        tokens = line.split()
        if tokens[0] == "=obj=" and len(tokens) == 2:
            claimed = float(tokens[1])
            continue
        if len(tokens) != 2:
            raise ValueError(f"malformed solution line {lineno}: {raw!r}")
        vname = tokens[0]
        if vname not in instance.variables:
            raise ValueError(f"unknown variable {vname!r} on solution line {lineno}")
        try:
            values[vname] = float(tokens[1])
        except ValueError as exc:
            raise ValueError(f"malformed solution line {lineno}: {raw!r}") from exc

    objective_value = sum(c * values.get(v, 0.0) for v, c in instance.objective)
    violated = point_violations(instance, values, tol=tol)
    status = "feasible" if not violated else "infeasible"
    return SolutionVector(values, objective_value, status, claimed, violated)


def write_solution(values: dict[str, float], path, objective: float | None = None) -> None:
    """Write a solution file import_solution can read (sorted name/value lines)."""
    lines = []
    if objective is not None:
        lines.append(f"# objective {_fmt(float(objective))}")
    for name in sorted(values):
        lines.append(f"{name} {_fmt(float(values[name]))}")
    Path(path).write_text("\n".join(lines) + "\n")


def assignment_from_schedule(landscape: Landscape, schedule: Schedule) -> dict[str, float]:
    """Canonical integral point for a schedule: every derived variable at its
    exact indicator value (pair variables as logical ANDs)."""
    state = derive(landscape, schedule)
    n, T = schedule.x.shape
    values: dict[str, float] = {}
    for i in range(n):
        for t in range(1, T + 1):
            values[var_x(i, t)] = float(schedule.x[i, t - 1])
        for t in range(T + 1):
            values[var_age(i, t)] = float(state.age[i, t])
        for t in range(1, T + 1):
            values[var_high(i, t)] = float(state.high[i, t - 1])
            values[var_mature(i, t)] = float(state.mature[i, t - 1])
        for t in range(T):
            values[var_old(i, t)] = float(state.old[i, t])
    for i, j in zip(landscape.pair_i.tolist(), landscape.pair_j.tolist()):
        for t in range(1, T + 1):
            values[var_high_conn(i, j, t)] = float(state.high[i, t - 1] and state.high[j, t - 1])
            values[var_mature_conn(i, j, t)] = float(state.mature[i, t - 1] and state.mature[j, t - 1])
    return values


def schedule_from_values(n_cells: int, horizon: int, values: dict[str, float]) -> Schedule:
    """Extract the treatment matrix from a solution's x variables (rounded)."""
    x = np.zeros((n_cells, horizon), dtype=np.int8)
    for i in range(n_cells):
        for t in range(1, horizon + 1):
            x[i, t - 1] = int(round(values.get(var_x(i, t), 0.0)))
    return Schedule(x)


def ramp_targets(landscape: Landscape, base_target: int, horizon: int, solve_fn,
                 relaxed_value: int = 0) -> tuple[int, ...]:
    """Relax the habitat floor for the smallest prefix of years that restores feasibility.

    Tries target series with the first k years at ``relaxed_value`` and the
    rest at ``base_target`` for k = 0..horizon, returning the first series
    ``solve_fn`` reports feasible. ``solve_fn`` receives the candidate series
    and returns a truthy value for feasible. k = horizon relaxes the whole
    horizon; that series is returned even if solve_fn rejects it too, leaving
    the caller to surface the residual infeasibility. Solver exceptions
    propagate.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    series = None
    for k in range(horizon + 1):
        series = tuple([relaxed_value] * k + [base_target] * (horizon - k))
        if solve_fn(series):
            return series
    return series
