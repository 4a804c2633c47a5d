"""Multi-year fuel treatment scheduling on cell landscapes.

Schedules treatments that fragment high-fuel-load areas while keeping faunal
habitat available and connected, under tolerable-fire-interval windows and a
yearly treatment budget.
"""

from .evaluate import (
    ConstraintReport,
    DerivedState,
    Schedule,
    SettingSpec,
    Violation,
    check,
    count_adjacent_pairs,
    derive,
    initial_high_pairs,
    initial_mature_pairs,
    objective,
    read_schedule,
    table_setting,
    write_schedule,
)
from .fauna import OccupancyState, occupancy_fraction, simulate_occupancy
from .landscape import (
    CellParams,
    GenerationConfig,
    Landscape,
    build_grid,
    connection_pairs,
    generate_random,
    read_landscape,
    write_landscape,
)
from .solvers import AnnealConfig, AnnealResult, ExactResult, solve_anneal, solve_exact

__all__ = [
    "CellParams",
    "GenerationConfig",
    "Landscape",
    "build_grid",
    "connection_pairs",
    "generate_random",
    "read_landscape",
    "write_landscape",
    "Schedule",
    "SettingSpec",
    "DerivedState",
    "ConstraintReport",
    "Violation",
    "derive",
    "objective",
    "check",
    "count_adjacent_pairs",
    "table_setting",
    "read_schedule",
    "write_schedule",
    "initial_high_pairs",
    "initial_mature_pairs",
    "OccupancyState",
    "simulate_occupancy",
    "occupancy_fraction",
    "AnnealConfig",
    "AnnealResult",
    "ExactResult",
    "solve_anneal",
    "solve_exact",
]

__version__ = "0.1.0"
