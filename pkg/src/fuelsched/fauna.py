"""Faunal occupancy replay over a solved treatment schedule.

Animals occupy mature cells. Initially every mature cell is occupied. Each
year the occupancy map updates in three fixed steps:

  1. relocation: occupants of a cell treated this year move into its mature
     neighbors (all of them become occupied); with no mature neighbor the
     occupants die.
  2. persistence: an occupied, untreated cell that is still mature stays
     occupied.
  3. recolonisation: one adjacency step; every unoccupied mature cell with an
     occupied neighbor (after steps 1-2) becomes occupied.

The step order is part of the contract: animals displaced in step 1 can seed
recolonisation in step 3 of the same year.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .evaluate import DerivedState, Schedule, derive
from .landscape import Landscape


@dataclass(frozen=True)
class OccupancyState:
    """occupied[i, t] for years t = 0..T; occupancy implies maturity for t >= 1."""

    occupied: np.ndarray

    @property
    def horizon(self) -> int:
        return self.occupied.shape[1] - 1


def simulate_occupancy(landscape: Landscape, schedule: Schedule,
                       state: DerivedState | None = None,
                       recolonise: bool = True) -> OccupancyState:
    """Replay occupancy over the schedule's horizon.

    ``recolonise=False`` disables step 3 (diagnostic; occupancy can then only
    shrink relative to the default).
    """
    if state is None:
        state = derive(landscape, schedule)
    x = schedule.x
    if x.shape[0] != landscape.n_cells:
        raise ValueError("schedule does not match landscape")
    n, T = x.shape
    adj = landscape.adjacency

    occupied = np.zeros((n, T + 1), dtype=bool)
    occupied[:, 0] = state.age[:, 0] >= landscape.mature_threshold

    for t in range(1, T + 1):
        prev = occupied[:, t - 1]
        treated = x[:, t - 1] == 1
        mature_t = state.mature[:, t - 1]

        displaced_from = prev & treated
        relocated = mature_t & ((adj @ displaced_from.astype(np.int16)) >= 1)
        persisted = prev & ~treated & mature_t
        cur = relocated | persisted

        if recolonise:
            cur = cur | (mature_t & ((adj @ cur.astype(np.int16)) >= 1))
        occupied[:, t] = cur

    occupied.setflags(write=False)
    return OccupancyState(occupied)


def occupancy_fraction(occupancy: OccupancyState, year: int) -> float:
    """Occupied cells in the given year divided by total cell count."""
    n, years = occupancy.occupied.shape
    if not (0 <= year < years):
        raise ValueError(f"year must be in 0..{years - 1}, got {year}")
    return float(np.count_nonzero(occupancy.occupied[:, year])) / n


# Occupancy text format mirrors the schedule format (one line per year, 0..T).

def format_occupancy(occupancy: OccupancyState) -> str:
    occ = occupancy.occupied.astype(int)
    return "\n".join(" ".join(str(v) for v in occ[:, t]) for t in range(occ.shape[1])) + "\n"


def write_occupancy(occupancy: OccupancyState, path) -> None:
    Path(path).write_text(format_occupancy(occupancy))
