"""Cell landscapes: adjacency graph, per-cell treatment parameters, random generation.

A landscape is a geometry-free graph of cells. Each cell carries an area, a
fuel age, and four age thresholds ordered as

    0 < min_tfi <= mature_threshold <= high_threshold <= max_tfi

where ``min_tfi``/``max_tfi`` bound the tolerable re-treatment window,
``mature_threshold`` marks suitable faunal habitat and ``high_threshold``
marks hazardous fuel accumulation.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class CellParams:
    """Per-cell area, age thresholds and initial fuel age."""

    area: float = 1.0
    mature_threshold: int = 8
    high_threshold: int = 12
    min_tfi: int = 2
    max_tfi: int = 16
    initial_age: int = 0

    def __post_init__(self) -> None:
        if self.area <= 0:
            raise ValueError(f"cell area must be positive, got {self.area}")
        if not (0 < self.min_tfi <= self.mature_threshold <= self.high_threshold <= self.max_tfi):
            raise ValueError(
                "thresholds must satisfy 0 < min_tfi <= mature_threshold"
                f" <= high_threshold <= max_tfi, got min_tfi={self.min_tfi},"
                f" mature={self.mature_threshold}, high={self.high_threshold},"
                f" max_tfi={self.max_tfi}"
            )
        if self.initial_age < 0:
            raise ValueError(f"initial_age must be >= 0, got {self.initial_age}")


class Landscape:
    """Immutable cell graph with per-cell parameters.

    ``neighbors[i]`` is the sorted tuple of cells adjacent to cell ``i``.
    The relation is validated to be symmetric and irreflexive. Per-cell
    parameters are mirrored into numpy arrays for vectorised evaluation.
    """

    def __init__(
        self,
        cells: list[CellParams] | tuple[CellParams, ...],
        neighbors: list[list[int]] | tuple[tuple[int, ...], ...],
        rows: int | None = None,
        cols: int | None = None,
    ):
        self.cells = tuple(cells)
        n = len(self.cells)
        if n == 0:
            raise ValueError("landscape needs at least one cell")
        if len(neighbors) != n:
            raise ValueError("neighbors list length must match cell count")

        nbrs = tuple(tuple(sorted(set(int(j) for j in ns))) for ns in neighbors)
        for i, ns in enumerate(nbrs):
            for j in ns:
                if j < 0 or j >= n:
                    raise ValueError(f"neighbor index {j} of cell {i} out of range")
                if j == i:
                    raise ValueError(f"cell {i} lists itself as a neighbor")
                if i not in nbrs[j]:
                    raise ValueError(f"neighbor relation not symmetric: {i} -> {j}")
        self.neighbors = nbrs
        self.rows = rows
        self.cols = cols

        self.n_cells = n
        self.area = np.array([c.area for c in self.cells], dtype=float)
        self.mature_threshold = np.array([c.mature_threshold for c in self.cells], dtype=np.int64)
        self.high_threshold = np.array([c.high_threshold for c in self.cells], dtype=np.int64)
        self.min_tfi = np.array([c.min_tfi for c in self.cells], dtype=np.int64)
        self.max_tfi = np.array([c.max_tfi for c in self.cells], dtype=np.int64)
        self.initial_age = np.array([c.initial_age for c in self.cells], dtype=np.int64)
        self.total_area = float(self.area.sum())
        self.degree = np.array([len(ns) for ns in nbrs], dtype=np.int64)

        pairs = [(i, j) for i in range(n) for j in nbrs[i] if i < j]
        self.pair_i = np.array([p[0] for p in pairs], dtype=np.int64)
        self.pair_j = np.array([p[1] for p in pairs], dtype=np.int64)

        adj = np.zeros((n, n), dtype=np.int16)
        for i, ns in enumerate(nbrs):
            adj[i, list(ns)] = 1
        adj.setflags(write=False)
        self.adjacency = adj

        for arr in (self.area, self.mature_threshold, self.high_threshold,
                    self.min_tfi, self.max_tfi, self.initial_age, self.degree,
                    self.pair_i, self.pair_j):
            arr.setflags(write=False)

    @property
    def n_pairs(self) -> int:
        return len(self.pair_i)

    def with_initial_ages(self, ages) -> "Landscape":
        """New landscape with the same graph and parameters but different ages."""
        ages = np.asarray(ages, dtype=np.int64)
        if ages.shape != (self.n_cells,):
            raise ValueError(f"expected {self.n_cells} ages, got shape {ages.shape}")
        cells = [replace(c, initial_age=int(a)) for c, a in zip(self.cells, ages)]
        return Landscape(cells, self.neighbors, rows=self.rows, cols=self.cols)


def build_grid(rows: int, cols: int, params: CellParams = CellParams()) -> Landscape:
    """Build a rows x cols grid with 4-neighborhood (shared-boundary) adjacency.

    Cells are indexed row-major; all cells share the template parameters.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"grid needs rows >= 1 and cols >= 1, got {rows}x{cols}")
    n = rows * cols
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for r in range(rows):
        for c in range(cols):
            i = r * cols + c
            if c > 0:
                neighbors[i].append(i - 1)
            if c < cols - 1:
                neighbors[i].append(i + 1)
            if r > 0:
                neighbors[i].append(i - cols)
            if r < rows - 1:
                neighbors[i].append(i + cols)
    return Landscape([params] * n, neighbors, rows=rows, cols=cols)


def connection_pairs(landscape: Landscape) -> list[tuple[int, int]]:
    """All undirected adjacent pairs (i, j) with i < j, in lexicographic order."""
    return list(zip(landscape.pair_i.tolist(), landscape.pair_j.tolist()))


@dataclass(frozen=True)
class GenerationConfig:
    """Random-landscape recipe: grid shape plus a categorical initial-age distribution.

    ``ages[k]`` is drawn with probability ``probs[k]``; probabilities must sum
    to 1 within 1e-9. Draws are i.i.d. per cell, row-major, from numpy's
    default PCG64 generator seeded with ``seed`` (see FORMATS.md for the exact
    draw algorithm, which is reproducible from the seed alone).
    """

    rows: int
    cols: int
    ages: tuple[int, ...]
    probs: tuple[float, ...]
    seed: int = 0

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError("rows and cols must be >= 1")
        if len(self.ages) != len(self.probs) or not self.ages:
            raise ValueError("ages and probs must be equal-length and non-empty")
        if len(set(self.ages)) != len(self.ages):
            raise ValueError("ages must be distinct")
        if any(a < 0 for a in self.ages):
            raise ValueError("ages must be >= 0")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be >= 0")
        if abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {sum(self.probs)}")

    @classmethod
    def uniform(cls, rows: int, cols: int, max_age: int = 16, seed: int = 0) -> "GenerationConfig":
        """Uniform distribution over integer ages 0..max_age."""
        k = max_age + 1
        return cls(rows, cols, tuple(range(k)), tuple(1.0 / k for _ in range(k)), seed)


def generate_random(config: GenerationConfig, params: CellParams = CellParams()) -> Landscape:
    """Grid landscape with per-cell initial ages drawn from the config distribution.

    Deterministic: identical (config, params) give identical landscapes. The
    draw is inverse-CDF sampling on one uniform variate per cell, cells in
    row-major order, from ``numpy.random.default_rng(config.seed)``.
    """
    support = np.array(config.ages, dtype=np.int64)
    if int(support.max()) > params.max_tfi:
        raise ValueError(
            f"age distribution support exceeds max_tfi={params.max_tfi}: max age {support.max()}"
        )
    probs = np.array(config.probs, dtype=float)
    rng = np.random.default_rng(config.seed)
    u = rng.random(config.rows * config.cols)
    idx = np.searchsorted(np.cumsum(probs), u, side="right")
    idx = np.minimum(idx, len(support) - 1)  # guard float cumsum falling short of 1.0
    base = build_grid(config.rows, config.cols, params)
    return base.with_initial_ages(support[idx])


# Landscape file schema (JSON; field names are the public contract, see FORMATS.md):
#   rows, cols                 grid shape
#   initial_ages               row-major list of per-cell ages
#   area                       per-cell area (uniform scalar)
#   mature_threshold, high_threshold, min_tfi, max_tfi   uniform thresholds

def write_landscape(landscape: Landscape, path) -> None:
    """Serialize a grid landscape to the JSON schema in FORMATS.md."""
    if landscape.rows is None or landscape.cols is None:
        raise ValueError("only grid landscapes are serializable")
    first = landscape.cells[0]
    for c in landscape.cells:
        if (c.area, c.mature_threshold, c.high_threshold, c.min_tfi, c.max_tfi) != (
            first.area, first.mature_threshold, first.high_threshold, first.min_tfi, first.max_tfi
        ):
            raise ValueError("serialization requires uniform cell parameters")
    doc = {
        "rows": landscape.rows,
        "cols": landscape.cols,
        "initial_ages": landscape.initial_age.tolist(),
        "area": first.area,
        "mature_threshold": first.mature_threshold,
        "high_threshold": first.high_threshold,
        "min_tfi": first.min_tfi,
        "max_tfi": first.max_tfi,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def read_landscape(path) -> Landscape:
    doc = json.loads(Path(path).read_text())
    try:
        rows, cols = int(doc["rows"]), int(doc["cols"])
        ages = doc["initial_ages"]
        params = CellParams(
            area=float(doc["area"]),
            mature_threshold=int(doc["mature_threshold"]),
            high_threshold=int(doc["high_threshold"]),
            min_tfi=int(doc["min_tfi"]),
            max_tfi=int(doc["max_tfi"]),
        )
    except KeyError as exc:
        raise ValueError(f"landscape file missing field {exc}") from exc
    if len(ages) != rows * cols:
        raise ValueError(f"expected {rows * cols} ages, file has {len(ages)}")
    return build_grid(rows, cols, params).with_initial_ages(ages)
