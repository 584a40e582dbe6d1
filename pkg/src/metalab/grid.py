"""Uniform grids and piecewise-constant grid functions."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import GridAlignment, GridMismatch
from .intervals import IntervalSet


@dataclass(frozen=True)
class Grid:
    lo: float
    hi: float
    n_cells: int

    def __post_init__(self):
        if self.n_cells < 1 or not self.hi > self.lo:
            raise ValueError("grid needs n_cells >= 1 and lo < hi")

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n_cells

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n_cells + 1)

    @property
    def centers(self) -> np.ndarray:
        e = self.edges
        return 0.5 * (e[:-1] + e[1:])

    def cell_of(self, x):
        k = np.floor((np.asarray(x, dtype=float) - self.lo) / self.h).astype(np.int64)
        return np.clip(k, 0, self.n_cells - 1)

    def node_index(self, x: float, tol: float = 1e-9) -> int:
        """Index of the grid node at x; GridAlignment if x is not a node."""
        r = (x - self.lo) / self.h
        k = int(round(r))
        if abs(r - k) > tol or not 0 <= k <= self.n_cells:
            raise GridAlignment(f"point {x!r} is not a node of {self}")
        return k

    def check_same(self, other: "Grid") -> None:
        if self != other:
            raise GridMismatch(f"{self} != {other}")


@dataclass(frozen=True)
class GridFunction:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise ValueError("values length must equal n_cells")
        object.__setattr__(self, "values", v)

    @property
    def l1(self) -> float:
        return float(self.grid.h * np.abs(self.values).sum())

    @property
    def total(self) -> float:
        return float(self.grid.h * self.values.sum())

    def is_density(self, tol: float = 1e-10) -> bool:
        return bool(np.all(self.values >= 0) and abs(self.total - 1.0) <= tol)

    def cumulative(self, x):
        """Exact integral of the step function from grid.lo to x."""
        g = self.grid
        cum = np.concatenate(([0.0], np.cumsum(self.values) * g.h))
        return np.interp(np.asarray(x, dtype=float), g.edges, cum)

    def integral(self, s: IntervalSet) -> float:
        if not s:
            return 0.0
        a = s.as_array()
        return float(np.sum(self.cumulative(a[:, 1]) - self.cumulative(a[:, 0])))

    def to_csv_rows(self):
        e = self.grid.edges
        return [(e[k], e[k + 1], self.values[k]) for k in range(self.grid.n_cells)]


def uniform_density(grid: Grid) -> GridFunction:
    return GridFunction(grid, np.full(grid.n_cells, 1.0 / (grid.hi - grid.lo)))


def embed(f: GridFunction, target: Grid) -> GridFunction:
    """Place a function living on an aligned sub-grid into a larger grid (zero elsewhere)."""
    if abs(f.grid.h - target.h) > 1e-12 * max(1.0, target.h):
        raise GridMismatch("cell widths differ")
    k0 = target.node_index(f.grid.lo)
    out = np.zeros(target.n_cells)
    out[k0:k0 + f.grid.n_cells] = f.values
    return GridFunction(target, out)


def restrict(f: GridFunction, target: Grid) -> GridFunction:
    """Cells of f covering an aligned sub-grid."""
    if abs(f.grid.h - target.h) > 1e-12 * max(1.0, target.h):
        raise GridMismatch("cell widths differ")
    k0 = f.grid.node_index(target.lo)
    return GridFunction(target, f.values[k0:k0 + target.n_cells].copy())
