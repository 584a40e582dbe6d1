"""Holes and metastable wells.

For adjacent components I_i, I_j sharing the boundary point c, the
neighbourhood B_ij is the closed delta_ij-interval inside closure(I_i)
ending at c, the hole Delta_ij is T^{-1}(B_ij) within I_i, and the well
E_i is I_i with every hole Delta_ij removed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GridAlignment, NonAdjacent, OverlapError
from .grid import Grid, GridFunction
from .intervals import IntervalSet
from .maps import PiecewiseLinearMap, preimage_of_interval

TOL = 1e-12


def shared_boundary(m: PiecewiseLinearMap, i: int, j: int) -> float | None:
    ci, cj = m.component(i), m.component(j)
    for c in (ci.lo, ci.hi):
        if cj.lo - TOL <= c <= cj.hi + TOL:
            return c
    return None


def default_delta(m: PiecewiseLinearMap, epsilon: float, q: float) -> np.ndarray:
    """delta_ij = eps^q for every pair of components sharing a boundary point."""
    k = m.kappa
    d = np.zeros((k, k))
    for i in m.labels:
        for j in m.labels:
            if i != j and shared_boundary(m, i, j) is not None:
                d[i - 1, j - 1] = epsilon ** q
    return d


@dataclass(frozen=True)
class WellStructure:
    epsilon: float
    kappa: int
    holes: dict  # (i, j) -> IntervalSet, 1-based labels
    wells: tuple[IntervalSet, ...]
    boundary_neighborhoods: dict  # (i, j) -> (lo, hi)
    components: tuple[IntervalSet, ...]

    def hole(self, i: int) -> IntervalSet:
        out = IntervalSet.empty()
        for (a, _), s in self.holes.items():
            if a == i:
                out = out.union(s)
        return out

    @property
    def hole_union(self) -> IntervalSet:
        out = IntervalSet.empty()
        for s in self.holes.values():
            out = out.union(s)
        return out

    @property
    def well_union(self) -> IntervalSet:
        out = IntervalSet.empty()
        for w in self.wells:
            out = out.union(w)
        return out

    def well(self, i: int) -> IntervalSet:
        return self.wells[i - 1]

    def complement(self, i: int) -> IntervalSet:
        """Union of the other wells."""
        out = IntervalSet.empty()
        for k, w in enumerate(self.wells, start=1):
            if k != i:
                out = out.union(w)
        return out

    def separation(self) -> float:
        """Smallest distance between a hole Delta_{j',j} and a component I_i, i not in {j', j}."""
        best = float("inf")
        for (a, b), s in self.holes.items():
            if not s:
                continue
            for i in range(1, self.kappa + 1):
                if i not in (a, b):
                    best = min(best, s.distance_to_set(self.components[i - 1]))
        return best

    def to_json(self) -> str:
        return json.dumps({
            "epsilon": self.epsilon,
            "holes": {f"{i},{j}": s.to_json() for (i, j), s in sorted(self.holes.items())},
            "wells": [w.to_json() for w in self.wells],
            "neighbourhoods": {f"{i},{j}": [f"{a:.17g}", f"{b:.17g}"]
                               for (i, j), (a, b) in sorted(self.boundary_neighborhoods.items())},
        }, indent=1)


def build_wells(m: PiecewiseLinearMap, delta, epsilon: float = float("nan")) -> WellStructure:
    delta = np.asarray(delta, dtype=float)
    k = m.kappa
    if delta.shape != (k, k):
        raise ValueError(f"delta must be {k}x{k}")
    if np.any(delta < 0):
        raise ValueError("delta must be nonnegative")
    holes, nbhd = {}, {}
    for i in m.labels:
        comp = m.component(i)
        for j in m.labels:
            d = delta[i - 1, j - 1]
            if i == j or d == 0:
                continue
            c = shared_boundary(m, i, j)
            if c is None:
                raise NonAdjacent(f"components {i} and {j} share no boundary point")
            B = (c - d, c) if abs(c - comp.hi) <= TOL else (c, c + d)
            nbhd[(i, j)] = B
            holes[(i, j)] = IntervalSet.from_pairs(preimage_of_interval(m, B, i))
    for i in m.labels:
        own = [(j, s) for (a, j), s in holes.items() if a == i]
        for x in range(len(own)):
            for y in range(x + 1, len(own)):
                if own[x][1].intersect(own[y][1]).measure > 0:
                    raise OverlapError(f"holes ({i},{own[x][0]}) and ({i},{own[y][0]}) overlap")
    comps = tuple(IntervalSet.of(c.interval) for c in m.components)
    wells = []
    for i in m.labels:
        h = IntervalSet.empty()
        for (a, _), s in holes.items():
            if a == i:
                h = h.union(s)
        wells.append(comps[i - 1].difference(h))
    return WellStructure(float(epsilon), k, holes, tuple(wells), nbhd, comps)


def measure_under(ws: WellStructure, density: GridFunction) -> tuple[np.ndarray, float]:
    """Exact masses of each well and of the hole union under a step density."""
    masses = np.array([density.integral(w) for w in ws.wells])
    return masses, density.integral(ws.hole_union)


def cell_labels(ws: WellStructure, grid: Grid) -> np.ndarray:
    """Per-cell well index (1..kappa) by cell centre, 0 for cells centred in a hole.

    Component boundaries inside the grid must be grid nodes, otherwise a cell
    would straddle two components and the labelling would be meaningless.
    """
    for comp in ws.components:
        for c in comp.pieces[0]:
            if grid.lo + TOL < c < grid.hi - TOL:
                try:
                    grid.node_index(c)
                except GridAlignment as exc:
                    raise GridAlignment(f"component boundary {c!r} is not a grid node "
                                        f"(n_cells={grid.n_cells})") from exc
    x = grid.centers
    lab = np.zeros(grid.n_cells, dtype=np.int64)
    for i, w in enumerate(ws.wells, start=1):
        a = w.as_array()
        if len(a):
            inside = np.any((x[:, None] >= a[:, 0]) & (x[:, None] <= a[:, 1]), axis=1)
            lab[inside] = i
    return lab
