"""Piecewise-affine interval maps with several invariant components.

A map is stored as an ordered list of components; each component is an
interval carrying an ordered list of affine branches.  Component indices
exposed to users are 1-based (the well labels S = {1, ..., kappa}).

Evaluation convention: at a point shared by two branches the left branch
is used, so ``eval_map(two_well(b), 0.5)`` returns ``b``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import OutOfDomain, UnknownComponent
from .intervals import IntervalSet

TOL = 1e-12


@dataclass(frozen=True)
class Branch:
    lo: float
    hi: float
    slope: float
    intercept: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"empty branch domain [{self.lo}, {self.hi}]")
        if self.slope == 0:
            raise ValueError("branch slope must be nonzero")

    @classmethod
    def through(cls, p0: tuple[float, float], p1: tuple[float, float]) -> "Branch":
        (x0, y0), (x1, y1) = p0, p1
        s = (y1 - y0) / (x1 - x0)
        return cls(float(x0), float(x1), float(s), float(y0 - s * x0))

    def __call__(self, x):
        return self.slope * x + self.intercept

    @property
    def image(self) -> tuple[float, float]:
        a, b = self(self.lo), self(self.hi)
        return (min(a, b), max(a, b))

    def inverse(self, y):
        return (y - self.intercept) / self.slope


@dataclass(frozen=True)
class Component:
    lo: float
    hi: float
    branches: tuple[Branch, ...]

    @property
    def interval(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def image(self) -> tuple[float, float]:
        ims = [b.image for b in self.branches]
        return (min(a for a, _ in ims), max(b for _, b in ims))


@dataclass(frozen=True)
class PiecewiseLinearMap:
    ambient: tuple[float, float]
    components: tuple[Component, ...]
    name: str = "custom"
    _rights: np.ndarray = field(init=False, repr=False, compare=False)
    _slopes: np.ndarray = field(init=False, repr=False, compare=False)
    _intercepts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        brs = self.branches
        object.__setattr__(self, "_rights", np.array([b.hi for b in brs]))
        object.__setattr__(self, "_slopes", np.array([b.slope for b in brs]))
        object.__setattr__(self, "_intercepts", np.array([b.intercept for b in brs]))

    @property
    def kappa(self) -> int:
        return len(self.components)

    @property
    def labels(self) -> tuple[int, ...]:
        return tuple(range(1, self.kappa + 1))

    @property
    def branches(self) -> tuple[Branch, ...]:
        return tuple(b for c in self.components for b in c.branches)

    def component(self, i: int) -> Component:
        if not isinstance(i, (int, np.integer)) or not 1 <= i <= self.kappa:
            raise UnknownComponent(f"component {i!r} not in 1..{self.kappa}")
        return self.components[i - 1]

    def component_of(self, x: float) -> int:
        """1-based index of the component whose closure holds x (left wins at shared ends)."""
        for k, c in enumerate(self.components, start=1):
            if x <= c.hi:
                return k
        return self.kappa

    def branch_arrays(self) -> dict[str, np.ndarray]:
        brs = self.branches
        comp = [k for k, c in enumerate(self.components) for _ in c.branches]
        return {
            "lo": np.array([b.lo for b in brs]),
            "hi": self._rights.copy(),
            "slope": self._slopes.copy(),
            "intercept": self._intercepts.copy(),
            "component": np.array(comp, dtype=np.int64),
        }

    def boundaries(self) -> np.ndarray:
        return np.array([self.components[0].lo] + [c.hi for c in self.components])

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "ambient": list(self.ambient),
            "components": [
                {"interval": [c.lo, c.hi],
                 "branches": [[b.lo, b.hi, b.slope, b.intercept] for b in c.branches]}
                for c in self.components
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PiecewiseLinearMap":
        comps = tuple(
            Component(float(c["interval"][0]), float(c["interval"][1]),
                      tuple(Branch(*map(float, br)) for br in c["branches"]))
            for c in d["components"]
        )
        return cls(tuple(map(float, d["ambient"])), comps, d.get("name", "custom"))


def from_vertices(name: str, components: Sequence[Sequence[tuple[float, float]]],
                  ambient=(0.0, 1.0)) -> PiecewiseLinearMap:
    """Build a map from per-component polylines (continuous within a component)."""
    comps = []
    for verts in components:
        brs = tuple(Branch.through(verts[k], verts[k + 1]) for k in range(len(verts) - 1))
        comps.append(Component(brs[0].lo, brs[-1].hi, brs))
    return PiecewiseLinearMap(tuple(ambient), tuple(comps), name)


def from_branch_lists(name: str, components: Sequence[Sequence[tuple[tuple[float, float], tuple[float, float]]]],
                      ambient=(0.0, 1.0)) -> PiecewiseLinearMap:
    """Build a map from per-component lists of (start, end) branch segments."""
    comps = []
    for segs in components:
        brs = tuple(Branch.through(p0, p1) for p0, p1 in segs)
        comps.append(Component(brs[0].lo, brs[-1].hi, brs))
    return PiecewiseLinearMap(tuple(ambient), tuple(comps), name)


# -- scenario maps ---------------------------------------------------------

def two_well(b: float = 0.05) -> PiecewiseLinearMap:
    """Four-branch tent pair on (0, 1/2) and its mirror on (1/2, 1); slopes +-(4 - 8b)."""
    left = [(0.0, b), (0.125, 0.5), (0.25, b), (0.375, 0.5), (0.5, b)]
    right = [(0.5 + x, 1.0 - y) for x, y in reversed([(0.5 - x, y) for x, y in left])]
    return from_vertices(f"two_well(b={b!r})", [left, right])


def two_well_A(b: float = 0.05) -> PiecewiseLinearMap:
    """Three-branch variant: every branch maps onto the full component image."""
    left = [(0.0, b), (1 / 6, 0.5), (1 / 3, b), (0.5, 0.5)]
    right = [(0.5, 0.5), (2 / 3, 1 - b), (5 / 6, 0.5), (1.0, 1 - b)]
    return from_vertices(f"two_well_A(b={b!r})", [left, right])


THREE_WELL_MIDDLE = [(1 / 3, 0.635), (5 / 12, 1 / 3), (0.55, 2 / 3), (2 / 3, 0.375)]


def three_well() -> PiecewiseLinearMap:
    left = [(0.0, 0.05), (1 / 12, 1 / 3), (2 / 12, 0.05), (3 / 12, 1 / 3), (4 / 12, 0.05)]
    right = [(8 / 12, 0.95), (9 / 12, 2 / 3), (10 / 12, 0.95), (11 / 12, 2 / 3), (1.0, 0.95)]
    return from_vertices("three_well", [left, THREE_WELL_MIDDLE, right])


# -- queries ---------------------------------------------------------------

def eval_map(m: PiecewiseLinearMap, x):
    """T(x); accepts scalars or arrays."""
    arr = np.asarray(x, dtype=float)
    lo, hi = m.ambient
    if np.any(arr < lo - TOL) or np.any(arr > hi + TOL) or np.any(~np.isfinite(arr)):
        raise OutOfDomain(f"point(s) outside ambient interval [{lo}, {hi}]")
    idx = np.minimum(np.searchsorted(m._rights, arr, side="left"), len(m._rights) - 1)
    out = m._slopes[idx] * arr + m._intercepts[idx]
    return float(out) if out.ndim == 0 else out


def _dedupe(values, tol=1e-12) -> tuple[float, ...]:
    out: list[float] = []
    for v in sorted(values):
        if not out or v - out[-1] > tol:
            out.append(v)
    return tuple(out)


def preimage(m: PiecewiseLinearMap, y: float, component: int) -> tuple[float, ...]:
    """All x in the closure of the component's branch domains with T(x) = y."""
    comp = m.component(component)
    xs = []
    for br in comp.branches:
        x = br.inverse(y)
        if br.lo - TOL <= x <= br.hi + TOL:
            xs.append(min(max(x, br.lo), br.hi))
    return _dedupe(xs)


def preimage_of_interval(m: PiecewiseLinearMap, J: tuple[float, float], component: int) -> tuple[tuple[float, float], ...]:
    """Per-branch pieces of T^{-1}(J) inside the component, sorted, not merged.

    Pieces coming from two branches that meet at a turning point touch at a
    single point; merge with ``IntervalSet.from_pairs`` when only the union
    matters.
    """
    comp = m.component(component)
    a, b = float(J[0]), float(J[1])
    out = []
    for br in comp.branches:
        u, v = sorted((br.inverse(a), br.inverse(b)))
        lo, hi = max(u, br.lo), min(v, br.hi)
        if hi > lo:
            out.append((lo, hi))
    return tuple(sorted(out))


def fixed_points(m: PiecewiseLinearMap, component: int) -> tuple[float, ...]:
    comp = m.component(component)
    xs = []
    for br in comp.branches:
        if br.slope == 1.0:
            continue
        x = br.intercept / (1.0 - br.slope)
        if br.lo - TOL <= x <= br.hi + TOL and comp.lo < x < comp.hi:
            xs.append(x)
    return _dedupe(xs)


def infinitesimal_holes(m: PiecewiseLinearMap, component: int) -> tuple[float, ...]:
    """Points of the open component mapped onto the component boundary."""
    comp = m.component(component)
    pts = []
    for y in (comp.lo, comp.hi):
        pts.extend(x for x in preimage(m, y, component) if comp.lo < x < comp.hi or
                   (abs(x - comp.hi) <= TOL and comp.hi < m.ambient[1]) or
                   (abs(x - comp.lo) <= TOL and comp.lo > m.ambient[0]))
    return _dedupe(pts)


def boundary_contacts(m: PiecewiseLinearMap, component: int) -> tuple[float, ...]:
    """Boundary points of the component that lie in the closure of its image."""
    comp = m.component(component)
    lo, hi = comp.image
    return tuple(c for c in (comp.lo, comp.hi) if lo - TOL <= c <= hi + TOL)


def adjacency(m: PiecewiseLinearMap) -> np.ndarray:
    """adj[i, k] = True when closure(T(I_i)) meets the boundary of I_k, k != i."""
    k = m.kappa
    adj = np.zeros((k, k), dtype=bool)
    for i, ci in enumerate(m.components):
        lo, hi = ci.image
        for j, cj in enumerate(m.components):
            if i != j and any(lo - TOL <= c <= hi + TOL for c in (cj.lo, cj.hi)):
                adj[i, j] = True
    return adj


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    checks: tuple[tuple[str, bool, str], ...]
    min_abs_slope: float
    min_branch_image_length: float

    def failures(self) -> list[tuple[str, bool, str]]:
        return [c for c in self.checks if not c[1]]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "min_abs_slope": self.min_abs_slope,
            "min_branch_image_length": self.min_branch_image_length,
            "checks": [{"id": a, "passed": p, "detail": d} for a, p, d in self.checks],
        }


def _strongly_connected(adj: np.ndarray) -> bool:
    n = adj.shape[0]
    if n == 1:
        return True

    def reach(a):
        seen, stack = {0}, [0]
        while stack:
            u = stack.pop()
            for v in np.flatnonzero(a[u]):
                if v not in seen:
                    seen.add(int(v))
                    stack.append(int(v))
        return len(seen) == n

    return reach(adj) and reach(adj.T)


def validate_assumptions(m: PiecewiseLinearMap, slope_threshold: float = 2.0) -> ValidationReport:
    checks: list[tuple[str, bool, str]] = []
    comps = m.components
    lo, hi = m.ambient

    cover = abs(comps[0].lo - lo) <= TOL and abs(comps[-1].hi - hi) <= TOL and all(
        abs(a.hi - b.lo) <= TOL for a, b in zip(comps, comps[1:]))
    checks.append(("A1.2", cover, "components tile the ambient interval" if cover
                   else "components leave gaps or overlap"))

    tiling = all(
        abs(c.branches[0].lo - c.lo) <= TOL and abs(c.branches[-1].hi - c.hi) <= TOL
        and all(abs(a.hi - b.lo) <= TOL for a, b in zip(c.branches, c.branches[1:]))
        for c in comps)
    checks.append(("A1.1", tiling, "branch domains abut inside every component" if tiling
                   else "branch domains do not tile their component"))

    bad = [k for k, c in enumerate(comps, 1)
           if c.image[0] < c.lo - TOL or c.image[1] > c.hi + TOL]
    checks.append(("A1.3-invariance", not bad,
                   "T(I_i) within closure(I_i) for all i" if not bad else f"components {bad} leak"))

    holes = {k: infinitesimal_holes(m, k) for k in m.labels}
    ok = all(1 <= len(v) < 10**6 for v in holes.values())
    detail = "; ".join(f"I_{k}: {', '.join(f'{x:.6g}' for x in v) or 'none'}" for k, v in holes.items())
    checks.append(("A1.3-holes", ok, f"infinitesimal holes {detail}"))

    adj = adjacency(m)
    conn = _strongly_connected(adj)
    checks.append(("A1.4", conn, "boundary-contact graph strongly connected" if conn
                   else f"boundary-contact graph not strongly connected: {adj.astype(int).tolist()}"))

    checks.append(("A6", True, "affine branches are smooth up to their endpoints"))

    min_slope = float(min(abs(b.slope) for b in m.branches))
    slope_ok = min_slope > slope_threshold
    checks.append(("slope", slope_ok, f"min |slope| = {min_slope:.6g} "
                   f"({'>' if slope_ok else '<='} {slope_threshold})"))

    ell = float(min(b.image[1] - b.image[0] for b in m.branches))
    checks.append(("ell", ell > 0, f"min branch image length = {ell:.6g}"))

    return ValidationReport(all(c[1] for c in checks), tuple(checks), min_slope, ell)


def interval_set(component: Component) -> IntervalSet:
    return IntervalSet.of(component.interval)
