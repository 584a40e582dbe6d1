"""Restricted maps: per-noise-realization maps kept inside one component.

For a fixed seed u the perturbed map x -> T(x) + sigma(x, u) is affine on
each piece (branch intersected with noise region).  Where it leaves the
closure of I_i it does so on finitely many maximal excursion intervals
[x_a, x_b]; on each of them the restricted map is replaced by the straight
line from (x_a, y_start) to (x_b, y_end) given by a ``FoldRule``.  Outside
the excursions the restricted and full maps coincide, which is the coupling
property the restricted process needs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .maps import Branch, Component, PiecewiseLinearMap
from .noise import NoiseModel, TransitionKernel, segments

TOL = 1e-13


@dataclass(frozen=True)
class FoldRule:
    component: int
    direction: str  # "up": exit through the right end, "down": through the left end
    y_start: float
    y_end: float


@dataclass(frozen=True)
class Excursion:
    lo: float
    hi: float
    direction: str
    rule: FoldRule

    @property
    def branch(self) -> Branch:
        return Branch.through((self.lo, self.rule.y_start), (self.hi, self.rule.y_end))


class RestrictedFamily:
    """The family u -> restricted map on component i."""

    def __init__(self, kernel: TransitionKernel, component: int, rules):
        self.kernel = kernel
        self.component = component
        self.comp = kernel.map.component(component)
        self.rules = {r.direction: r for r in rules if r.component == component}
        self._segs = [s for s in segments(kernel) if s["component"] == component]

    @property
    def noise(self) -> NoiseModel:
        return self.kernel.noise

    def sigma_of_segment(self, seg, u: float) -> float:
        uu = 1.0 - u if seg["flip"] else u
        return float(seg["law"].ppf(uu))

    def pieces(self, u: float) -> list[tuple[float, float, float, float]]:
        """(lo, hi, slope, intercept) of the full perturbed map on the component."""
        return [(s["lo"], s["hi"], s["slope"], s["intercept"] + self.sigma_of_segment(s, u))
                for s in self._segs]

    def excursions(self, u: float) -> list[Excursion]:
        c_lo, c_hi = self.comp.lo, self.comp.hi
        raw: list[tuple[float, float, str]] = []
        for lo, hi, s, c in self.pieces(u):
            for direction, level in (("up", c_hi), ("down", c_lo)):
                # solve s x + c = level; the excursion side depends on slope sign
                xc = (level - c) / s
                above_right = (s > 0) == (direction == "up")
                a, b = (max(lo, xc), hi) if above_right else (lo, min(hi, xc))
                if b - a > TOL:
                    raw.append((a, b, direction))
        raw.sort()
        merged: list[list] = []
        for a, b, d in raw:
            if merged and merged[-1][2] == d and a <= merged[-1][1] + 1e-12:
                merged[-1][1] = max(merged[-1][1], b)
            else:
                merged.append([a, b, d])
        out = []
        for a, b, d in merged:
            if d not in self.rules:
                raise ConfigError(f"no fold rule for component {self.component} exiting {d}")
            out.append(Excursion(a, b, d, self.rules[d]))
        return out

    def restricted_map(self, u: float) -> PiecewiseLinearMap:
        """The per-realization restricted map as a one-component piecewise-affine map."""
        exc = self.excursions(u)
        cuts = [(e.lo, e.hi) for e in exc]
        brs: list[Branch] = []
        for lo, hi, s, c in self.pieces(u):
            pts = [lo]
            for a, b in cuts:
                if b > lo and a < hi:
                    pts.extend([max(a, lo), min(b, hi)])
            pts.append(hi)
            for k in range(0, len(pts), 2):
                a, b = pts[k], pts[k + 1]
                if b - a > TOL:
                    brs.append(Branch(a, b, s, c))
        brs.extend(e.branch for e in exc)
        brs.sort(key=lambda br: br.lo)
        comp = Component(self.comp.lo, self.comp.hi, tuple(brs))
        return PiecewiseLinearMap(self.kernel.map.ambient, (comp,), f"restricted[{self.component}]")

    def step(self, x, u):
        """Vectorized restricted step; returns (values, fold_used)."""
        x = np.asarray(x, dtype=float)
        u = np.broadcast_to(np.asarray(u, dtype=float), x.shape)
        y = np.empty(x.shape)
        folded = np.zeros(x.shape, dtype=bool)
        flat_x, flat_u = x.ravel(), u.ravel()
        out, fl = y.ravel(), folded.ravel()
        for n in range(flat_x.size):
            out[n], fl[n] = self._step1(float(flat_x[n]), float(flat_u[n]))
        return y, folded

    def _step1(self, x: float, u: float) -> tuple[float, bool]:
        val = None
        for lo, hi, s, c in self.pieces(u):
            if lo <= x <= hi:
                val = s * x + c
                break
        if val is None:
            raise ValueError(f"{x} outside component {self.component}")
        if self.comp.lo <= val <= self.comp.hi:
            return val, False
        for e in self.excursions(u):
            if e.lo - 1e-12 <= x <= e.hi + 1e-12:
                return float(e.branch(x)), True
        return float(np.clip(val, self.comp.lo, self.comp.hi)), True


def two_well_rules(b: float) -> list[FoldRule]:
    return [FoldRule(1, "up", b, 0.5), FoldRule(2, "down", 0.5, 1.0 - b)]


def three_well_rules() -> list[FoldRule]:
    return [
        FoldRule(1, "up", 0.05, 1 / 3),
        FoldRule(2, "down", 1 / 3, 0.635),
        FoldRule(2, "up", 2 / 3, 0.375),
        FoldRule(3, "down", 2 / 3, 0.95),
    ]


def two_well_fold_interval(b: float, sigma: float, peak: float = 0.125) -> tuple[float, float]:
    """Closed form of the fold around a peak of the two-well map for sigma > 0."""
    x1 = peak - 0.125 * 2 * sigma / (1 - 2 * b)
    return x1, x1 + sigma / (2 - 4 * b)
