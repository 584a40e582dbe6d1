"""Finite unions of real intervals.

Endpoints are treated as closed; every quantity computed from these sets
(Lebesgue measure, integrals of densities) ignores the null boundary, so
open/closed conventions elsewhere never change a number.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Iterator

import numpy as np

MERGE_GAP = 1e-12  # pieces closer than this are joined (rounding gaps)


def _normalize(pairs: Iterable[tuple[float, float]], merge: bool) -> tuple[tuple[float, float], ...]:
    items = sorted((float(a), float(b)) for a, b in pairs if b > a)
    if not merge:
        return tuple(items)
    out: list[list[float]] = []
    for a, b in items:
        if out and a <= out[-1][1] + MERGE_GAP:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return tuple((a, b) for a, b in out)


@dataclass(frozen=True)
class IntervalSet:
    """Sorted, pairwise disjoint intervals (degenerate pieces dropped)."""

    pieces: tuple[tuple[float, float], ...] = ()

    @classmethod
    def of(cls, *pairs: tuple[float, float]) -> "IntervalSet":
        return cls(_normalize(pairs, merge=True))

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "IntervalSet":
        return cls(_normalize(pairs, merge=True))

    @classmethod
    def empty(cls) -> "IntervalSet":
        return cls(())

    def __iter__(self) -> Iterator[tuple[float, float]]:
        return iter(self.pieces)

    def __len__(self) -> int:
        return len(self.pieces)

    def __bool__(self) -> bool:
        return bool(self.pieces)

    @property
    def measure(self) -> float:
        return float(sum(b - a for a, b in self.pieces))

    def contains(self, x: float) -> bool:
        return any(a <= x <= b for a, b in self.pieces)

    def union(self, other: "IntervalSet") -> "IntervalSet":
        return IntervalSet.from_pairs(self.pieces + other.pieces)

    def intersect(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        i = j = 0
        p, q = self.pieces, other.pieces
        while i < len(p) and j < len(q):
            lo = max(p[i][0], q[j][0])
            hi = min(p[i][1], q[j][1])
            if hi > lo:
                out.append((lo, hi))
            if p[i][1] < q[j][1]:
                i += 1
            else:
                j += 1
        return IntervalSet(tuple(out))

    def difference(self, other: "IntervalSet") -> "IntervalSet":
        out = []
        for a, b in self.pieces:
            cur = a
            for c, d in other.pieces:
                if d <= cur or c >= b:
                    continue
                if c > cur:
                    out.append((cur, c))
                cur = max(cur, d)
                if cur >= b:
                    break
            if cur < b:
                out.append((cur, b))
        return IntervalSet(_normalize(out, merge=True))

    def distance_to(self, x: float) -> float:
        if not self.pieces:
            return float("inf")
        return float(min(0.0 if a <= x <= b else min(abs(x - a), abs(x - b)) for a, b in self.pieces))

    def distance_to_set(self, other: "IntervalSet") -> float:
        if not self.pieces or not other.pieces:
            return float("inf")
        best = float("inf")
        for a, b in self.pieces:
            for c, d in other.pieces:
                gap = max(c - b, a - d, 0.0)
                best = min(best, gap)
        return best

    def shift(self, t: float) -> "IntervalSet":
        return IntervalSet(tuple((a + t, b + t) for a, b in self.pieces))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.pieces, dtype=float).reshape(-1, 2)

    def to_json(self) -> list[list[str]]:
        # 17 significant digits round-trips a double
        return [[f"{a:.17g}", f"{b:.17g}"] for a, b in self.pieces]
