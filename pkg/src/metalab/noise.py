"""Additive noise laws, region assignments and the induced transition kernel.

Every law is given by offsets relative to T(x).  A single uniform seed u
drives all regions at once: ``identity`` regions use the law's quantile at
u and ``flip`` regions the quantile at 1 - u.  With the mirror-image laws
U[-eps, eps^q] and U[-eps^q, eps] a flip region therefore returns exactly
the negated value of an identity region.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from scipy import stats

from .maps import PiecewiseLinearMap, eval_map


@dataclass(frozen=True)
class UniformAsym:
    """Uniform law on [lo, hi]; lo == hi is the point mass (no noise)."""
    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi >= self.lo:
            raise ValueError("UniformAsym needs lo <= hi")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    def pdf(self, s):
        s = np.asarray(s, dtype=float)
        if self.width == 0:
            return np.where(s == self.lo, np.inf, 0.0)
        return np.where((s >= self.lo) & (s <= self.hi), 1.0 / self.width, 0.0)

    def cdf(self, s):
        s = np.asarray(s, dtype=float)
        if self.width == 0:
            return np.where(s >= self.lo, 1.0, 0.0)
        return np.clip((s - self.lo) / self.width, 0.0, 1.0)

    def ppf(self, u):
        return self.lo + np.asarray(u, dtype=float) * self.width

    def tail(self, t: float) -> float:
        """P(|sigma| > t)."""
        if self.width == 0:
            return float(abs(self.lo) > t)
        below = max(0.0, min(-t, self.hi) - self.lo)
        above = max(0.0, self.hi - max(t, self.lo))
        return (below + above) / self.width


@dataclass(frozen=True)
class TruncGaussian:
    mean: float
    sd: float
    lo: float
    hi: float

    @property
    def _dist(self):
        a, b = (self.lo - self.mean) / self.sd, (self.hi - self.mean) / self.sd
        return stats.truncnorm(a, b, loc=self.mean, scale=self.sd)

    @property
    def support(self) -> tuple[float, float]:
        return (self.lo, self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def pdf(self, s):
        return self._dist.pdf(s)

    def cdf(self, s):
        return self._dist.cdf(s)

    def ppf(self, u):
        return self._dist.ppf(u)

    def tail(self, t: float) -> float:
        if t <= 0:
            return 1.0
        d = self._dist
        return float(d.cdf(-t) + d.sf(t))


Law = Union[UniformAsym, TruncGaussian]


@dataclass(frozen=True)
class NoiseRegion:
    lo: float
    hi: float
    law: Law
    coupling: str = "identity"  # or "flip"

    def __post_init__(self):
        if self.coupling not in ("identity", "flip"):
            raise ValueError(f"unknown coupling {self.coupling!r}")


@dataclass(frozen=True)
class NoiseModel:
    epsilon: float
    q: float
    regions: tuple[NoiseRegion, ...]
    gamma1: float = 2.0
    gamma2: float = 1.0

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be nonnegative")
        for a, b in zip(self.regions, self.regions[1:]):
            if abs(a.hi - b.lo) > 1e-12:
                raise ValueError("noise regions must abut")

    @property
    def rights(self) -> np.ndarray:
        return np.array([r.hi for r in self.regions])

    def region_index(self, x):
        idx = np.searchsorted(self.rights, np.asarray(x, dtype=float), side="left")
        return np.minimum(idx, len(self.regions) - 1)

    def law_at(self, x: float) -> Law:
        return self.regions[int(self.region_index(x))].law

    @property
    def is_uniform(self) -> bool:
        return all(isinstance(r.law, UniformAsym) for r in self.regions)

    def kernel_arrays(self) -> dict[str, np.ndarray]:
        """Flat arrays consumed by the compiled kernels (uniform laws only)."""
        if not self.is_uniform:
            raise NotImplementedError("compiled kernels support uniform laws only")
        return {
            "right": self.rights,
            "lo": np.array([r.law.lo for r in self.regions]),
            "hi": np.array([r.law.hi for r in self.regions]),
            "flip": np.array([r.coupling == "flip" for r in self.regions], dtype=np.bool_),
        }


def q_eps(epsilon: float, q: float) -> float:
    """Closed-form escape bound eps^q / (eps + eps^q) for the asymmetric uniform laws."""
    e = epsilon ** q
    return e / (epsilon + e)


def two_well_noise(epsilon: float, q: float, split: float = 0.5, **kw) -> NoiseModel:
    inner, outer = UniformAsym(-epsilon, epsilon ** q), UniformAsym(-epsilon ** q, epsilon)
    return NoiseModel(epsilon, q, (NoiseRegion(0.0, split, inner, "identity"),
                                   NoiseRegion(split, 1.0, outer, "flip")), **kw)


def three_well_noise(epsilon: float, q: float, xbar: float = 17 / 36, **kw) -> NoiseModel:
    down, up = UniformAsym(-epsilon, epsilon ** q), UniformAsym(-epsilon ** q, epsilon)
    return NoiseModel(epsilon, q, (
        NoiseRegion(0.0, 1 / 3, down, "identity"),
        NoiseRegion(1 / 3, xbar, up, "flip"),
        NoiseRegion(xbar, 2 / 3, down, "identity"),
        NoiseRegion(2 / 3, 1.0, up, "flip"),
    ), **kw)


def sample_noise(model: NoiseModel, x, seed):
    """Coupled draw of sigma^x from a shared uniform seed in [0, 1)."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(seed, dtype=float)
    idx = np.broadcast_to(model.region_index(x), np.broadcast(x, u).shape)
    u = np.broadcast_to(u, idx.shape)
    out = np.empty(idx.shape)
    for k, reg in enumerate(model.regions):
        sel = idx == k
        if np.any(sel):
            uu = 1.0 - u[sel] if reg.coupling == "flip" else u[sel]
            out[sel] = reg.law.ppf(uu)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class TransitionKernel:
    map: PiecewiseLinearMap
    noise: NoiseModel


def transition_density(kernel: TransitionKernel, x: float, y):
    t = eval_map(kernel.map, x)
    return kernel.noise.law_at(x).pdf(np.asarray(y, dtype=float) - t)


def support_violations(kernel: TransitionKernel) -> list[str]:
    """Pieces whose noise support pushes T(x) + sigma outside the ambient interval."""
    lo, hi = kernel.map.ambient
    out = []
    for seg in segments(kernel):
        tmin, tmax = seg["tmin"], seg["tmax"]
        a, b = seg["law"].support
        if tmin + a < lo - 1e-12 or tmax + b > hi + 1e-12:
            out.append(f"[{seg['lo']:.6g}, {seg['hi']:.6g}] reaches "
                       f"[{tmin + a:.6g}, {tmax + b:.6g}]")
    return out


def segments(kernel: TransitionKernel) -> list[dict]:
    """Intersections of branch domains with noise regions, in order."""
    out = []
    for k, comp in enumerate(kernel.map.components, start=1):
        for br in comp.branches:
            for reg in kernel.noise.regions:
                lo, hi = max(br.lo, reg.lo), min(br.hi, reg.hi)
                if hi > lo:
                    t0, t1 = br(lo), br(hi)
                    out.append({"lo": lo, "hi": hi, "slope": br.slope, "intercept": br.intercept,
                                "component": k, "law": reg.law, "flip": reg.coupling == "flip",
                                "tmin": min(t0, t1), "tmax": max(t0, t1)})
    return out


def escape_prob_sup(kernel: TransitionKernel, component: int) -> float:
    """sup over x in I_i of the mass rho(x, .) puts on the other components."""
    m = kernel.map
    comp = m.component(component)
    lo, hi = m.ambient
    best = 0.0
    for seg in segments(kernel):
        if seg["component"] != component:
            continue
        law = seg["law"]
        ts = [seg["tmin"], seg["tmax"]]
        if not isinstance(law, UniformAsym):
            ts = np.linspace(seg["tmin"], seg["tmax"], 65)
        for t in ts:
            below = float(law.cdf(comp.lo - t) - law.cdf(lo - t)) if comp.lo > lo else 0.0
            above = float(law.cdf(hi - t) - law.cdf(comp.hi - t)) if comp.hi < hi else 0.0
            best = max(best, below + above)
    return best


def q_eps_of(kernel: TransitionKernel) -> float:
    return max(escape_prob_sup(kernel, i) for i in kernel.map.labels)


def sub_gaussian_check(model: NoiseModel, gamma1: float, gamma2: float, t_grid: Sequence[float]) -> bool:
    eps = model.epsilon
    for t in t_grid:
        bound = gamma1 * np.exp(-t * t / (gamma2 * eps * eps)) if eps > 0 else (gamma1 if t == 0 else 0.0)
        for reg in model.regions:
            if reg.law.tail(float(t)) > bound + 1e-15:
                return False
    return True
