"""Monte Carlo engine for the perturbed chain and its jump process.

The embedded chain X_{n+1} = T(X_n) + sigma(X_n) runs in compiled code with
one Philox stream per sample.  The sped-up jump process holds each state for
an Exp(1)/beta time, so the continuous time of n jumps is Gamma(n, 1)/beta;
hitting decisions are made on chain states, which is exact for a piecewise
constant trajectory.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import CoverageFailure
from .grid import GridFunction
from .intervals import IntervalSet
from .maps import eval_map
from .noise import sample_noise
from .rng import parallel_map, stream
from .scenarios import PerturbedSystem
from .wells import WellStructure, measure_under, shared_boundary

DEFAULT_CAP = 10_000_000


@dataclass
class JumpPath:
    states: np.ndarray
    jump_times: np.ndarray
    horizon: float


@dataclass
class OrderPath:
    segments: list[tuple[int, float]]
    excised_time: float


@dataclass
class RateEstimate:
    theta_hat: np.ndarray
    std_err: np.ndarray
    n_samples: int
    beta_used: float
    counts: np.ndarray = None
    visits: np.ndarray = None
    censored: int = 0


@dataclass
class HittingSamples:
    start_x: np.ndarray
    n_jumps: np.ndarray
    time: np.ndarray
    hit_target: np.ndarray
    censored: np.ndarray
    final_label: np.ndarray = field(default=None)

    def to_csv(self, target_index: int = 1) -> str:
        lines = ["start_x,target_index,n_jumps,time,censored"]
        for x, n, t, c in zip(self.start_x, self.n_jumps, self.time, self.censored):
            lines.append(f"{float(x)!r},{target_index},{int(n)},{float(t)!r},{int(c)}")
        return "\n".join(lines) + "\n"


def step_chain(system: PerturbedSystem, x, seed):
    return eval_map(system.map, x) + sample_noise(system.noise, x, seed)


# -- sets as sorted label tables -------------------------------------------

def _label_table(sets: list[IntervalSet]):
    """Sorted (lo, hi, id) arrays; ids are 1-based positions in `sets`."""
    rows = sorted((a, b, k) for k, s in enumerate(sets, start=1) for a, b in s)
    if not rows:
        return np.array([np.inf]), np.array([-np.inf]), np.array([0], dtype=np.int64)
    lo, hi, ids = zip(*rows)
    return np.array(lo), np.array(hi), np.array(ids, dtype=np.int64)


class ConditionalSampler:
    """Inverse-CDF draws from a grid density restricted to a set."""

    def __init__(self, density: GridFunction | None, region: IntervalSet):
        pieces, weights = [], []
        if density is None:
            for a, b in region:
                pieces.append((a, b))
                weights.append(b - a)
        else:
            g = density.grid
            e = g.edges
            for a, b in region:
                k0, k1 = int(g.cell_of(a)), int(g.cell_of(b))
                for k in range(k0, k1 + 1):
                    lo, hi = max(a, e[k]), min(b, e[k + 1])
                    if hi > lo and density.values[k] > 0:
                        pieces.append((lo, hi))
                        weights.append(density.values[k] * (hi - lo))
        if not pieces:
            raise ValueError("conditioning set carries no mass")
        self.pieces = np.array(pieces)
        w = np.array(weights)
        self.cum = np.cumsum(w) / w.sum()

    def draw(self, rng: np.random.Generator) -> float:
        j = min(int(np.searchsorted(self.cum, rng.random(), side="right")), len(self.cum) - 1)
        a, b = self.pieces[j]
        return float(a + (b - a) * rng.random())


def _start_drawer(start, density: GridFunction | None = None):
    if isinstance(start, (int, float, np.floating)):
        x = float(start)
        return lambda rng: x
    if isinstance(start, IntervalSet):
        s = ConditionalSampler(density, start)
        return s.draw
    if isinstance(start, ConditionalSampler):
        return start.draw
    raise TypeError(f"unsupported start {start!r}")


# -- jump paths --------------------------------------------------------------

def run_jump_path(system: PerturbedSystem, x0: float, horizon: float, seed: int,
                  sample_id: int = 0, chunk: int = 1_000_000) -> JumpPath:
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    ka = system.kernel_arrays()
    rng = stream(seed, sample_id, "path")
    states, times = [np.array([x0])], [np.array([0.0])]
    x, t = float(x0), 0.0
    while True:
        s, tt = _kernels.run_horizon(rng, x, system.beta, horizon - t, chunk, **ka)
        if len(s) > 1:
            states.append(s[1:])
            times.append(tt[1:] + t)
            x, t = float(s[-1]), float(tt[-1] + t)
        if len(s) - 1 < chunk:
            break
    return JumpPath(np.concatenate(states), np.concatenate(times), float(horizon))


def trace_and_order(path: JumpPath, wells: WellStructure) -> OrderPath:
    """Order process: well index over time with hole time excised."""
    lo, hi, ids = _label_table(list(wells.wells))
    labels = _kernels.label_points(np.ascontiguousarray(path.states), lo, hi, ids)
    ends = np.append(path.jump_times[1:], path.horizon)
    durations = ends - path.jump_times
    segments: list[list] = []
    excised = 0.0
    for lab, d in zip(labels, durations):
        if d <= 0:
            continue
        if lab == 0:
            excised += d
        elif segments and segments[-1][0] == lab:
            segments[-1][1] += d
        else:
            segments.append([int(lab), d])
    return OrderPath([(a, float(b)) for a, b in segments], float(excised))


def order_path_csv(op: OrderPath) -> str:
    lines = ["well,duration"] + [f"{w},{d!r}" for w, d in op.segments]
    return "\n".join(lines) + "\n"


# -- hitting times -----------------------------------------------------------

def hitting_stats(system: PerturbedSystem, start, target: IntervalSet, avoid: IntervalSet | None = None,
                  require_jump: bool = False, n_samples: int = 1000, seed: int = 0,
                  density: GridFunction | None = None, cap: int = DEFAULT_CAP,
                  workers: int = 1, purpose: str = "hitting") -> HittingSamples:
    """Run each sample until it enters target or avoid; record which and when."""
    avoid = avoid or IntervalSet.empty()
    if target.intersect(avoid).measure > 0:
        raise ValueError("target and avoid must be disjoint")
    lo, hi, ids = _label_table([target, avoid])
    mask = np.array([False, True, True])
    ka = system.kernel_arrays()
    draw = _start_drawer(start, density)

    def one(i):
        rng = stream(seed, i, purpose)
        x0 = draw(rng)
        n, x, lab, _ = _kernels.run_to_target(rng, x0, mask, require_jump, cap, **ka,
                                               well_lo=lo, well_hi=hi, well_id=ids)
        t = rng.gamma(n, 1.0) / system.beta if n > 0 else 0.0
        return x0, n, t, lab

    res = parallel_map(one, range(n_samples), workers)
    x0, n, t, lab = (np.array(v) for v in zip(*res))
    cens = n < 0
    return HittingSamples(x0, np.where(cens, cap, n), np.where(cens, np.inf, t), lab == 1, cens, lab)


@dataclass
class EscapeSamples:
    times: np.ndarray
    n_jumps: np.ndarray
    exit_well: np.ndarray
    censored: int


def sample_escape_times(system: PerturbedSystem, wells: WellStructure, i: int, n_samples: int, seed: int,
                        start="stationary", density: GridFunction | None = None,
                        cap: int = DEFAULT_CAP, workers: int = 1) -> EscapeSamples:
    """Continuous times H(union of the other wells) from starts in E_i."""
    if start == "stationary":
        if density is None:
            raise ValueError("stationary start needs a density")
        start = wells.well(i)
    elif start == "uniform":
        start, density = wells.well(i), None
    lo, hi, ids = _label_table(list(wells.wells))
    mask = np.ones(wells.kappa + 1, dtype=bool)
    mask[0] = False
    mask[i] = False
    ka = system.kernel_arrays()
    draw = _start_drawer(start, density)

    def one(k):
        rng = stream(seed, k, "escape")
        x0 = draw(rng)
        n, x, lab, _ = _kernels.run_to_target(rng, x0, mask, False, cap, **ka,
                                               well_lo=lo, well_hi=hi, well_id=ids)
        t = rng.gamma(n, 1.0) / system.beta if n > 0 else 0.0
        return n, t, lab

    res = parallel_map(one, range(n_samples), workers)
    n, t, lab = (np.array(v) for v in zip(*res))
    cens = n < 0
    return EscapeSamples(np.where(cens, np.inf, t), n, np.where(cens, 0, lab), int(cens.sum()))


def estimate_rates(system: PerturbedSystem, wells: WellStructure, stationary: GridFunction,
                   n_samples: int, seed: int, mode: str = "visits", cap: int = DEFAULT_CAP,
                   workers: int = 1) -> RateEstimate:
    """Monte Carlo theta_hat(i, j) = beta * P[first well entered after a jump is E_j | start in E_i].

    ``excursion`` mode draws every trial from the stationary density
    conditioned on E_i and follows it to the first well entered after one
    jump.  ``visits`` mode (default) follows each sample until it reaches
    another well and counts every departure from E_i along the way as a
    trial, which turns the rare event into n_samples successes.
    """
    k = wells.kappa
    lo, hi, ids = _label_table(list(wells.wells))
    ka = system.kernel_arrays()
    counts = np.zeros((k, k), dtype=np.int64)
    visits = np.zeros(k, dtype=np.int64)
    censored = 0
    for i in range(1, k + 1):
        if wells.well(i).measure == 0:
            continue
        sampler = ConditionalSampler(stationary, wells.well(i))
        if mode == "visits":
            mask = np.ones(k + 1, dtype=bool)
            mask[0] = mask[i] = False
            require = False
        elif mode == "excursion":
            mask = np.ones(k + 1, dtype=bool)
            mask[0] = False
            require = True
        else:
            raise ValueError(f"unknown mode {mode!r}")

        def one(s, i=i, mask=mask, require=require, sampler=sampler):
            rng = stream(seed, s + (i << 40), "rates")
            x0 = sampler.draw(rng)
            n, x, lab, vis = _kernels.run_to_target(rng, x0, mask, require, cap, **ka,
                                                     well_lo=lo, well_hi=hi, well_id=ids)
            return n, lab, vis[i]

        res = parallel_map(one, range(n_samples), workers)
        for n, lab, v in res:
            if n < 0:
                censored += 1
                visits[i - 1] += v
                continue
            if mode == "visits":
                visits[i - 1] += v
                counts[i - 1, lab - 1] += 1
            else:
                visits[i - 1] += 1
                if lab != i:
                    counts[i - 1, lab - 1] += 1
    with np.errstate(invalid="ignore", divide="ignore"):
        p = counts / np.maximum(visits, 1)[:, None]
        se = np.sqrt(p * (1 - p) / np.maximum(visits, 1)[:, None])
    theta = system.beta * p
    np.fill_diagonal(theta, 0.0)
    err = system.beta * se
    np.fill_diagonal(err, 0.0)
    return RateEstimate(theta, err, n_samples, system.beta, counts, visits, censored)


def gamma_exceedance(n: int, n_draws: int, seed: int, c: float = 0.5) -> tuple[float, float]:
    """Empirical P[|beta H - n| > c n] given n jumps, and the Chebyshev bound 1 / (c^2 n).

    beta H is the sum of the n realized Exp(1) holding times.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = stream(seed, n, "gamma")
    sums = np.zeros(n_draws)
    for _ in range(n):
        sums += rng.exponential(1.0, n_draws)
    return float(np.mean(np.abs(sums - n) > c * n)), 1.0 / (c * c * n)


# -- quadrature of one- and two-jump path weights -----------------------------

def _pieces_of(system: PerturbedSystem, region: IntervalSet, density: GridFunction | None):
    """Affine pieces (x0, x1, slope, icpt, nlo, nhi, weight) of region x cells x branches x noise regions."""
    from .noise import segments

    segs = segments(system.kernel)
    out = []
    g = density.grid if density is not None else None
    for a, b in region:
        for s in segs:
            lo, hi = max(a, s["lo"]), min(b, s["hi"])
            if hi <= lo:
                continue
            if g is None:
                out.append((lo, hi, s["slope"], s["intercept"], s["law"].lo, s["law"].hi, 1.0))
                continue
            e = g.edges
            for k in range(int(g.cell_of(lo)), int(g.cell_of(hi)) + 1):
                u, v = max(lo, e[k]), min(hi, e[k + 1])
                if v > u and density.values[k] > 0:
                    out.append((u, v, s["slope"], s["intercept"], s["law"].lo, s["law"].hi,
                                density.values[k]))
    return np.array(out).reshape(-1, 7)


def _prob_into(pieces: np.ndarray, target: IntervalSet) -> float:
    """sum over pieces of weight * int P(T(x) + sigma in target) dx (exact for uniform laws)."""
    total = 0.0
    for x0, x1, s, c, nlo, nhi, w in pieces:
        t0, t1 = sorted((s * x0 + c, s * x1 + c))
        acc = 0.0
        for a, b in target:
            acc += _kernels._cum(b, t0, t1, nlo, nhi, 1.0) - _kernels._cum(a, t0, t1, nlo, nhi, 1.0)
        total += w * acc / abs(s)
    return total


def path_weight_quadrature(system: PerturbedSystem, wells: WellStructure, stationary: GridFunction,
                           pair: tuple[int, int], nodes_per_piece: int = 512) -> tuple[float, float]:
    """P[X0 in E_i, X1 in E_j] and P[X0 in E_i, X1 in Delta_ij, X2 in E_j] under the grid density."""
    from .errors import NonAdjacent
    from .wells import shared_boundary

    i, j = pair
    if i == j or shared_boundary(system.map, i, j) is None:
        raise NonAdjacent(f"components {i} and {j} are not adjacent")
    if not system.noise.is_uniform:
        raise NotImplementedError("path quadrature is exact only for uniform noise")
    Ei, Ej = wells.well(i), wells.well(j)
    hole = wells.holes.get((i, j), IntervalSet.empty())
    src = _pieces_of(system, Ei, stationary)
    one = _prob_into(src, Ej)
    if not hole:
        return float(one), 0.0
    two = 0.0
    for a, b in hole:
        dx = (b - a) / nodes_per_piece
        x1 = a + (np.arange(nodes_per_piece) + 0.5) * dx
        # density of X1 at x1 from X0 ~ p restricted to E_i
        x0a, x0b, s, c, nlo, nhi, w = (src[:, m][:, None] for m in range(7))
        t0 = np.minimum(s * x0a + c, s * x0b + c)
        t1 = np.maximum(s * x0a + c, s * x0b + c)
        ov = np.clip(np.minimum(t1, x1[None, :] - nlo) - np.maximum(t0, x1[None, :] - nhi), 0, None)
        dens1 = (w * ov / (np.abs(s) * (nhi - nlo))).sum(axis=0)
        # one-step probability from x1 into E_j
        g = np.array([_point_prob(system, x, Ej) for x in x1])
        two += float((dens1 * g).sum() * dx)
    return float(one), float(two)


def _point_prob(system: PerturbedSystem, x: float, target: IntervalSet) -> float:
    t = eval_map(system.map, x)
    law = system.noise.law_at(x)
    return float(sum(law.cdf(b - t) - law.cdf(a - t) for a, b in target))


def quadrature_rates(system: PerturbedSystem, wells: WellStructure, stationary: GridFunction) -> np.ndarray:
    k = wells.kappa
    masses, _ = measure_under(wells, stationary)
    theta = np.zeros((k, k))
    for i in range(1, k + 1):
        for j in range(1, k + 1):
            if i != j and shared_boundary(system.map, i, j) is not None:
                one, two = path_weight_quadrature(system, wells, stationary, (i, j))
                theta[i - 1, j - 1] = system.beta * (one + two) / masses[i - 1]
    return theta


# -- support growth ------------------------------------------------------------

def support_growth_steps(system: PerturbedSystem, component: int, seed_cells: int = 10,
                         seed: int = 0, n_grid: int = 4096) -> tuple[int, list[int]]:
    """n = ceil(Leb(T(I_i)) / (eps1 ^ eps2)) and, per random seed cell, the step where coverage occurred."""
    comp = system.map.component(component)
    img_lo, img_hi = comp.image
    widths = []
    for reg in system.noise.regions:
        if reg.hi > comp.lo and reg.lo < comp.hi:
            widths += [-reg.law.lo, reg.law.hi]
    e12 = min(widths)
    n = int(np.ceil((img_hi - img_lo) / e12 - 1e-12))
    rng = np.random.default_rng(seed)
    target = IntervalSet.of((img_lo, img_hi))
    reached = []
    h = comp.length / n_grid
    for _ in range(seed_cells):
        a = comp.lo + h * rng.integers(n_grid)
        J = IntervalSet.of((a, a + h))
        for step in range(1, n + 1):
            J = _grow(system, comp, J).intersect(IntervalSet.of(comp.interval))
            if target.difference(J).measure <= 1e-12:
                reached.append(step)
                break
        else:
            raise CoverageFailure(f"support did not cover T(I_{component}) within {n} steps")
    return n, reached


def _grow(system: PerturbedSystem, comp, J: IntervalSet) -> IntervalSet:
    pieces = []
    for br in comp.branches:
        for reg in system.noise.regions:
            lo, hi = max(br.lo, reg.lo), min(br.hi, reg.hi)
            if hi <= lo:
                continue
            for a, b in J.intersect(IntervalSet.of((lo, hi))):
                ya, yb = sorted((br(a), br(b)))
                pieces.append((ya + reg.law.lo, yb + reg.law.hi))
    return IntervalSet.from_pairs(pieces)
