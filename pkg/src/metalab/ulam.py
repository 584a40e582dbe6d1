"""Ulam discretization of deterministic, perturbed and restricted transfer operators.

Orientation: ``M[k, l]`` is the probability that a point uniformly
distributed in cell k lands in cell l.  Densities are left vectors (the
next density is ``M.T @ p``) and observables right vectors (``M @ F``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import Budget, DegenerateCell, GridMismatch, NoConvergence, QuadratureBudget
from .grid import Grid, GridFunction
from .intervals import IntervalSet
from .maps import PiecewiseLinearMap, eval_map
from .noise import TransitionKernel, UniformAsym, segments
from .restricted import RestrictedFamily

DENSE_MAX = 2048


@dataclass
class UlamOperator:
    grid: Grid
    matrix: sp.csr_matrix
    kind: str  # "deterministic" | "perturbed" | "restricted"
    component: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.grid.n_cells

    def push(self, density: np.ndarray) -> np.ndarray:
        return self.matrix.T @ density

    def apply(self, f: GridFunction) -> GridFunction:
        self.grid.check_same(f.grid)
        return GridFunction(self.grid, self.push(f.values))

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def to_text(self) -> str:
        """Triples 'k l value' one per line, values in shortest round-trip form."""
        c = self.matrix.tocoo()
        order = np.lexsort((c.col, c.row))
        lines = [f"# n_cells={self.n} interval=[{self.grid.lo!r}, {self.grid.hi!r}] kind={self.kind}"]
        lines += [f"{c.row[i]} {c.col[i]} {float(c.data[i])!r}" for i in order]
        return "\n".join(lines) + "\n"


def _component_grid(m: PiecewiseLinearMap, component: int | None, n_cells: int) -> Grid:
    if component is None:
        return Grid(m.ambient[0], m.ambient[1], n_cells)
    c = m.component(component)
    return Grid(c.lo, c.hi, n_cells)


def _assemble(grid: Grid, target: Grid, seg, normalize: bool = True) -> sp.csr_matrix:
    lo, hi, s, c, nlo, nhi = (np.ascontiguousarray(a, dtype=float) for a in seg)
    args = (grid.lo, grid.h, grid.n_cells, lo, hi, s, c, nlo, nhi, target.lo, target.h, target.n_cells)
    counts = _kernels.ulam_count(*args)
    offsets = np.concatenate(([0], np.cumsum(counts)))
    nnz = int(offsets[-1])
    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz)
    _kernels.ulam_fill(*args, offsets, rows, cols, vals)
    vals = np.maximum(vals, 0.0)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(grid.n_cells, target.n_cells))
    mat.eliminate_zeros()
    if normalize:
        mat = _normalize_rows(mat)
    return mat


def _normalize_rows(mat: sp.csr_matrix) -> sp.csr_matrix:
    s = np.asarray(mat.sum(axis=1)).ravel()
    s[s == 0] = 1.0
    return sp.diags(1.0 / s) @ mat


def _branch_segments(m: PiecewiseLinearMap, component: int | None):
    brs = m.branches if component is None else m.component(component).branches
    z = np.zeros(len(brs))
    return ([b.lo for b in brs], [b.hi for b in brs], [b.slope for b in brs],
            [b.intercept for b in brs], z, z)


def build_deterministic(m: PiecewiseLinearMap, component: int | None, n_cells: int,
                        check_cells: bool = True) -> UlamOperator:
    """Exact Ulam matrix of T on the grid over closure(I_i) (whole interval if component is None)."""
    grid = _component_grid(m, component, n_cells)
    if check_cells:
        brs = m.branches if component is None else m.component(component).branches
        narrow = [b for b in brs if b.hi - b.lo < grid.h]
        if narrow:
            raise DegenerateCell(f"{len(narrow)} branch domain(s) narrower than h={grid.h:.3g}; "
                                 "increase n_cells")
    mat = _assemble(grid, grid, _branch_segments(m, component))
    return UlamOperator(grid, mat, "deterministic", component)


def _noise_segments(kernel: TransitionKernel, component: int | None):
    segs = [s for s in segments(kernel) if component is None or s["component"] == component]
    cols = ([s["lo"] for s in segs], [s["hi"] for s in segs], [s["slope"] for s in segs],
            [s["intercept"] for s in segs],
            [s["law"].lo for s in segs], [s["law"].hi for s in segs])
    return segs, cols


def _quadrature_rows(kernel: TransitionKernel, grid: Grid, target: Grid, points_per_cell: int,
                     component: int | None) -> sp.csr_matrix:
    """Midpoint quadrature in x, exact CDF differences in y (non-uniform laws)."""
    if points_per_cell < 32:
        raise QuadratureBudget("at least 32 quadrature points per cell are required")
    h = grid.h
    offs = (np.arange(points_per_cell) + 0.5) / points_per_cell
    edges = target.edges
    rows, cols, vals = [], [], []
    for k in range(grid.n_cells):
        xs = grid.lo + (k + offs) * h
        ts = eval_map(kernel.map, xs)
        ridx = kernel.noise.region_index(xs)
        acc = np.zeros(target.n_cells)
        for r in np.unique(ridx):
            sel = ridx == r
            law = kernel.noise.regions[r].law
            lo, hi = law.support
            t = ts[sel]
            l0 = int(max(0, np.floor((t.min() + lo - target.lo) / target.h)))
            l1 = int(min(target.n_cells - 1, np.floor((t.max() + hi - target.lo) / target.h)))
            if l1 < l0:
                continue
            e = edges[l0:l1 + 2]
            cdf = law.cdf(e[None, :] - t[:, None])
            acc[l0:l1 + 1] += np.diff(cdf, axis=1).sum(axis=0)
        acc /= points_per_cell
        nz = np.flatnonzero(acc > 0)
        rows.append(np.full(nz.size, k))
        cols.append(nz)
        vals.append(acc[nz])
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                        shape=(grid.n_cells, target.n_cells))
    return mat


def build_perturbed(kernel: TransitionKernel, n_cells: int, restriction=None,
                    points_per_cell: int = 32, fold_nodes: int = 64) -> UlamOperator:
    """Ulam matrix of the noisy kernel; restriction=(component, fold_rules) for P~^i."""
    m = kernel.map
    if restriction is None:
        grid = _component_grid(m, None, n_cells)
        if kernel.noise.is_uniform:
            _, seg = _noise_segments(kernel, None)
            mat = _assemble(grid, grid, seg)
        else:
            mat = _normalize_rows(_quadrature_rows(kernel, grid, grid, points_per_cell, None))
        return UlamOperator(grid, mat, "perturbed", None,
                            {"epsilon": kernel.noise.epsilon, "q": kernel.noise.q})
    component, rules = restriction
    family = rules if isinstance(rules, RestrictedFamily) else RestrictedFamily(kernel, component, rules)
    grid = _component_grid(m, component, n_cells)
    if kernel.noise.is_uniform:
        _, seg = _noise_segments(kernel, component)
        main = _assemble(grid, grid, seg, normalize=False)
    else:
        main = _quadrature_rows(kernel, grid, grid, points_per_cell, component)
    fold = _fold_part(family, grid, main, fold_nodes)
    mat = _normalize_rows((main + fold).tocsr())
    return UlamOperator(grid, mat, "restricted", component,
                        {"epsilon": kernel.noise.epsilon, "q": kernel.noise.q})


def _exit_u_intervals(family: RestrictedFamily) -> list[tuple[float, float]]:
    """Seeds u in [0, 1] for which the perturbed map leaves the component."""
    comp = family.comp
    ivs = []
    for s in family._segs:
        law = s["law"]
        if not isinstance(law, UniformAsym):
            return [(0.0, 1.0)]
        tmin, tmax = s["tmin"], s["tmax"]
        if law.width == 0:
            if tmax + law.lo > comp.hi or tmin + law.lo < comp.lo:
                return [(0.0, 1.0)]
            continue
        # up: tmax + lo + v w > c_hi ; down: tmin + lo + v w < c_lo, with v = u or 1 - u
        for thr, up in (((comp.hi - tmax - law.lo) / law.width, True),
                        ((comp.lo - tmin - law.lo) / law.width, False)):
            v = (max(thr, 0.0), 1.0) if up else (0.0, min(thr, 1.0))
            if v[1] - v[0] <= 0:
                continue
            ivs.append((1.0 - v[1], 1.0 - v[0]) if s["flip"] else v)
    return IntervalSet.from_pairs(ivs).pieces


def _fold_part(family: RestrictedFamily, grid: Grid, main: sp.csr_matrix, nodes: int) -> sp.csr_matrix:
    missing = 1.0 - np.asarray(main.sum(axis=1)).ravel()
    missing[missing < 1e-9] = 0.0  # rounding in the exact part; renormalized below
    n = grid.n_cells
    acc: dict[int, np.ndarray] = {}

    def deposit(u: float, weight: float, only=None):
        for e in family.excursions(u):
            br = e.branch
            k0 = int(grid.cell_of(e.lo))
            k1 = int(grid.cell_of(e.hi))
            for k in range(k0, k1 + 1):
                if only is not None and k != only:
                    continue
                xa = max(e.lo, grid.lo + k * grid.h)
                xb = min(e.hi, grid.lo + (k + 1) * grid.h)
                if xb <= xa:
                    continue
                ya, yb = sorted((br(xa), br(xb)))
                row = acc.setdefault(k, np.zeros(n))
                mass = weight * (xb - xa) / grid.h
                if yb - ya <= 1e-300:
                    row[int(grid.cell_of(ya))] += mass
                    continue
                edges = grid.edges
                l0, l1 = int(grid.cell_of(ya)), int(grid.cell_of(yb))
                ov = np.clip(np.minimum(edges[l0 + 1:l1 + 2], yb) - np.maximum(edges[l0:l1 + 1], ya), 0, None)
                row[l0:l1 + 1] += mass * ov / (yb - ya)

    ivs = _exit_u_intervals(family)
    for a, b in ivs:
        du = (b - a) / nodes
        for j in range(nodes):
            deposit(a + (j + 0.5) * du, du)
    for k in np.flatnonzero(missing > 0):
        if k not in acc or acc[k].sum() <= 0:
            for a, b in ivs:
                for u in (b - 1e-12 * max(b - a, 1e-300), a + 1e-12 * max(b - a, 1e-300)):
                    deposit(u, 1.0, only=k)
            if k not in acc or acc[k].sum() <= 0:
                raise QuadratureBudget(f"row {k} loses mass {missing[k]:.3g} but no fold reaches it")
    rows, cols, vals = [], [], []
    for k, row in acc.items():
        tot = row.sum()
        if missing[k] <= 0 or tot <= 0:
            continue
        nz = np.flatnonzero(row > 0)
        rows.append(np.full(nz.size, k))
        cols.append(nz)
        vals.append(row[nz] * (missing[k] / tot))
    if not rows:
        return sp.csr_matrix((n, n))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))


def per_omega_operator(family: RestrictedFamily, u: float, n_cells: int) -> UlamOperator:
    op = build_deterministic(family.restricted_map(u), 1, n_cells, check_cells=False)
    op.kind, op.component = "restricted-omega", family.component
    op.meta["u"] = u
    return op


# -- spectra and stationary densities ---------------------------------------

def stationary_density(op: UlamOperator, tol: float = 1e-12, method: str = "direct",
                       max_iter: int = 100_000) -> GridFunction:
    """Left fixed vector p M = p normalized to integrate to 1.

    ``direct`` solves (M^T - I) p = 0 with one equation replaced by the
    normalization; ``power`` iterates and falls back to the direct solve.
    """
    n, h = op.n, op.grid.h
    MT = op.matrix.T.tocsr()
    if method == "power":
        p = np.full(n, 1.0 / (n * h))
        for _ in range(max_iter):
            nxt = MT @ p
            if h * np.abs(nxt - p).sum() < tol:
                return GridFunction(op.grid, nxt)
            p = nxt
    A = (MT - sp.identity(n, format="csr")).tolil()
    A[0, :] = h
    rhs = np.zeros(n)
    rhs[0] = 1.0
    p = spla.spsolve(A.tocsc(), rhs)
    p = np.where(np.abs(p) < 1e-300, 0.0, p)
    p = np.maximum(p, 0.0)
    p /= p.sum() * h
    res = h * np.abs(MT @ p - p).sum()
    if not np.isfinite(res) or res > max(tol, 1e-9):
        raise NoConvergence("stationary solve failed", res)
    return GridFunction(op.grid, p)


def leading_eigenvalue(op: UlamOperator) -> float:
    if op.n <= DENSE_MAX:
        return float(np.abs(np.linalg.eigvals(op.matrix.toarray())).max())
    vals = spla.eigs(op.matrix.T.tocsc(), k=2, which="LM", return_eigenvectors=False, tol=1e-13)
    return float(np.abs(vals).max())


def second_eigenvalue(op: UlamOperator, return_residual: bool = False):
    """Modulus of the second-largest eigenvalue.

    Dense for small grids; otherwise ARPACK on the operator deflated against
    the stationary pair, v -> v M - (v . 1) p h, whose spectrum is that of M
    with the eigenvalue 1 replaced by 0.
    """
    n = op.n
    if n <= DENSE_MAX:
        dense = op.matrix.toarray()
        vals, vecs = np.linalg.eig(dense.T)
        order = np.argsort(-np.abs(vals))
        lam, v = vals[order[1]], vecs[:, order[1]]
        res = float(np.linalg.norm(dense.T @ v - lam * v) / max(np.linalg.norm(v), 1e-300))
    else:
        p = stationary_density(op).values * op.grid.h
        MT = op.matrix.T.tocsr()
        lin = spla.LinearOperator((n, n), matvec=lambda v: MT @ v - p * v.sum(), dtype=float)
        vals, vecs = spla.eigs(lin, k=1, which="LM", tol=1e-13, maxiter=100 * n)
        lam, v = vals[0], vecs[:, 0]
        res = float(np.linalg.norm(lin.matvec(v) - lam * v) / np.linalg.norm(v))
        if res > 1e-8:
            raise NoConvergence("deflated ARPACK did not converge", res)
    lam = float(abs(lam))
    return (lam, res) if return_residual else lam


# -- BV machinery ------------------------------------------------------------

def total_variation(f: GridFunction) -> float:
    return float(np.abs(np.diff(f.values)).sum())


def bv_norm(f: GridFunction) -> float:
    return total_variation(f) + f.l1


@dataclass
class LYReport:
    s: float
    ell: float
    checked: int
    violations: int
    worst_margin: float  # min over trials of (rhs - lhs) / ||F||_BV
    details: list = field(default_factory=list)
    # against (2/s)|F|_TV + (2/ell + 1)||F||_1, which also bounds the L1 part of the left side
    sharp_violations: int = 0


def random_bv_functions(grid: Grid, count: int, rng: np.random.Generator) -> list[GridFunction]:
    """A mix of step functions, noisy profiles and narrow bumps."""
    n = grid.n_cells
    out = []
    for i in range(count):
        kind = i % 4
        if kind == 0:
            cuts = np.sort(rng.choice(n, size=rng.integers(1, 12), replace=False))
            v = np.zeros(n)
            for c in cuts:
                v[c:] += rng.normal()
        elif kind == 1:
            v = rng.random(n)
        elif kind == 2:
            a = rng.integers(0, n)
            v = np.zeros(n)
            v[a:a + rng.integers(1, 8)] = 1.0
        else:
            v = np.cumsum(rng.normal(size=n)) / np.sqrt(n) + rng.normal()
        out.append(GridFunction(grid, v))
    return out


def ly_check(family: RestrictedFamily, s: float, ell: float, n_cells: int, trials: int = 100,
             n_omega: int = 50, seed: int = 0, slack: float = 1e-6) -> LYReport:
    """||P_w F||_BV <= (2/s)||F||_BV + (2/ell)||F||_1 for sampled w and random F.

    Half of the realizations are drawn from the seeds that trigger a fold,
    the rest from the full seed law.
    """
    rng = np.random.default_rng(seed)
    ivs = _exit_u_intervals(family)
    us = []
    for j in range(n_omega):
        if j % 2 == 0 and ivs:
            a, b = ivs[rng.integers(len(ivs))]
            us.append(a + (b - a) * rng.random())
        else:
            us.append(rng.random())
    grid = _component_grid(family.kernel.map, family.component, n_cells)
    funcs = random_bv_functions(grid, trials, rng)
    F = np.stack([f.values for f in funcs], axis=1)
    tv = np.abs(np.diff(F, axis=0)).sum(axis=0)
    l1 = grid.h * np.abs(F).sum(axis=0)
    bv = tv + l1
    rhs = (2 / s) * bv + (2 / ell) * l1
    sharp = (2 / s) * tv + (2 / ell + 1) * l1
    worst, viol, sviol, details = np.inf, 0, 0, []
    for u in us:
        op = per_omega_operator(family, u, n_cells)
        G = op.matrix.T @ F
        lhs = np.abs(np.diff(G, axis=0)).sum(axis=0) + grid.h * np.abs(G).sum(axis=0)
        margin = (rhs - lhs) / bv
        bad = margin < -slack
        viol += int(bad.sum())
        sviol += int(((sharp - lhs) / bv < -slack).sum())
        worst = min(worst, float(margin.min()))
        if bad.any():
            details.append((u, int(bad.sum())))
    return LYReport(s, ell, len(us) * trials, viol, worst, details, sviol)


@dataclass
class OperatorDistance:
    lower: float
    upper: float | None
    argmax: str


def operator_distance(p_det: UlamOperator, p_rest: UlamOperator, trials: int = 200, seed: int = 0,
                      upper: float | None = None) -> OperatorDistance:
    """Lower estimate of sup_{||F||_BV <= 1} ||(P~ - P) F||_1 on the grid.

    Test functions: indicators of dyadic intervals and random BV functions,
    each scaled to unit BV norm.
    """
    p_det.grid.check_same(p_rest.grid)
    grid = p_det.grid
    n = grid.n_cells
    D = (p_rest.matrix - p_det.matrix).T.tocsr()
    best, arg = 0.0, "none"
    level = 1
    while level <= n:
        w = n // level
        if w == 0:
            break
        for j in range(level):
            v = np.zeros(n)
            v[j * w:(j + 1) * w] = 1.0
            f = GridFunction(grid, v)
            val = grid.h * np.abs(D @ v).sum() / bv_norm(f)
            if val > best:
                best, arg = val, f"dyadic {level}:{j}"
        level *= 2
    rng = np.random.default_rng(seed)
    for i, f in enumerate(random_bv_functions(grid, trials, rng)):
        nb = bv_norm(f)
        if nb == 0:
            continue
        val = grid.h * np.abs(D @ f.values).sum() / nb
        if val > best:
            best, arg = val, f"random {i}"
    return OperatorDistance(float(best), upper, arg)


def two_well_distance_bound(b: float, epsilon: float, q: float, component_length: float = 0.5) -> float:
    """Analytic bound C eps for the two-well restricted operator on BV(I_i).

    Shift part: (gamma + D) E|sigma| with gamma = 2/s, D = 2/ell.  Fold
    part: 2 max(1, 1/Leb I_i) E[sigma_+] / (1 - 2b).
    """
    s, ell = 4 - 8 * b, 0.5 - b
    w = epsilon + epsilon ** q
    e_abs = (epsilon ** 2 + epsilon ** (2 * q)) / (2 * w)
    e_pos = epsilon ** (2 * q) / (2 * w)
    return (2 / s + 2 / ell) * e_abs + 2 * max(1.0, 1.0 / component_length) * e_pos / (1 - 2 * b)


# -- n-step densities and mixing -------------------------------------------

def n_step_density(op: UlamOperator, initial: GridFunction, n: int) -> GridFunction:
    if n < 1:
        raise ValueError("n must be >= 1")
    op.grid.check_same(initial.grid)
    p = initial.values
    for _ in range(n - 1):
        p = op.push(p)
    return GridFunction(op.grid, p)


def estimate_n_mix(op: UlamOperator, well: IntervalSet, varsigma: float, max_n: int = 10_000,
                   max_starts: int = 256, stationary: GridFunction | None = None) -> int:
    """Smallest n with max over starting cells in the well of d_TV(p^n_x, p~) <= varsigma.

    The one-step density from cell k is row k of the operator divided by h;
    starting cells are subsampled evenly to at most ``max_starts``.
    """
    if varsigma >= 1:
        return 0
    if not varsigma > 0:
        raise Budget("varsigma must be positive")
    grid, h = op.grid, op.grid.h
    x = grid.centers
    a = well.as_array()
    cells = np.flatnonzero(np.any((x[:, None] >= a[:, 0]) & (x[:, None] <= a[:, 1]), axis=1))
    if cells.size == 0:
        raise ValueError("no grid cell centred in the well")
    if cells.size > max_starts:
        cells = cells[np.linspace(0, cells.size - 1, max_starts).round().astype(int)]
    pst = (stationary or stationary_density(op)).values
    S = op.matrix[cells].toarray().T / h  # columns are densities
    MT = op.matrix.T.tocsr()
    for n in range(1, max_n + 1):
        d = 0.5 * h * np.abs(S - pst[:, None]).sum(axis=0).max()
        if d <= varsigma:
            return n
        S = MT @ S
    raise Budget(f"mixing not reached within {max_n} steps")


def mixing_decay_rate(op: UlamOperator, start: GridFunction, n: int = 60) -> float:
    """Geometric decay ratio of d_TV(p^n, p~) fitted over n steps."""
    pst = stationary_density(op).values
    p = start.values
    d = []
    for _ in range(n):
        d.append(0.5 * op.grid.h * np.abs(p - pst).sum())
        p = op.push(p)
    d = np.array(d)
    good = d > 1e-13
    k = np.arange(n)[good]
    slope = np.polyfit(k, np.log(d[good]), 1)[0]
    return float(np.exp(slope))


def density_csv(f: GridFunction) -> str:
    lines = ["cell_left,cell_right,value"]
    lines += [f"{a!r},{b!r},{float(v)!r}" for a, b, v in f.to_csv_rows()]
    return "\n".join(lines) + "\n"
