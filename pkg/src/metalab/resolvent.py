"""Resolvent equation and potential theory on the grid chain.

The grid chain has transition matrix R (row = source cell) and generator
L = beta (R - I) acting on observables.  All potential-theoretic objects
live on the cells carrying stationary mass; cells with mass below
``ZERO_MASS`` are dropped, since every integral in the theory is weighted
by the stationary density.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import Disconnected, Reducible, SingularSystem, ZeroMassCell
from .grid import Grid, GridFunction
from .ulam import UlamOperator
from .wells import WellStructure, cell_labels

ZERO_MASS = 1e-14


@dataclass
class GeneratorMatrix:
    grid: Grid
    R: sp.csr_matrix
    beta: float

    @classmethod
    def from_operator(cls, op: UlamOperator, beta: float) -> "GeneratorMatrix":
        return cls(op.grid, op.matrix.tocsr(), float(beta))

    @property
    def L(self) -> sp.csr_matrix:
        n = self.R.shape[0]
        return (self.beta * (self.R - sp.identity(n, format="csr"))).tocsr()


@dataclass
class ReducedGenerator:
    theta: np.ndarray

    def __post_init__(self):
        self.theta = np.array(self.theta, dtype=float)
        np.fill_diagonal(self.theta, 0.0)
        if np.any(self.theta < 0):
            raise ValueError("rates must be nonnegative")

    @property
    def kappa(self) -> int:
        return self.theta.shape[0]

    @property
    def matrix(self) -> np.ndarray:
        return self.theta - np.diag(self.theta.sum(axis=1))

    def irreducible(self) -> bool:
        adj = self.theta > 0
        k = self.kappa
        reach = np.eye(k, dtype=bool) | adj
        for _ in range(k):
            reach = reach | ((reach.astype(int) @ reach.astype(int)) > 0)
        return bool(reach.all())

    def stationary(self) -> np.ndarray:
        """pi with pi L = 0, sum pi = 1."""
        k = self.kappa
        A = np.vstack([self.matrix.T, np.ones(k)])
        rhs = np.zeros(k + 1)
        rhs[-1] = 1.0
        if np.linalg.matrix_rank(A) < k:
            raise Reducible("reduced chain has no unique invariant law")
        pi, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        if np.abs(A @ pi - rhs).max() > 1e-9:
            raise Reducible("reduced chain has no unique invariant law")
        return pi


@dataclass
class ResolventSolution:
    lam: float
    g: np.ndarray
    G: GridFunction
    F: GridFunction
    oscillation: np.ndarray
    f_eps: np.ndarray
    residual: float
    labels: np.ndarray = field(repr=False, default=None)


def solve_resolvent(gen: GeneratorMatrix, lam: float, g, wells: WellStructure,
                    stationary: GridFunction) -> ResolventSolution:
    """Solve (lam - L) F = G with G = sum_i g(i) 1_{E_i} on the grid."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    g = np.asarray(g, dtype=float)
    labels = cell_labels(wells, gen.grid)
    Gv = np.zeros(gen.grid.n_cells)
    for i in range(1, wells.kappa + 1):
        Gv[labels == i] = g[i - 1]
    n = gen.grid.n_cells
    A = (lam * sp.identity(n, format="csr") - gen.L).tocsc()
    F = spla.spsolve(A, Gv)
    if not np.all(np.isfinite(F)):
        raise SingularSystem("resolvent system is singular")
    res = float(np.abs(A @ F - Gv).max())
    p = stationary.values
    osc = np.zeros(wells.kappa)
    f_eps = np.zeros(wells.kappa)
    for i in range(1, wells.kappa + 1):
        sel = labels == i
        if not sel.any():
            continue
        osc[i - 1] = F[sel].max() - F[sel].min()
        w = p[sel]
        f_eps[i - 1] = float((F[sel] * w).sum() / w.sum()) if w.sum() > 0 else np.nan
    return ResolventSolution(lam, g, GridFunction(gen.grid, Gv), GridFunction(gen.grid, F),
                             osc, f_eps, res, labels)


def solve_reduced(reduced: ReducedGenerator, lam: float, g) -> np.ndarray:
    if not lam > 0:
        raise ValueError("lambda must be positive")
    k = reduced.kappa
    return np.linalg.solve(lam * np.eye(k) - reduced.matrix, np.asarray(g, dtype=float))


def check_R2(sol: ResolventSolution, reduced: ReducedGenerator, tol: float) -> dict:
    f = solve_reduced(reduced, sol.lam, sol.g)
    err = np.abs(sol.f_eps - f)
    return {"f_eps": sol.f_eps.tolist(), "f": f.tolist(), "abs_error": err.tolist(),
            "tol": tol, "passed": bool(np.all(err <= tol))}


# -- potential theory --------------------------------------------------------

@dataclass
class ChainOnSupport:
    """Transition matrix and stationary weights restricted to positive-mass cells."""
    R: sp.csr_matrix
    p: np.ndarray  # stationary density values on the support
    h: float
    support: np.ndarray  # original cell indices
    excluded: np.ndarray

    def local(self, cells) -> np.ndarray:
        """Map original cell indices to support positions, dropping excluded cells."""
        pos = np.full(self.support.max() + 1 if self.support.size else 0, -1)
        pos[self.support] = np.arange(self.support.size)
        cells = np.asarray(cells)
        cells = cells[cells <= self.support.max()]
        out = pos[cells]
        return out[out >= 0]


def on_support(R: sp.spmatrix, p: GridFunction) -> ChainOnSupport:
    h = p.grid.h
    mass = p.values * h
    sup = np.flatnonzero(mass >= ZERO_MASS)
    exc = np.flatnonzero(mass < ZERO_MASS)
    Rs = sp.csr_matrix(R)[sup][:, sup]
    Rs = sp.diags(1.0 / np.asarray(Rs.sum(axis=1)).ravel()) @ Rs
    return ChainOnSupport(Rs.tocsr(), p.values[sup], h, sup, exc)


def adjoint_kernel(R: sp.spmatrix, p: GridFunction, strict: bool = False) -> ChainOnSupport:
    """R_dag[l, k] = p[k] R[k, l] / p[l] on the positive-mass cells."""
    ch = on_support(R, p)
    if strict and ch.excluded.size:
        raise ZeroMassCell(ch.excluded.tolist())
    P = sp.diags(ch.p)
    Rd = (sp.diags(1.0 / ch.p) @ ch.R.T @ P).tocsr()
    return ChainOnSupport(Rd, ch.p, ch.h, ch.support, ch.excluded)


def equilibrium_potential(R: sp.spmatrix, A, B) -> np.ndarray:
    """h = 1 on A, 0 on B, harmonic (h = R h) elsewhere."""
    n = R.shape[0]
    A, B = np.unique(np.asarray(A, dtype=int)), np.unique(np.asarray(B, dtype=int))
    if A.size == 0 or B.size == 0:
        raise ValueError("A and B must be nonempty")
    if np.intersect1d(A, B).size:
        raise ValueError("A and B must be disjoint")
    h = np.zeros(n)
    h[A] = 1.0
    interior = np.setdiff1d(np.arange(n), np.concatenate([A, B]))
    if interior.size == 0:
        return h
    R = sp.csr_matrix(R)
    RII = R[interior][:, interior]
    rhs = np.asarray(R[interior][:, A].sum(axis=1)).ravel()
    M = (sp.identity(interior.size, format="csc") - RII).tocsc()
    try:
        with np.errstate(all="raise"):
            x = spla.spsolve(M, rhs)
    except (RuntimeError, FloatingPointError, spla.MatrixRankWarning) as exc:
        raise Disconnected("interior cells cannot reach A or B") from exc
    if not np.all(np.isfinite(x)):
        raise Disconnected("interior cells cannot reach A or B")
    h[interior] = np.clip(x, 0.0, 1.0)
    return h


def _escape(ch: ChainOnSupport, A, B) -> np.ndarray:
    """e_k = P_k[H(B) < H+(A)] for k in A, computed without 1 - h cancellation."""
    hBA = equilibrium_potential(ch.R, B, A)
    return np.asarray(ch.R[A] @ hBA).ravel()


def capacity(ch: ChainOnSupport, beta: float, A, B) -> float:
    """beta * sum_{k in A} p_k h P_k[H(B) < H+(A)] (positions on the support)."""
    A = np.asarray(A, dtype=int)
    return float(beta * (ch.p[A] * ch.h * _escape(ch, A, B)).sum())


def dirichlet_form(ch: ChainOnSupport, beta: float, F) -> float:
    F = np.asarray(F, dtype=float)
    c = ch.R.tocoo()
    return float(0.5 * beta * (ch.p[c.row] * ch.h * c.data * (F[c.row] - F[c.col]) ** 2).sum())


def well_cells(ws: WellStructure, grid: Grid, ch: ChainOnSupport) -> list[np.ndarray]:
    lab = cell_labels(ws, grid)
    return [ch.local(np.flatnonzero(lab == i)) for i in range(1, ws.kappa + 1)]


def grid_rates(ch: ChainOnSupport, beta: float, cells: list[np.ndarray]) -> np.ndarray:
    """theta(i, j) = beta / mu(E_i) sum_{k in E_i} mu_k P_k[H(E_j) < H+(E_check_j)]."""
    k = len(cells)
    theta = np.zeros((k, k))
    mu = np.array([ch.p[c].sum() * ch.h for c in cells])
    for j in range(k):
        others = np.concatenate([cells[m] for m in range(k) if m != j])
        if cells[j].size == 0 or others.size == 0:
            continue
        hj = equilibrium_potential(ch.R, cells[j], others)
        for i in range(k):
            if i == j or cells[i].size == 0:
                continue
            flow = np.asarray(ch.R[cells[i]] @ hj).ravel()
            theta[i, j] = beta * float((ch.p[cells[i]] * ch.h * flow).sum()) / mu[i]
    return theta


@dataclass
class RateIdentityReport:
    theta: np.ndarray
    theta_dag: np.ndarray
    mu: np.ndarray
    cap: np.ndarray
    cap_dag: np.ndarray
    balance_error: float  # max rel |mu_i theta(i,j) - mu_j theta_dag(j,i)|
    sum_error: float  # max rel over i of the row-sum identities
    cap_error: float  # max rel |cap - cap_dag|
    tol: float
    passed: bool


def _rel(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(scale > 0, np.abs(a - b) / scale, 0.0)
    return float(r.max()) if r.size else 0.0


def check_rate_identities(R: sp.spmatrix, p: GridFunction, beta: float, wells: WellStructure,
                          tol: float = 1e-6) -> RateIdentityReport:
    ch = on_support(R, p)
    chd = adjoint_kernel(R, p)
    cells = well_cells(wells, p.grid, ch)
    k = len(cells)
    theta = grid_rates(ch, beta, cells)
    theta_d = grid_rates(chd, beta, cells)
    mu = np.array([ch.p[c].sum() * ch.h for c in cells])
    cap = np.zeros(k)
    cap_d = np.zeros(k)
    for i in range(k):
        rest = np.concatenate([cells[m] for m in range(k) if m != i])
        cap[i] = capacity(ch, beta, cells[i], rest)
        cap_d[i] = capacity(chd, beta, cells[i], rest)
    bal = _rel(mu[:, None] * theta, (mu[:, None] * theta_d).T)
    sums = max(_rel(theta.sum(axis=1), cap / mu), _rel(theta_d.sum(axis=1), cap / mu))
    ce = _rel(cap, cap_d)
    return RateIdentityReport(theta, theta_d, mu, cap, cap_d, bal, sums, ce, tol,
                              bool(bal <= tol and sums <= tol and ce <= tol))
