import numpy as np
import pytest
import scipy.sparse as sp

from metalab.grid import Grid, GridFunction
from metalab.maps import two_well
from metalab.resolvent import (GeneratorMatrix, ReducedGenerator, adjoint_kernel, capacity,
                               check_R2, check_rate_identities, dirichlet_form,
                               equilibrium_potential, on_support, solve_reduced, solve_resolvent)
from metalab.scenarios import make_system
from metalab.ulam import build_perturbed, stationary_density
from metalab.wells import build_wells


def toy(R, p=None):
    R = np.asarray(R, float)
    n = R.shape[0]
    g = Grid(0, 1, n)
    p = np.full(n, 1.0) if p is None else np.asarray(p, float) / (np.sum(p) * g.h)
    return g, sp.csr_matrix(R), GridFunction(g, p)


@pytest.fixture(scope="module")
def tw():
    s = make_system("two_well", 0.05, 3, b=0.1)
    op = build_perturbed(s.kernel, 1024)
    return s, op, stationary_density(op)


def test_constant_g_without_holes():
    s = make_system("two_well", 0.05, 3, b=0.1, delta=np.zeros((2, 2)))
    op = build_perturbed(s.kernel, 512)
    p = stationary_density(op)
    sol = solve_resolvent(GeneratorMatrix.from_operator(op, s.beta), 2.0, [3.0, 3.0], s.wells(), p)
    assert np.allclose(sol.F.values, 1.5, atol=1e-12)


def test_contraction(tw):
    s, op, p = tw
    gen = GeneratorMatrix.from_operator(op, s.beta)
    rng = np.random.default_rng(0)
    for _ in range(20):
        g = rng.normal(size=2)
        lam = rng.uniform(0.1, 3)
        sol = solve_resolvent(gen, lam, g, s.wells(), p)
        assert np.abs(sol.F.values).max() <= np.abs(g).max() / lam + 1e-12
        assert sol.residual < 1e-8


def test_reduced_closed_form():
    th = 0.3
    red = ReducedGenerator([[0, th], [th, 0]])
    f = solve_reduced(red, 1.0, [1, 0])
    assert f == pytest.approx([(1 + th) / (1 + 2 * th), th / (1 + 2 * th)])
    assert solve_reduced(red, 2.0, [4, 4]) == pytest.approx([2, 2])
    assert red.stationary() == pytest.approx([0.5, 0.5])


def test_three_state_reduced_matches_inverse():
    a, b, c = 0.2, 0.5, 0.7
    red = ReducedGenerator([[0, a, 0], [b, 0, c], [0, a, 0]])
    L = red.matrix
    g = np.array([1.0, -2.0, 0.5])
    assert solve_reduced(red, 1.5, g) == pytest.approx(np.linalg.inv(1.5 * np.eye(3) - L) @ g)
    pi = red.stationary()
    assert pi @ L == pytest.approx(np.zeros(3), abs=1e-14)
    # balance across each edge: pi1 a = pi2 b and pi3 a = pi2 c
    assert pi == pytest.approx(np.array([b, a, c]) / (a + b + c))


def test_two_cell_toy_is_the_reduced_chain():
    a, beta = 0.1, 5.0
    g, R, p = toy([[1 - a, a], [a, 1 - a]])
    ws = build_wells(two_well(0.05), np.zeros((2, 2)))
    sol = solve_resolvent(GeneratorMatrix(g, R, beta), 1.0, [1, 0], ws, p)
    ident = check_rate_identities(R, p, beta, ws)
    assert ident.theta[0, 1] == pytest.approx(beta * a)
    rep = check_R2(sol, ReducedGenerator(ident.theta), 1e-12)
    assert rep["passed"]
    worse = check_R2(sol, ReducedGenerator(1.5 * ident.theta), 1e-12)
    assert max(worse["abs_error"]) > max(rep["abs_error"])


def test_adjoint_examples():
    R = np.array([[0.5, 0.5, 0], [0.25, 0.5, 0.25], [0, 0.5, 0.5]])
    _, Rs, p = toy(R, [1, 2, 1])
    assert np.allclose(adjoint_kernel(Rs, p).R.toarray(), R)
    C = np.roll(np.eye(3), 1, axis=1)
    _, Cs, p = toy(C)
    assert np.allclose(adjoint_kernel(Cs, p).R.toarray(), C.T)


def test_adjoint_keeps_stationary(tw):
    _, op, p = tw
    ch = adjoint_kernel(op.matrix, p)
    w = ch.p * ch.h
    assert np.abs(ch.R.T @ w - w).sum() < 1e-10


def test_birth_death_harmonic():
    n = 8
    rng = np.random.default_rng(1)
    up = rng.uniform(0.2, 0.5, n)
    down = rng.uniform(0.2, 0.5, n)
    R = np.zeros((n, n))
    for k in range(n):
        if k + 1 < n:
            R[k, k + 1] = up[k]
        if k > 0:
            R[k, k - 1] = down[k]
        R[k, k] = 1 - R[k].sum()
    h = equilibrium_potential(sp.csr_matrix(R), [n - 1], [0])
    rho = np.r_[1.0, np.cumprod(down[1:n - 1] / up[1:n - 1])]
    expect = np.r_[0.0, np.cumsum(rho)] / rho.sum()
    assert h == pytest.approx(expect, abs=1e-12)
    assert h.min() >= 0 and h.max() <= 1


def test_potential_complement():
    R = sp.csr_matrix(np.full((4, 4), 0.25))
    assert equilibrium_potential(R, [0, 1, 2], [3]) == pytest.approx([1, 1, 1, 0])


def test_capacity_one_step_when_covering():
    R = np.array([[0.6, 0.4, 0], [0.1, 0.6, 0.3], [0, 0.5, 0.5]])
    w = np.linalg.matrix_power(R.T, 500) @ np.ones(3) / 3
    _, Rs, p = toy(R, w)
    ch = on_support(Rs, p)
    beta = 2.0
    direct = beta * ch.h * (ch.p[0] * (R[0, 1] + R[0, 2]))
    assert capacity(ch, beta, [0], [1, 2]) == pytest.approx(direct)


def test_dirichlet_form_properties(tw):
    s, op, p = tw
    ch = on_support(op.matrix, p)
    n = ch.p.size
    assert dirichlet_form(ch, s.beta, np.ones(n)) == pytest.approx(0, abs=1e-12)
    F = np.random.default_rng(2).normal(size=n)
    assert dirichlet_form(ch, s.beta, 3 * F) == pytest.approx(9 * dirichlet_form(ch, s.beta, F))
    A, B = np.arange(0, 10), np.arange(n - 10, n)
    h = equilibrium_potential(ch.R, A, B)
    assert dirichlet_form(ch, s.beta, h) == pytest.approx(capacity(ch, s.beta, A, B), rel=1e-8)


def test_rate_identities_two_well(tw):
    s, op, p = tw
    rep = check_rate_identities(op.matrix, p, s.beta, s.wells())
    assert rep.passed
    assert rep.cap_error < 1e-8
    ch = on_support(op.matrix, p)
    A, B = np.arange(0, 30), np.arange(ch.p.size // 2, ch.p.size // 2 + 30)
    c1, c2 = capacity(ch, s.beta, A, B), capacity(ch, s.beta, B, A)
    assert abs(c1 - c2) <= 1e-8 * max(c1, c2)
