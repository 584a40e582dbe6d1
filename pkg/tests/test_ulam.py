import numpy as np
import pytest
import scipy.sparse as sp

from metalab.errors import Budget
from metalab.grid import Grid, GridFunction
from metalab.intervals import IntervalSet
from metalab.maps import eval_map, from_branch_lists, two_well
from metalab.noise import TransitionKernel, two_well_noise
from metalab.restricted import RestrictedFamily, two_well_rules
from metalab.ulam import (UlamOperator, build_deterministic, build_perturbed, bv_norm,
                          estimate_n_mix, leading_eigenvalue, ly_check, n_step_density,
                          operator_distance, per_omega_operator, second_eigenvalue, stationary_density,
                          two_well_distance_bound)
from metalab.wells import build_wells, default_delta


def kernel(eps, q=3, b=0.05):
    return TransitionKernel(two_well(b), two_well_noise(eps, q))


def test_deterministic_row_matches_monte_carlo():
    m = two_well(0.05)
    op = build_deterministic(m, 1, 256)
    k = 10  # cell [10h, 11h] lies inside the first branch
    h = op.grid.h
    rng = np.random.default_rng(1)
    y = eval_map(m, rng.uniform(k * h, (k + 1) * h, 100_000))
    emp = np.bincount(np.floor(y / h).astype(int), minlength=256) / y.size
    row = op.matrix[k].toarray().ravel()
    assert np.count_nonzero(row) <= int(np.ceil(3.6)) + 1
    assert np.abs(row - emp).max() < 5e-3


def test_deterministic_spectrum():
    op = build_deterministic(two_well(0.05), 1, 1024)
    assert np.abs(op.row_sums() - 1).max() < 1e-12
    assert leading_eigenvalue(op) == pytest.approx(1.0, abs=1e-10)
    assert second_eigenvalue(op) < 0.9


def test_doubling_map_ulam_is_exact_markov():
    # dyadic cells form a Markov partition, so the Ulam matrix has spectrum {1, 0}
    m = from_branch_lists("doubling", [[((0, 0), (0.5, 1)), ((0.5, 0), (1, 1))]])
    op = build_deterministic(m, None, 256)
    # the zero eigenvalue sits in a large Jordan block, so dense eig returns O(eps^(1/k))
    assert second_eigenvalue(op) < 0.05


def test_perturbed_rows_and_symmetry():
    op = build_perturbed(kernel(0.05), 1024)
    assert np.abs(op.row_sums() - 1).max() < 1e-10
    p = stationary_density(op)
    assert p.integral(IntervalSet.of((0, 0.5))) == pytest.approx(0.5, abs=2e-3)
    s, ell = 3.6, 0.45
    assert bv_norm(p) <= (2 / ell) / (1 - 2 / s) + 0.5


def test_gap_closes():
    lams = [second_eigenvalue(build_perturbed(kernel(e, b=0.1), 512)) for e in (0.1, 0.05)]
    assert lams[0] < lams[1] < 1


def test_stationary_two_cells():
    g = Grid(0, 1, 2)
    op = UlamOperator(g, sp.csr_matrix(np.full((2, 2), 0.5)), "toy", None)
    assert stationary_density(op).values == pytest.approx([1.0, 1.0])
    assert stationary_density(op, method="power").values == pytest.approx([1.0, 1.0])


def test_bv_norm_examples():
    g = Grid(0, 0.5, 8)
    assert bv_norm(GridFunction(g, np.full(8, 3.0))) == pytest.approx(1.5)
    step = GridFunction(g, np.r_[np.zeros(4), np.ones(4)])
    assert bv_norm(step) == pytest.approx(1 + 0.25)
    alt = GridFunction(g, np.tile([1.0, -1.0], 4))
    assert bv_norm(alt) == pytest.approx(2 * 7 + 0.5)


def test_restricted_operator_is_stochastic_and_irreducible():
    k = kernel(0.05)
    op = build_perturbed(k, 1024, restriction=(1, two_well_rules(0.05)))
    assert np.abs(op.row_sums() - 1).max() < 1e-10
    p = stationary_density(op)
    q = stationary_density(op, method="power", tol=1e-13)
    assert np.abs(p.values - q.values).max() * op.grid.h < 1e-9


def test_ly_inequality_small():
    fam = RestrictedFamily(kernel(0.05), 1, two_well_rules(0.05))
    rep = ly_check(fam, 3.6, 0.45, 256, trials=20, n_omega=10, seed=3)
    assert rep.violations == 0
    assert rep.sharp_violations == 0
    assert rep.checked == 200


def test_ly_sharp_bound_full_family():
    fam = RestrictedFamily(kernel(0.05), 1, two_well_rules(0.05))
    rep = ly_check(fam, 3.6, 0.45, 512, trials=100, n_omega=50, seed=2024)
    assert rep.sharp_violations == 0


def test_ly_constant_density_negative_noise():
    # four branches onto (b + sigma, 1/2 + sigma); the top end is interior, so two jumps of 4/s
    fam = RestrictedFamily(kernel(0.05), 1, two_well_rules(0.05))
    op = per_omega_operator(fam, 0.5, 1024)
    G = op.matrix.T @ np.ones(1024)
    tv = np.abs(np.diff(G)).sum()
    l1 = op.grid.h * np.abs(G).sum()
    assert tv == pytest.approx(2 * 4 / 3.6, rel=1e-9)
    assert l1 == pytest.approx(0.5, rel=1e-9)
    assert tv + l1 > (2 / 3.6) * 0.5 + (2 / 0.45) * 0.5
    assert tv + l1 <= (2 / 0.45 + 1) * 0.5 + 1e-9


def test_operator_distance_bounds():
    k = kernel(0.05)
    det = build_deterministic(k.map, 1, 1024)
    rest = build_perturbed(k, 1024, restriction=(1, two_well_rules(0.05)))
    d = operator_distance(det, rest, trials=20)
    assert 0 < d.lower <= two_well_distance_bound(0.05, 0.05, 3) * 1.05


def test_n_step_and_mixing():
    k = kernel(0.05)
    op = build_perturbed(k, 512, restriction=(1, two_well_rules(0.05)))
    g = op.grid
    start = GridFunction(g, np.r_[np.full(16, 1 / (16 * g.h)), np.zeros(g.n_cells - 16)])
    assert np.array_equal(n_step_density(op, start, 1).values, start.values)
    far = n_step_density(op, start, 400)
    assert 0.5 * g.h * np.abs(far.values - stationary_density(op).values).sum() < 1e-8
    ws = build_wells(k.map, default_delta(k.map, 0.05, 3), 0.05)
    assert estimate_n_mix(op, ws.well(1), 1.0) == 0
    n = estimate_n_mix(op, ws.well(1), 0.1)
    assert 1 <= n < 50
    with pytest.raises(Budget):
        estimate_n_mix(op, ws.well(1), 1e-300, max_n=20)


def test_n_mix_is_eps_uniform():
    ns = []
    for e in (0.1, 0.05, 0.02):
        k = kernel(e, b=0.1)
        op = build_perturbed(k, 1024, restriction=(1, two_well_rules(0.1)))
        ws = build_wells(k.map, default_delta(k.map, e, 3), e)
        ns.append(estimate_n_mix(op, ws.well(1), 0.1))
    assert max(ns) - min(ns) <= 2
