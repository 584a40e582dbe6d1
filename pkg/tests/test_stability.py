import numpy as np
import pytest

from metalab.grid import Grid, GridFunction
from metalab.maps import two_well
from metalab.noise import TransitionKernel, two_well_noise
from metalab.resolvent import GeneratorMatrix, ReducedGenerator
from metalab.restricted import two_well_rules
from metalab.stability import chen_stein_report, dtv_grid, limit_measure, operator_closeness_d_eps
from metalab.ulam import build_deterministic, build_perturbed, bv_norm, stationary_density


def test_limit_measure_symmetric():
    g = Grid(0, 1, 8)
    p1 = GridFunction(Grid(0, 0.5, 4), np.full(4, 2.0))
    p2 = GridFunction(Grid(0.5, 1, 4), np.full(4, 2.0))
    mu = limit_measure(ReducedGenerator([[0, 0.3], [0.3, 0]]), [p1, p2], g)
    assert mu.values == pytest.approx(np.ones(8))
    assert mu.total == pytest.approx(1.0, abs=1e-12)


def test_limit_measure_three_state_null_space():
    a, b, c = 0.4, 0.1, 0.3
    red = ReducedGenerator([[0, a, 0], [b, 0, c], [0, a, 0]])
    # dense oracle: null vector of L^T
    w, v = np.linalg.eig(red.matrix.T)
    pi = np.real(v[:, np.argmin(np.abs(w))])
    pi /= pi.sum()
    g = Grid(0, 1, 6)
    parts = [GridFunction(Grid(k / 3, (k + 1) / 3, 2), np.full(2, 3.0)) for k in range(3)]
    mu = limit_measure(red, parts, g)
    assert mu.values[::2] == pytest.approx(3 * pi)


def test_dtv_examples_and_metric():
    g = Grid(0, 1, 4)
    f = GridFunction(g, np.array([2.0, 2.0, 0, 0]))
    h = GridFunction(g, np.array([0, 0, 2.0, 2.0]))
    assert dtv_grid(f, f) == 0
    assert dtv_grid(f, h) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    g = Grid(0, 1, 32)
    for _ in range(10):
        x, y, z = (GridFunction(g, v / v.mean()) for v in rng.uniform(size=(3, 32)))
        assert dtv_grid(x, y) == pytest.approx(dtv_grid(y, x))
        assert dtv_grid(x, z) <= dtv_grid(x, y) + dtv_grid(y, z) + 1e-15


def _pair(eps, n=512, b=0.1):
    k = TransitionKernel(two_well(b), two_well_noise(eps, 3))
    det = build_deterministic(k.map, 1, n)
    rest = build_perturbed(k, n, restriction=(1, two_well_rules(b)))
    return det, rest, stationary_density(rest)


def test_d_eps_vanishes_without_noise():
    det, rest, p = _pair(0.0)
    assert operator_closeness_d_eps(det, rest, p) < 1e-12


def test_d_eps_linear_and_telescoping():
    ratios = []
    for eps in (0.1, 0.05, 0.02):
        det, rest, p = _pair(eps, 1024)
        d = operator_closeness_d_eps(det, rest, p)
        ratios.append(d / eps)
        A, B = det.matrix.T.tocsr(), rest.matrix.T.tocsr()
        for n in (1, 2, 4):
            x, y = p.values.copy(), p.values.copy()
            for _ in range(n):
                x, y = A @ x, B @ y
            assert p.grid.h * np.abs(x - y).sum() <= n * d * bv_norm(p) * (1 + 1e-9)
    assert max(ratios) <= 2 * ratios[0]


def test_generator_identity_on_random_sets():
    k = TransitionKernel(two_well(0.1), two_well_noise(0.05, 3))
    op = build_perturbed(k, 256)
    p = stationary_density(op)
    w = p.values * p.grid.h
    L = op.matrix.toarray() - np.eye(256)
    rng = np.random.default_rng(5)
    for _ in range(10):
        A = rng.random(256) < 0.2
        rhs = A.astype(float) - w[A].sum()
        F = np.linalg.lstsq(L, rhs, rcond=None)[0]
        assert np.abs(L @ F - rhs).max() < 1e-8
        assert abs(w @ (L @ F)) < 1e-10


def test_report_symmetric_two_well():
    rep = chen_stein_report("two_well", [0.1, 0.05, 0.02], n_cells=1024)
    assert all(0 < d < 1 for d in rep.dtv)
    assert rep.dtv[0] > rep.dtv[1] > rep.dtv[2]
    assert max(rep.mass_gap) <= 2e-3
    assert all(r >= d for r, d in zip(rep.bound_rhs, rep.dtv))
    with pytest.raises(ValueError):
        chen_stein_report("two_well", [0.02, 0.05])
