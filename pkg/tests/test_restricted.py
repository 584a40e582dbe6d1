import numpy as np
import pytest

from metalab.maps import eval_map, three_well, two_well
from metalab.noise import TransitionKernel, sample_noise, three_well_noise, two_well_noise
from metalab.restricted import (RestrictedFamily, three_well_rules, two_well_fold_interval,
                                two_well_rules)

B, EPS, Q = 0.05, 0.05, 3


@pytest.fixture(scope="module")
def fam():
    return RestrictedFamily(TransitionKernel(two_well(B), two_well_noise(EPS, Q)), 1, two_well_rules(B))


def test_fold_interval_matches_closed_form(fam):
    u = 0.999  # sigma close to +eps^q: the peaks poke into I_2
    sigma = sample_noise(fam.noise, 0.1, u)
    assert sigma > 0
    exc = fam.excursions(u)
    assert len(exc) == 2
    a, b = two_well_fold_interval(B, sigma)
    assert (exc[0].lo, exc[0].hi) == pytest.approx((a, b), abs=1e-12)
    assert b - a == pytest.approx(sigma / (2 - 4 * B))
    assert exc[0].lo + exc[0].hi == pytest.approx(0.25)


def test_restricted_map_stays_in_component(fam):
    xs = np.linspace(0, 0.5, 2001)
    for u in (0.0, 0.5, 0.99, 1.0):
        y, _ = fam.step(xs, u)
        assert y.min() >= -1e-12 and y.max() <= 0.5 + 1e-12


def test_coupling_outside_excursions(fam):
    rng = np.random.default_rng(0)
    xs = rng.uniform(0, 0.5, 400)
    us = rng.uniform(0, 1, 400)
    y, folded = fam.step(xs, us)
    full = eval_map(fam.kernel.map, xs) + sample_noise(fam.noise, xs, us)
    assert np.allclose(y[~folded], full[~folded], atol=1e-14)
    assert np.all(full[folded] > 0.5)


def test_no_excursion_for_negative_noise(fam):
    assert fam.excursions(0.2) == []
    m = fam.restricted_map(0.2)
    assert m.kappa == 1


def test_three_well_middle_component_folds_both_ways():
    k = TransitionKernel(three_well(), three_well_noise(0.03, 3))
    fam = RestrictedFamily(k, 2, three_well_rules())
    dirs = {e.direction for u in (0.0, 1.0) for e in fam.excursions(u)}
    assert dirs == {"up", "down"}
