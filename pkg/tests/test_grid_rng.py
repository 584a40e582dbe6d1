import numpy as np
import pytest

from metalab.errors import GridMismatch
from metalab.grid import Grid, GridFunction, embed, restrict
from metalab.intervals import IntervalSet
from metalab.rng import parallel_map, stream


def test_integral_is_exact_for_step_functions():
    g = Grid(0, 1, 4)
    f = GridFunction(g, np.array([1.0, 2.0, 3.0, 4.0]))
    assert f.integral(IntervalSet.of((0.125, 0.625))) == pytest.approx(0.125 * 1 + 0.25 * 2 + 0.125 * 3)


def test_embed_restrict_roundtrip():
    big = Grid(0, 1, 8)
    small = Grid(0.5, 1, 4)
    f = GridFunction(small, np.arange(4.0))
    assert np.array_equal(restrict(embed(f, big), small).values, f.values)
    with pytest.raises(GridMismatch):
        embed(f, Grid(0, 1, 16))


def test_streams_are_independent_of_workers():
    def draw(k):
        return stream(42, k, "escape").random(3)

    a = parallel_map(draw, range(20), 1)
    b = parallel_map(draw, range(20), 4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(stream(42, 0, "escape").random(3), stream(42, 0, "rates").random(3))
