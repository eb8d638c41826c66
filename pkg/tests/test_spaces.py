import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tvmdp_nav.spaces import (Box, Grid, InvalidStateError, TimeAxis, action_lattice, cell_center,
                              discretize_action, discretize_state, obstacle_mask, zero_action_index)

G20 = Grid((0.0, 0.0), (20.0, 20.0), 1.0)


@pytest.mark.parametrize("x, cell", [
    ((0.5, 0.5), (0, 0)),
    ((1.0, 0.0), (1, 0)),      # boundary goes to the larger index
    ((-3.0, 2.5), (0, 2)),     # clamped
    ((25.0, 19.99), (19, 19)),
    ((20.0, 20.0), (19, 19)),
])
def test_discretize_state(x, cell):
    assert discretize_state(x, G20) == cell


@pytest.mark.parametrize("cell, h, center", [
    ((0, 0), 1.0, (0.5, 0.5)),
    ((19, 19), 1.0, (19.5, 19.5)),
    ((2, 3), 0.5, (1.25, 1.75)),
])
def test_cell_center(cell, h, center):
    g = Grid((0.0, 0.0), (20.0, 20.0), h)
    np.testing.assert_allclose(cell_center(cell, g), center)


def test_cell_center_out_of_bounds():
    with pytest.raises(InvalidStateError):
        cell_center((20, 0), G20)
    with pytest.raises(InvalidStateError):
        cell_center((-1, 0), G20)


def test_grid_rejects_non_multiple_extent():
    with pytest.raises(ValueError):
        Grid((0.0, 0.0), (10.0, 10.5), 1.0)


def test_action_lattice_nine_actions():
    acts = np.array(action_lattice(G20))
    assert acts.shape == (9, 2)
    assert set(map(tuple, acts)) == {(a, b) for a in (-2.5, 0.0, 2.5) for b in (-2.5, 0.0, 2.5)}
    assert np.allclose(acts[zero_action_index(G20)], 0.0)


def test_action_lattice_single_level():
    g = Grid((0.0, 0.0), (4.0, 4.0), 1.0, action_levels_per_dim=1)
    assert np.array_equal(np.array(action_lattice(g)), [[0.0, 0.0]])


@settings(max_examples=60, deadline=None)
@given(h=st.sampled_from([0.25, 0.5, 1.0, 2.0]), n=st.integers(1, 30),
       ox=st.floats(-50, 50), oy=st.floats(-50, 50), data=st.data())
def test_center_roundtrip(h, n, ox, oy, data):
    g = Grid((ox, oy), (n * h, n * h), h)
    i = data.draw(st.integers(0, n - 1))
    j = data.draw(st.integers(0, n - 1))
    assert discretize_state(cell_center((i, j), g), g) == (i, j)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-100, 100), y=st.floats(-100, 100))
def test_discretize_in_bounds(x, y):
    i, j = discretize_state((x, y), G20)
    assert 0 <= i < 20 and 0 <= j < 20


@settings(max_examples=60, deadline=None)
@given(a=st.integers(0, 8))
def test_action_roundtrip(a):
    assert discretize_action(G20.actions[a], G20) == a


def test_time_axis():
    ax = TimeAxis(1.0, 0.5, 4)
    np.testing.assert_allclose(ax.times, [1.0, 1.5, 2.0, 2.5, 3.0])
    with pytest.raises(ValueError):
        TimeAxis(0.0, 0.0, 4)


def test_obstacle_mask_uses_centers():
    g = Grid((0.0, 0.0), (4.0, 4.0), 1.0)
    mask = obstacle_mask(g, [Box(1.0, 1.0, 2.0, 3.0)])
    assert mask.sum() == 2
    assert mask[g.flat((1, 1))] and mask[g.flat((1, 2))]


def test_box_nearest_point():
    b = Box(0.0, 0.0, 2.0, 1.0)
    np.testing.assert_allclose(b.nearest_point((3.0, 5.0)), (2.0, 1.0))
    assert b.contains((1.0, 0.5)) and not b.contains((2.5, 0.5))
