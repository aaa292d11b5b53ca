import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gbf.signals import (
    BoxSet,
    PiecewiseLinearSignal,
    TimeGrid,
    Trajectory,
    eval_signal,
    in_box,
    saturate_signal,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_grid_nodes_and_size():
    g = TimeGrid(1.0, 0.25)
    assert g.size == 5
    assert np.array_equal(g.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert g.index_of(0.75) == 3


def test_grid_rejects_non_dividing_step():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.3)
    with pytest.raises(ValueError):
        TimeGrid(-1.0, 0.1)


def test_grid_index_of_off_node():
    with pytest.raises(ValueError):
        TimeGrid(1.0, 0.25).index_of(0.3)


def test_grid_window_offsets():
    g = TimeGrid(35.0, 0.01)
    assert g.window(30.0, 35.0) == (3000, 3500)
    assert g.window(0.0, 0.105) == (0, 10)


def test_in_box_saturates_componentwise():
    box = BoxSet([0.0, -1.0], [1.0, 1.0])
    assert np.array_equal(in_box([2.0, -3.0], box), [1.0, -1.0])
    assert np.array_equal(in_box([0.5, 0.5], box), [0.5, 0.5])


def test_in_box_dimension_mismatch():
    with pytest.raises(ValueError):
        in_box([1.0, 2.0, 3.0], BoxSet([0.0], [1.0]))


@given(arrays(float, (7, 2), elements=finite))
def test_in_box_lands_in_box_and_is_idempotent(v):
    box = BoxSet([-1.0, 3.99], [2.0, 4.01])
    out = in_box(v, box)
    assert box.contains(out)
    assert np.array_equal(in_box(out, box), out)


@given(arrays(float, (5, 2), elements=st.floats(-1, 1)))
def test_in_box_is_identity_inside(v):
    box = BoxSet([-1.0, -1.0], [1.0, 1.0])
    assert np.array_equal(in_box(v, box), v)


def test_box_rejects_inverted_bounds():
    with pytest.raises(ValueError):
        BoxSet([1.0], [0.0])


def test_signal_exact_at_nodes_and_linear_between():
    g = TimeGrid(1.0, 0.5)
    s = PiecewiseLinearSignal(g, [0.0, 1.0, 3.0])
    assert eval_signal(s, 0.5)[0] == 1.0
    assert eval_signal(s, 0.25)[0] == pytest.approx(0.5)
    assert eval_signal(s, 0.75)[0] == pytest.approx(2.0)
    assert s(1.0)[0] == 3.0


def test_signal_outside_domain():
    s = PiecewiseLinearSignal.constant(TimeGrid(1.0, 0.5), 0.0)
    with pytest.raises(ValueError):
        eval_signal(s, 1.5)


def test_signal_shape_checked():
    with pytest.raises(ValueError):
        PiecewiseLinearSignal(TimeGrid(1.0, 0.5), [0.0, 1.0])


@given(arrays(float, (2, 6), elements=st.floats(3.99, 4.01)))
def test_control_points_lift_stays_in_box(points):
    g = TimeGrid(35.0, 0.01)
    s = PiecewiseLinearSignal.from_control_points(g, points)
    assert s.values.shape == (g.size, 2)
    assert BoxSet([3.99, 3.99], [4.01, 4.01]).contains(s.values)
    assert np.array_equal(s.values[0], points[:, 0])
    assert np.array_equal(s.values[-1], points[:, -1])


def test_saturate_signal():
    g = TimeGrid(1.0, 0.5)
    s = saturate_signal(PiecewiseLinearSignal(g, [-2.0, 0.0, 2.0]), BoxSet([-1.0], [1.0]))
    assert np.array_equal(s.values[:, 0], [-1.0, 0.0, 1.0])


def test_trajectory_blocks():
    g = TimeGrid(1.0, 0.5)
    tr = Trajectory(g, np.arange(9.0).reshape(3, 3), plant_dim=2)
    assert tr.plant.shape == (3, 2)
    assert tr.nn.shape == (3, 1)
    with pytest.raises(ValueError):
        Trajectory(g, np.zeros((2, 3)), plant_dim=2)
