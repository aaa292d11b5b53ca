import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gbf.stl import (
    Always,
    And,
    Bound,
    Eventually,
    Halfspace,
    IntervalPred,
    MonitorError,
    Not,
    Or,
    ParseError,
    Until,
    cost_from_certificate,
    negation,
    parse_formula,
    robustness,
    to_nnf,
)
from gbf.signals import TimeGrid, Trajectory

from helpers import oracle, traj_1d


def _pred(dim):
    idx = st.integers(0, dim - 1)
    c = st.floats(-1.0, 1.0)
    return st.one_of(
        st.builds(Bound, idx, st.sampled_from(["<=", ">="]), c),
        st.builds(
            lambda i, a, w, neg: IntervalPred(i, a, a + w, negated=neg),
            idx,
            c,
            st.floats(0.0, 1.5),
            st.booleans(),
        ),
        st.builds(
            Halfspace,
            st.lists(st.floats(-2, 2), min_size=dim, max_size=dim)
            .filter(lambda a: np.linalg.norm(a) > 0.1)
            .map(tuple),
            c,
        ),
    )


intervals = st.tuples(st.integers(0, 4), st.integers(0, 4)).map(lambda t: (float(min(t)), float(max(t))))


def formulas(dim, depth):
    if depth == 0:
        return _pred(dim)
    sub = formulas(dim, depth - 1)
    return st.one_of(
        _pred(dim),
        st.builds(And, sub, sub),
        st.builds(Or, sub, sub),
        st.builds(Always, intervals, sub),
        st.builds(Eventually, intervals, sub),
        st.builds(Until, intervals, sub, sub),
    )


@st.composite
def instances(draw, dim=2):
    phi = draw(formulas(dim, 3))
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(40, 50))
    X = np.random.default_rng(seed).normal(size=(n, dim))
    return phi, X


@given(instances())
def test_robustness_matches_brute_force(inst):
    phi, X = inst
    tr = traj_1d(X)
    cert = robustness(phi, tr)
    v, k, p = oracle(phi, X, 0, 1.0)
    assert abs(cert.robustness - v) <= 1e-12
    assert cert.critical_index == k
    assert cert.critical_predicate == p.label


@given(instances())
def test_certificate_distance_identity(inst):
    phi, X = inst
    nn = np.random.default_rng(0).normal(size=(X.shape[0], 2))
    cert = robustness(phi, traj_1d(X, extra=nn))
    x = X[cert.critical_index]
    assert abs(abs(cert.robustness) - np.linalg.norm(x - cert.critical_point)) <= 1e-12
    # NN block of the target copies the network state at t*
    assert np.array_equal(cert.augmented_target[2:], nn[cert.critical_index])


@given(instances(), st.integers(0, 2**32 - 1))
def test_certificate_upper_bounds_perturbed_robustness(inst, seed):
    phi, X = inst
    tr = traj_1d(X)
    cert = robustness(phi, tr)
    if cert.robustness <= 0:
        return
    Xp = X + 1e-6 * np.random.default_rng(seed).normal(size=X.shape)
    rp = robustness(phi, traj_1d(Xp)).robustness
    assert rp <= np.linalg.norm(Xp[cert.critical_index] - cert.critical_point) + 1e-12


@given(_pred(2), st.integers(0, 2**32 - 1))
def test_negation_duality_for_predicates(p, seed):
    X = np.random.default_rng(seed).normal(size=(5, 2))
    tr = traj_1d(X)
    assert robustness(negation(p), tr).robustness == -robustness(p, tr).robustness
    # also through temporal operators
    phi = Always((0.0, 2.0), p)
    assert robustness(negation(phi), tr).robustness == -robustness(phi, tr).robustness


def test_constant_always_bound():
    cert = robustness(parse_formula("always[0,1] (x1 < 2)", plant_dim=1), traj_1d([1.0] * 11, 0.1))
    assert cert.robustness == 1.0
    assert cert.critical_time == 0.0
    assert cert.critical_point[0] == 2.0


def test_constant_eventually_violation():
    cert = robustness(parse_formula("eventually[0,1] (x1 > 0)", plant_dim=1), traj_1d([-1.0] * 11, 0.1))
    assert cert.robustness == -1.0
    assert cert.critical_point[0] == 0.0


def test_interval_midpoint_ties_to_lower_bound():
    grid = TimeGrid(35.0, 0.01)
    tr = Trajectory(grid, np.column_stack([np.full(grid.size, 87.25), np.zeros(grid.size)]), 2)
    cert = robustness(parse_formula("always[30,35] (p in [87, 87.5])", names={"p": 0}), tr)
    assert cert.robustness == 0.25
    assert cert.critical_point[0] == 87.0
    assert cert.critical_time == 30.0
    assert cert.critical_point[1] == 0.0


def test_cost_examples():
    tr = traj_1d([87.25] * 6, 1.0)
    cert = robustness(parse_formula("always[0,5] (p in [87, 87.5])", names={"p": 0}), tr)
    assert cost_from_certificate(tr, cert) == pytest.approx(0.03125, abs=1e-15)
    on_edge = traj_1d([87.0] * 6, 1.0)
    assert cost_from_certificate(on_edge, robustness(parse_formula("always[0,5] (x1 in [87, 87.5])"), on_edge)) == 0
    nearby = traj_1d([87.1] * 6, 1.0)
    assert cost_from_certificate(nearby, cert) == pytest.approx(0.005, abs=1e-12)


def test_cost_dimension_mismatch():
    tr = traj_1d([1.0, 1.0])
    cert = robustness(parse_formula("x1 <= 2"), tr)
    other = traj_1d(np.ones((2, 2)))
    with pytest.raises(ValueError):
        cost_from_certificate(other, cert)


def test_parse_examples():
    assert parse_formula("always[30,35] (p in [87, 87.5])", names={"p": 0}) == Always(
        (30.0, 35.0), IntervalPred(0, 87.0, 87.5, "p")
    )
    assert parse_formula("not (eventually[0,1] (x1 > 0))") == Always((0.0, 1.0), Bound(0, "<=", 0.0, "x1"))
    assert parse_formula("always[0,10] ((x1 < 0) -> eventually[0,7] (x1 < 0.1))") == Always(
        (0.0, 10.0), Or(Bound(0, ">=", 0.0, "x1"), Eventually((0.0, 7.0), Bound(0, "<=", 0.1, "x1")))
    )


def test_parse_precedence_and_until():
    phi = parse_formula("x1 <= 1 and x2 >= 0 or x1 >= 3")
    assert isinstance(phi, Or) and isinstance(phi.left, And)
    u = parse_formula("x1 <= 1 until[0,2] x2 >= 3")
    assert u == Until((0.0, 2.0), Bound(0, "<=", 1.0, "x1"), Bound(1, ">=", 3.0, "x2"))


@pytest.mark.parametrize(
    "text",
    ["always[0,1] (x1 < )", "always[2,1] (x1 < 0)", "x1 in [2, 1]", "eventually (x1 > 0)", "x1 < 0 )"],
)
def test_parse_errors_carry_position(text):
    with pytest.raises(ParseError) as e:
        parse_formula(text)
    assert e.value.line == 1 and e.value.col >= 1


def test_parse_unknown_coordinate():
    with pytest.raises(ParseError):
        parse_formula("q > 0", names={"p": 0})
    with pytest.raises(ParseError):
        parse_formula("x3 > 0", plant_dim=2)


def test_nnf_has_no_negations():
    phi = to_nnf(Not(And(Bound(0, "<=", 1.0), Not(Eventually((0.0, 1.0), Bound(0, ">=", 0.0))))))
    assert phi == Or(Bound(0, ">=", 1.0), Eventually((0.0, 1.0), Bound(0, ">=", 0.0)))


def test_negated_until_rejected():
    with pytest.raises(MonitorError):
        to_nnf(Not(Until((0.0, 1.0), Bound(0, "<=", 1.0), Bound(0, ">=", 0.0))))


def test_horizon_exceeds_trajectory():
    with pytest.raises(MonitorError):
        robustness(parse_formula("always[0,5] (x1 < 1)"), traj_1d([0.0] * 4))


def test_predicate_on_nn_state_rejected():
    tr = traj_1d([0.0, 0.0], extra=[0.0, 0.0])
    with pytest.raises(MonitorError):
        robustness(Bound(1, "<=", 1.0), tr)


def test_halfspace_distance():
    h = Halfspace((3.0, 4.0), 5.0)
    tr = traj_1d(np.zeros((2, 2)), 1.0)
    cert = robustness(h, tr)
    assert cert.robustness == pytest.approx(1.0)
    assert np.allclose(cert.critical_point, [0.6, 0.8])
