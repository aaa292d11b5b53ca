"""Independent oracles shared by the unit and acceptance tests."""

import numpy as np

from gbf.adjoint import directional_derivative, solve_costate
from gbf.benchmarks import decay_model, lti_model, smooth_random_model
from gbf.linearize import build_schedule, linearize_at
from gbf.model import simulate
from gbf.signals import BoxSet, PiecewiseLinearSignal, TimeGrid, Trajectory
from gbf.stl import Always, And, Bound, Eventually, Halfspace, IntervalPred, Or, Until


def smooth_signal(rng, grid, dim, amp=0.5):
    """Sum of a few random sinusoids per channel, sampled on the grid nodes."""
    t = grid.nodes[:, None]
    out = np.zeros((grid.size, dim))
    for _ in range(3):
        f = rng.uniform(0.5, 3.0, dim)
        ph = rng.uniform(0, 2 * np.pi, dim)
        out += np.sin(2 * np.pi * f * t / grid.T + ph)
    return amp * out / 3


def gradient_fidelity(seed):
    """Relative error between the adjoint directional derivative of J and central differences.

    J = 1/2 |x(t*) - r*|^2 with t* and r* frozen at the nominal trajectory.
    """
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 5))
    m = int(rng.integers(1, 3))
    model = smooth_random_model(rng, n, m, horizon=1.0, step=1e-3)
    grid = model.grid
    x0 = rng.uniform(-0.5, 0.5, n)
    w = PiecewiseLinearSignal(grid, smooth_signal(rng, grid, m))
    traj = simulate(model, x0, w).trajectory
    k = int(rng.integers(grid.size // 2, grid.size))
    r = traj.states[k] + 0.5 * rng.normal(size=n)

    schedule = build_schedule(model, traj, w, grid.nodes[k])
    path = solve_costate(schedule, traj.states[k] - r, grid.step)
    dx0 = rng.normal(size=n)
    dw = smooth_signal(rng, grid, m, amp=1.0)
    dw[k + 1 :] = 0.0
    adj = directional_derivative(path, schedule, dx0, dw[: k + 1])

    def J(eps):
        tr = simulate(model, x0 + eps * dx0, PiecewiseLinearSignal(grid, w.values + eps * dw)).trajectory
        e = tr.states[k] - r
        return 0.5 * e @ e

    eps = 1e-5
    fd = (J(eps) - J(-eps)) / (2 * eps)
    return abs(adj - fd) / abs(fd), adj, fd


def scalar_costate_error(a, t_star=1.0, lam_T=2.0, step=1e-3):
    """Max deviation of the backward solve from lam(t) = lam(t*) exp(a (t* - t))."""
    model = lti_model([[a]], [[0.0]], BoxSet([-1.0], [1.0]), BoxSet([-1.0], [1.0]), t_star, step)
    w = PiecewiseLinearSignal.constant(model.grid, 0.0)
    traj = simulate(model, [0.0], w).trajectory
    schedule = build_schedule(model, traj, w, t_star)
    path = solve_costate(schedule, [lam_T], step)
    exact = lam_T * np.exp(a * (t_star - path.times))
    return float(np.max(np.abs(path.lambdas[:, 0] - exact)))


def rk4_error_ratio():
    def err(step):
        m = decay_model(step=step)
        tr = simulate(m, [1.0], m.nominal_input()).trajectory
        return abs(tr.states[-1, 0] - np.exp(-1.0))

    return err(0.1) / err(0.05)


def fd_error_ratios(seed=0, eps=(1e-2, 5e-3, 2.5e-3)):
    """Ratios of central-difference Jacobian errors (against the analytic Jacobian) as eps halves."""
    rng = np.random.default_rng(seed)
    model = smooth_random_model(rng, 3, 2)
    x = rng.uniform(-1, 1, 3)
    w = rng.uniform(-1, 1, 2)
    A_ex, B_ex = model.jacobian(x, w)
    errs = []
    for e in eps:
        A, B = linearize_at(model, x, w, eps0=e)
        errs.append(max(np.abs(A - A_ex).max(), np.abs(B - B_ex).max()))
    return [errs[i] / errs[i + 1] for i in range(len(errs) - 1)]


def traj_1d(values, step=1.0, extra=None):
    values = np.asarray(values, dtype=float)
    grid = TimeGrid(step * (len(values) - 1), step)
    states = values[:, None] if values.ndim == 1 else values
    plant_dim = states.shape[1]
    if extra is not None:
        states = np.column_stack([states, extra])
    return Trajectory(grid, states, plant_dim)


# --- brute-force oracle -----------------------------------------------------
# Evaluates the recursion node by node with plain Python loops. Predicate values
# are written out from their definitions rather than calling the library.


def pred_value(p, x):
    if isinstance(p, Bound):
        return p.c - x[p.index] if p.op == "<=" else x[p.index] - p.c
    if isinstance(p, IntervalPred):
        v = x[p.index]
        r = min(v - p.lo, p.hi - v)
        return -r if p.negated else r
    if isinstance(p, Halfspace):
        a = np.zeros(len(x))
        a[: len(p.a)] = p.a
        return (p.b - float(a @ x)) / float(np.sqrt(a @ a))
    raise TypeError(p)


def independent_leaf(p, X, k):
    return pred_value(p, X[k])


def oracle(phi, X, k, step, leaf=independent_leaf):
    """(value, critical node, critical predicate) of ``phi`` at node ``k``.

    ``leaf(p, X, k)`` gives predicate values; by default they are computed here
    from the definitions, independently of the library.
    """
    if isinstance(phi, (Bound, IntervalPred, Halfspace)):
        return leaf(phi, X, k), k, phi
    if isinstance(phi, And):
        left, right = oracle(phi.left, X, k, step, leaf), oracle(phi.right, X, k, step, leaf)
        return left if left[0] <= right[0] else right
    if isinstance(phi, Or):
        left, right = oracle(phi.left, X, k, step, leaf), oracle(phi.right, X, k, step, leaf)
        return left if left[0] >= right[0] else right
    if isinstance(phi, (Always, Eventually)):
        lo, hi = (int(round(v / step)) for v in phi.interval)
        best = None
        for j in range(lo, hi + 1):
            cand = oracle(phi.child, X, k + j, step, leaf)
            better = cand[0] < best[0] if isinstance(phi, Always) and best else None
            if isinstance(phi, Eventually) and best:
                better = cand[0] > best[0]
            if best is None or better:
                best = cand
        return best
    if isinstance(phi, Until):
        lo, hi = (int(round(v / step)) for v in phi.interval)
        best = None
        for j in range(lo, hi + 1):
            guard = None
            for i in range(j + 1):
                c = oracle(phi.left, X, k + i, step, leaf)
                if guard is None or c[0] < guard[0]:
                    guard = c
            goal = oracle(phi.right, X, k + j, step, leaf)
            cand = goal if goal[0] <= guard[0] else guard
            if best is None or cand[0] > best[0]:
                best = cand
        return best
    raise TypeError(phi)


def random_formula(rng, dim, depth):
    """Random formula over bounds, intervals and halfspaces with integer windows in [0, 4]."""
    kind = int(rng.integers(0, 6)) if depth > 0 else 0
    if kind == 0:
        return random_predicate(rng, dim)
    lo, hi = sorted(int(v) for v in rng.integers(0, 5, 2))
    iv = (float(lo), float(hi))
    if kind == 1:
        return And(random_formula(rng, dim, depth - 1), random_formula(rng, dim, depth - 1))
    if kind == 2:
        return Or(random_formula(rng, dim, depth - 1), random_formula(rng, dim, depth - 1))
    if kind == 3:
        return Always(iv, random_formula(rng, dim, depth - 1))
    if kind == 4:
        return Eventually(iv, random_formula(rng, dim, depth - 1))
    return Until(iv, random_formula(rng, dim, depth - 1), random_formula(rng, dim, depth - 1))


def random_predicate(rng, dim):
    i = int(rng.integers(0, dim))
    c = float(rng.uniform(-1, 1))
    kind = int(rng.integers(0, 3))
    if kind == 0:
        return Bound(i, "<=" if rng.random() < 0.5 else ">=", c)
    if kind == 1:
        return IntervalPred(i, c, c + float(rng.uniform(0, 1.5)), negated=bool(rng.random() < 0.5))
    a = rng.uniform(-2, 2, dim)
    while np.linalg.norm(a) <= 0.1:
        a = rng.uniform(-2, 2, dim)
    return Halfspace(tuple(float(v) for v in a), c)
