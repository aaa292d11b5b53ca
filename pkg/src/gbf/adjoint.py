"""Co-state (adjoint) descent directions and the gradient local search.

For the cost ``J = 1/2 |x(t*) - r*|^2`` the co-state solves
``lam' = -A(t).T lam`` backward from ``lam(t*) = x(t*) - r*``; then
``dx(0) = -lam(0)`` and ``dw(t) = -B(t).T lam(t)`` decrease ``J`` to first
order. The local search alternates simulation/monitoring with steps along
these directions, saturated into the initial-condition and input boxes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from gbf import _kernels as K
from gbf.linearize import LinearizationSchedule, build_schedule, interp_many
from gbf.model import ClosedLoopModel, simulate
from gbf.networks import RnnSpec
from gbf.result import FalsificationResult
from gbf.signals import PiecewiseLinearSignal, in_box
from gbf.stl import Formula, parse_formula, robustness


@dataclass(frozen=True)
class CostatePath:
    times: np.ndarray  # (K,) uniform nodes of [0, t*]
    lambdas: np.ndarray  # (K, d)

    @property
    def initial(self) -> np.ndarray:
        return self.lambdas[0]

    @property
    def terminal(self) -> np.ndarray:
        return self.lambdas[-1]


@dataclass(frozen=True)
class DescentDirection:
    dx0: np.ndarray  # (d,) full state; only the plant block is applied
    times: np.ndarray  # (K,)
    dw: np.ndarray  # (K, m) node values on [0, t*]

    def dw_on_grid(self, n_nodes: int) -> np.ndarray:
        """Input direction on a full grid, zero past ``t*``."""
        out = np.zeros((n_nodes, self.dw.shape[1]))
        k = min(len(self.times), n_nodes)
        out[:k] = self.dw[:k]
        return out


@dataclass
class StepController:
    h0: float
    c: float = 2.0
    h: float = field(init=False)

    def __post_init__(self):
        if not self.h0 > 0:
            raise ValueError("initial step must be positive")
        if not self.c > 1:
            raise ValueError("step factor must exceed 1")
        self.h = self.h0

    def grow(self) -> float:
        self.h *= self.c
        return self.h

    def shrink(self) -> float:
        self.h /= self.c
        return self.h


def _costate_nodes(schedule: LinearizationSchedule, step: float | None) -> np.ndarray:
    t0, t1 = schedule.span
    if t1 == t0:
        return np.array([t0])
    n = 1000 if step is None else int(round((t1 - t0) / step))
    return np.linspace(t0, t1, max(n, 1) + 1)


def solve_costate(schedule: LinearizationSchedule, terminal, step: float | None = None) -> CostatePath:
    """Backward RK4 for ``lam' = -A(t).T lam`` with ``lam(t*) = terminal``.

    Nodes are uniform with spacing ``step`` over the schedule span (1000
    intervals when ``step`` is not given).
    """
    terminal = np.asarray(terminal, dtype=float)
    d = schedule.A.shape[1]
    if terminal.shape != (d,):
        raise ValueError(f"terminal co-state has {terminal.shape} entries, state dimension is {d}")
    nodes = _costate_nodes(schedule, step)
    A_nodes, _ = interp_many(schedule, nodes)
    if len(nodes) > 1:
        A_mid, _ = interp_many(schedule, 0.5 * (nodes[:-1] + nodes[1:]))
        h = nodes[1] - nodes[0]
    else:
        A_mid, h = np.zeros((0, d, d)), 0.0
    lam = K.costate_rk4(np.ascontiguousarray(A_nodes), np.ascontiguousarray(A_mid), terminal.copy(), h)
    bad = ~np.all(np.isfinite(lam), axis=1)
    if bad.any():
        k = int(np.nonzero(bad)[0][-1])
        raise FloatingPointError(f"co-state diverged at t={nodes[k]!r}")
    return CostatePath(nodes, lam)


def descent_directions(path: CostatePath, schedule: LinearizationSchedule) -> DescentDirection:
    _, B = interp_many(schedule, path.times)
    if B.shape[1] != path.lambdas.shape[1]:
        raise ValueError("co-state and schedule dimensions differ")
    dw = -np.einsum("kdm,kd->km", B, path.lambdas)
    return DescentDirection(-path.initial.copy(), path.times, dw)


def _trapezoid(values: np.ndarray, times: np.ndarray) -> float:
    if len(times) < 2:
        return 0.0
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(times)))


def predicted_decrease(direction: DescentDirection, path: CostatePath, plant_dim: int | None = None) -> float:
    """``-dJ`` along the descent directions: ``|lam(0)|^2 + int |B.T lam|^2 dt``.

    With ``plant_dim`` set, only the plant block of ``lam(0)`` counts, since
    the network states always start at zero.
    """
    lam0 = path.initial if plant_dim is None else path.initial[:plant_dim]
    if len(direction.times) != len(path.times):
        raise ValueError("direction and co-state path live on different grids")
    return float(lam0 @ lam0) + _trapezoid(np.sum(direction.dw**2, axis=1), path.times)


def directional_derivative(path: CostatePath, schedule: LinearizationSchedule, dx0, dw) -> float:
    """First-order change of ``J`` for perturbations ``dx0`` and node values ``dw`` on ``path.times``."""
    _, B = interp_many(schedule, path.times)
    g = np.einsum("kdm,kd->km", B, path.lambdas)
    dw = np.asarray(dw, dtype=float).reshape(len(path.times), -1)
    return float(path.initial @ np.asarray(dx0, dtype=float)) + _trapezoid(np.sum(g * dw, axis=1), path.times)


# --- local search -----------------------------------------------------------


@dataclass(frozen=True)
class LocalSearchOptions:
    """``h0=None`` picks the first step so the largest parameter move is 10% of the box width."""

    h0: float | None = None
    c: float = 2.0
    max_iters: int = 50
    tol_d: float = 1e-6
    tol_x: float = 1e-8
    num_lin_samples: int | None = None
    lin_method: str = "fd"
    eps0: float = 1e-6
    max_sims: int | None = None
    time_limit: float | None = None


def _as_formula(model: ClosedLoopModel, phi) -> Formula:
    if isinstance(phi, str):
        return parse_formula(phi, names=model.names, plant_dim=model.plant_dim)
    return phi


def _width_scale(model: ClosedLoopModel) -> float:
    widths = np.concatenate([model.input_box.width, model.init_box.width])
    return float(widths.max()) if widths.size else 1.0


def local_search(
    model: ClosedLoopModel,
    phi,
    x0_init,
    w_init: PiecewiseLinearSignal,
    opts: LocalSearchOptions | None = None,
) -> FalsificationResult:
    """Adjoint-gradient search for a falsifying initial condition and input.

    After an unsuccessful step the step size is divided by ``c`` and the
    stored directions are re-applied from the best point found so far, so
    the best robustness never increases.
    """
    opts = opts or LocalSearchOptions()
    if isinstance(model.nn, RnnSpec) and model.nn.discrete:
        raise ValueError("adjoint descent requires continuous-time dynamics; discrete-time RNNs are not supported")
    phi = _as_formula(model, phi)
    grid = w_init.grid
    X0, U = model.init_box, model.input_box
    x = np.atleast_1d(np.asarray(x0_init, dtype=float))
    if not X0.contains(x):
        raise ValueError("initial condition outside the initial-condition box")
    if not U.contains(w_init.values):
        raise ValueError("initial input leaves the input box")
    w = w_init.values.copy()

    start = time.perf_counter()
    d_best = np.inf
    best_x, best_w = x.copy(), w.copy()
    steps = StepController(opts.h0, opts.c) if opts.h0 is not None else None
    dir_x = dir_w = None
    sims = lin_calls = iters = 0
    history: list[float] = []
    reason = "max_iters"
    n = model.plant_dim

    while True:
        if opts.max_sims is not None and sims >= opts.max_sims:
            reason = "max_sims"
            break
        if opts.time_limit is not None and time.perf_counter() - start >= opts.time_limit:
            reason = "time_limit"
            break
        iters += 1
        w_sig = PiecewiseLinearSignal(grid, w)
        traj = simulate(model, x, w_sig, grid).trajectory
        sims += 1
        cert = robustness(phi, traj)
        d = cert.robustness
        history.append(d)

        if d < d_best:
            gain = d_best - d
            d_prev = d_best
            d_best, best_x, best_w = d, x.copy(), w.copy()
            if d < 0:
                reason = "falsified"
                break
            if np.isfinite(d_prev) and gain < opts.tol_d:
                reason = "tol_d"
                break
            if iters >= opts.max_iters:
                break
            schedule = build_schedule(
                model, traj, w_sig, cert.critical_time, opts.num_lin_samples, opts.eps0, opts.lin_method
            )
            lin_calls += schedule.rhs_calls
            terminal = traj.states[cert.critical_index] - cert.augmented_target
            path = solve_costate(schedule, terminal, grid.step)
            direction = descent_directions(path, schedule)
            dir_x = direction.dx0[:n]
            dir_w = direction.dw_on_grid(grid.size)
            if steps is None:
                # first step moves the parameters by at most 10% of the box width
                biggest = max(np.max(np.abs(dir_x), initial=0.0), np.max(np.abs(dir_w), initial=0.0))
                if biggest == 0.0:
                    reason = "zero_gradient"
                    break
                steps = StepController(0.1 * _width_scale(model) / biggest, opts.c)
            else:
                steps.grow()
        else:
            if iters >= opts.max_iters:
                break
            steps.shrink()

        new_x = in_box(best_x + steps.h * dir_x, X0)
        new_w = in_box(best_w + steps.h * dir_w, U)
        change = max(np.max(np.abs(new_x - best_x), initial=0.0), np.max(np.abs(new_w - best_w), initial=0.0))
        if change < opts.tol_x:
            reason = "tol_x"
            break
        x, w = new_x, new_w

    if history:
        assert min(history) == d_best
    return FalsificationResult(
        falsified=bool(d_best < 0),
        best_robustness=float(d_best),
        witness_x0=best_x,
        witness_w=PiecewiseLinearSignal(grid, best_w),
        num_sims=sims,
        wall_time=time.perf_counter() - start,
        gd_invocations=1,
        lin_rhs_calls=lin_calls,
        iterations=iters,
        method="gd",
        stop_reason=reason,
        history=history,
    )
