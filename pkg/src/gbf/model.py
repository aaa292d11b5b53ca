"""Closed-loop model ``x' = f(x, w)`` with state ``x = [x_p, x_nn]`` and its fixed-step simulator."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping

import numpy as np

from gbf import _kernels as K
from gbf.networks import FnnSpec, RnnSpec, pack_fnn
from gbf.signals import BoxSet, PiecewiseLinearSignal, TimeGrid, Trajectory


class SimulationError(RuntimeError):
    def __init__(self, msg: str, time: float | None = None, state=None):
        super().__init__(msg)
        self.time = time
        self.state = None if state is None else np.asarray(state)


@dataclass(frozen=True, eq=False)
class ClosedLoopModel:
    """Plant plus (optional) neural controller.

    ``plant_rhs(xp, w, y_nn, params)`` and ``nn_input(xp, w, params)`` must be
    numba-jitted. Time-varying plants carry a clock coordinate (``x' = 1``)
    inside the plant block, named by ``clock_index``; it is never referenced
    by specifications.
    """

    name: str
    plant_dim: int
    input_dim: int
    plant_rhs: Callable
    params: np.ndarray
    input_box: BoxSet
    init_box: BoxSet
    horizon: float
    step: float
    nn: FnnSpec | RnnSpec | None = None
    nn_input: Callable | None = None
    spec: str = ""
    aliases: Mapping[str, int] = field(default_factory=dict)
    clock_index: int | None = None
    jacobian: Callable | None = None
    settings: Mapping[str, object] = field(default_factory=dict)
    description: str = ""

    def __post_init__(self):
        params = np.array(self.params, dtype=float).reshape(-1)
        params.setflags(write=False)
        object.__setattr__(self, "params", params)
        if self.input_box.dim != self.input_dim:
            raise ValueError(f"input box has dimension {self.input_box.dim}, model has {self.input_dim} inputs")
        if self.init_box.dim != self.plant_dim:
            raise ValueError(f"initial box has dimension {self.init_box.dim}, plant has {self.plant_dim} states")
        if self.nn is not None and self.nn_input is None:
            raise ValueError("a controller needs an nn_input wiring function")
        if isinstance(self.nn, RnnSpec) and self.nn.input_dim < 1:
            raise ValueError("recurrent controller needs at least one input")

    @property
    def nn_dim(self) -> int:
        return self.nn.state_dim if isinstance(self.nn, RnnSpec) else 0

    @property
    def state_dim(self) -> int:
        return self.plant_dim + self.nn_dim

    @property
    def kind(self) -> int:
        if self.nn is None:
            return K.NONE
        if isinstance(self.nn, FnnSpec):
            return K.FNN
        return K.RNN_DISCRETE if self.nn.discrete else K.RNN_CONTINUOUS

    @cached_property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.horizon, self.step)

    @cached_property
    def names(self) -> dict[str, int]:
        """Names usable in formulas: ``x1..xn`` (clock excluded) plus aliases."""
        names = {f"x{i + 1}": i for i in range(self.plant_dim) if i != self.clock_index}
        names.update(self.aliases)
        return names

    @cached_property
    def kernel_args(self) -> tuple:
        if self.kind == K.FNN:
            f1, m1 = pack_fnn(self.nn)
            f2, m2 = pack_fnn(None)
        elif self.kind in (K.RNN_CONTINUOUS, K.RNN_DISCRETE):
            f1, m1 = pack_fnn(self.nn.state_map)
            f2, m2 = pack_fnn(self.nn.output_map)
        else:
            (f1, m1), (f2, m2) = pack_fnn(None), pack_fnn(None)
        wiring = self.nn_input if self.nn_input is not None else K.no_input
        return (self.plant_rhs, wiring, np.array(self.params), self.plant_dim, self.kind, f1, m1, f2, m2)

    def initial_state(self, x_p0) -> np.ndarray:
        x_p0 = np.atleast_1d(np.asarray(x_p0, dtype=float))
        if x_p0.shape != (self.plant_dim,):
            raise ValueError(f"initial condition has {x_p0.shape[0]} entries, plant has {self.plant_dim}")
        return np.concatenate([x_p0, np.zeros(self.nn_dim)])

    def nominal_x0(self) -> np.ndarray:
        return np.array(self.settings.get("x0", self.init_box.center), dtype=float)

    def nominal_input(self, grid: TimeGrid | None = None) -> PiecewiseLinearSignal:
        value = self.settings.get("w_nominal", self.input_box.center)
        return PiecewiseLinearSignal.constant(grid or self.grid, value)


@dataclass(frozen=True)
class SimOutput:
    trajectory: Trajectory
    rhs_evals: int


def rhs(model: ClosedLoopModel, x, w_t) -> np.ndarray:
    """Closed-loop derivative ``[f_p(x_p, w, y_nn), f_c(x_nn, u_nn)]``."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w_t = np.atleast_1d(np.asarray(w_t, dtype=float))
    if x.shape != (model.state_dim,):
        raise ValueError(f"state has {x.shape[0]} entries, model has {model.state_dim}")
    if w_t.shape != (model.input_dim,):
        raise ValueError(f"input has {w_t.shape[0]} entries, model has {model.input_dim}")
    dx = K.closed_loop_rhs(x, w_t, *model.kernel_args)
    if not np.all(np.isfinite(dx)):
        t = x[model.clock_index] if model.clock_index is not None else None
        raise SimulationError(f"non-finite derivative at state {x.tolist()}", time=t, state=x)
    return dx


def simulate(
    model: ClosedLoopModel, x_p0, w: PiecewiseLinearSignal, grid: TimeGrid | None = None
) -> SimOutput:
    """Classical RK4 on the nodes of ``grid`` starting from ``[x_p0, 0]``.

    The input is piecewise linear on the grid, so stage values at midpoints
    are the averages of neighbouring node values.
    """
    grid = grid or w.grid
    if w.grid != grid:
        raise ValueError("input signal must be defined on the simulation grid")
    if w.dim != model.input_dim:
        raise ValueError(f"input has {w.dim} channels, model has {model.input_dim}")
    x0 = model.initial_state(x_p0)
    X, bad = K.rk4_simulate(x0, np.ascontiguousarray(w.values), grid.step, *model.kernel_args)
    if bad >= 0:
        raise SimulationError(
            f"state became non-finite at t={grid.nodes[bad]!r}", time=float(grid.nodes[bad]), state=X[bad]
        )
    traj = Trajectory(grid, X, model.plant_dim)
    return SimOutput(traj, 4 * (grid.size - 1))
