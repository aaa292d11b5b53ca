"""Time grids, piecewise-linear signals, boxes and trajectories."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

_NODE_RTOL = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``0 = t_1 < ... < t_N = T``."""

    T: float
    step: float

    def __post_init__(self):
        if not (self.T > 0 and self.step > 0):
            raise ValueError(f"horizon and step must be positive, got T={self.T}, step={self.step}")
        ratio = self.T / self.step
        if abs(ratio - round(ratio)) > _NODE_RTOL * max(1.0, ratio):
            raise ValueError(f"step {self.step} does not divide horizon {self.T}")
        if round(ratio) < 1:
            raise ValueError("grid needs at least two nodes")

    @property
    def t0(self) -> float:
        return 0.0

    @property
    def size(self) -> int:
        return int(round(self.T / self.step)) + 1

    def __len__(self) -> int:
        return self.size

    @cached_property
    def nodes(self) -> np.ndarray:
        return _frozen(np.linspace(0.0, self.T, self.size))

    @classmethod
    def from_count(cls, T: float, n: int) -> TimeGrid:
        return cls(T, T / (n - 1))

    def index_of(self, t: float) -> int:
        """Index of the node equal to ``t`` (up to rounding); raises otherwise."""
        k = int(round(t / self.step))
        if k < 0 or k >= self.size or abs(self.nodes[k] - t) > _NODE_RTOL * max(1.0, self.T):
            raise ValueError(f"t={t} is not a node of the grid")
        return k

    def window(self, a: float, b: float) -> tuple[int, int]:
        """Node offsets ``(ia, ib)`` covering the relative interval ``[a, b]``."""
        tol = _NODE_RTOL * max(1.0, b / self.step)
        return int(np.ceil(a / self.step - tol)), int(np.floor(b / self.step + tol))

    def truncated(self, k: int) -> TimeGrid:
        """Grid on ``[0, t_k]`` sharing this grid's step."""
        return TimeGrid(self.nodes[k], self.step)


@dataclass(frozen=True)
class BoxSet:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = _frozen(np.atleast_1d(self.lower))
        hi = _frozen(np.atleast_1d(self.upper))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"box bounds must be vectors of equal length, got {lo.shape} and {hi.shape}")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, v) -> bool:
        v = np.asarray(v, dtype=float)
        return bool(np.all((v >= self.lower) & (v <= self.upper)))

    def to_dict(self) -> dict:
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


def in_box(v, box: BoxSet) -> np.ndarray:
    """Componentwise saturation of ``v`` into ``box``; broadcasts over leading axes."""
    v = np.asarray(v, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.shape[-1] != box.dim:
        raise ValueError(f"dimension mismatch: vector has {v.shape[-1]} entries, box has {box.dim}")
    return np.minimum(np.maximum(v, box.lower), box.upper)


@dataclass(frozen=True)
class PiecewiseLinearSignal:
    """Signal given by its values at grid nodes, linear in between.

    ``values`` has shape ``(N, m)``.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        if vals.ndim != 2 or vals.shape[0] != self.grid.size:
            raise ValueError(f"signal needs one value per node ({self.grid.size}), got shape {vals.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    @classmethod
    def constant(cls, grid: TimeGrid, value) -> PiecewiseLinearSignal:
        value = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(value, (grid.size, 1)))

    @classmethod
    def from_control_points(cls, grid: TimeGrid, points) -> PiecewiseLinearSignal:
        """Lift an ``m x P`` control-point matrix (equispaced over ``[0, T]``) to the grid."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        P = points.shape[1]
        if P == 1:
            return cls.constant(grid, points[:, 0])
        knots = np.linspace(0.0, grid.T, P)
        vals = np.stack([np.interp(grid.nodes, knots, row) for row in points], axis=1)
        return cls(grid, vals)

    def __call__(self, t: float) -> np.ndarray:
        return eval_signal(self, t)


def eval_signal(sig: PiecewiseLinearSignal, t: float) -> np.ndarray:
    """Value of ``sig`` at time ``t``; exact at nodes."""
    nodes = sig.grid.nodes
    if not (0.0 <= t <= nodes[-1]):
        raise ValueError(f"t={t} outside signal domain [0, {nodes[-1]}]")
    k = int(np.searchsorted(nodes, t, side="right")) - 1
    if nodes[k] == t:
        return sig.values[k].copy()
    a = (t - nodes[k]) / (nodes[k + 1] - nodes[k])
    return (1.0 - a) * sig.values[k] + a * sig.values[k + 1]


def saturate_signal(sig: PiecewiseLinearSignal, box: BoxSet) -> PiecewiseLinearSignal:
    if sig.dim != box.dim:
        raise ValueError(f"dimension mismatch: signal has {sig.dim} channels, box has {box.dim}")
    return PiecewiseLinearSignal(sig.grid, in_box(sig.values, box))


@dataclass(frozen=True)
class Trajectory:
    """Closed-loop state path; each row of ``states`` is ``[plant, nn]``."""

    grid: TimeGrid
    states: np.ndarray
    plant_dim: int
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        states = np.array(self.states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        if states.shape[0] != self.grid.size:
            raise ValueError(f"trajectory needs one state per node ({self.grid.size}), got {states.shape[0]}")
        if not 0 <= self.plant_dim <= states.shape[1]:
            raise ValueError("plant dimension exceeds state dimension")
        states.setflags(write=False)
        object.__setattr__(self, "states", states)

    @property
    def plant(self) -> np.ndarray:
        return self.states[:, : self.plant_dim]

    @property
    def nn(self) -> np.ndarray:
        return self.states[:, self.plant_dim :]

    @property
    def state_dim(self) -> int:
        return self.states.shape[1]

    @property
    def nn_dim(self) -> int:
        return self.state_dim - self.plant_dim

    def __len__(self) -> int:
        return self.states.shape[0]
