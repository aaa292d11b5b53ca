"""Sampled linearizations ``(A_k, B_k)`` along a trajectory and their linear-in-time interpolation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gbf import _kernels as K
from gbf.model import ClosedLoopModel, SimulationError
from gbf.signals import PiecewiseLinearSignal, Trajectory

EPS0 = 1e-6
DEFAULT_SAMPLES = 100


class LinearizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class LinearizationSchedule:
    times: np.ndarray  # (K,)
    A: np.ndarray  # (K, d, d)
    B: np.ndarray  # (K, d, m)
    rhs_calls: int = 0

    def __post_init__(self):
        if self.times.ndim != 1 or len(self.times) < 1:
            raise ValueError("schedule needs at least one sample")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("schedule sample times must be strictly increasing")
        if self.A.shape[0] != len(self.times) or self.B.shape[0] != len(self.times):
            raise ValueError("one (A, B) pair per sample time required")

    @property
    def span(self) -> tuple[float, float]:
        return float(self.times[0]), float(self.times[-1])

    @property
    def samples(self):
        return list(zip(self.times, self.A, self.B))


def linearize_at(model: ClosedLoopModel, x, w_t, eps0: float = EPS0, method: str = "fd"):
    """Jacobians ``(df/dx, df/dw)`` at ``(x, w_t)``.

    ``method="fd"`` uses central differences with step ``eps0 * (1 + |v_j|)``;
    ``"analytic"`` uses the model's registered Jacobian; ``"auto"`` prefers it
    when present.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    w_t = np.atleast_1d(np.asarray(w_t, dtype=float))
    if x.shape != (model.state_dim,) or w_t.shape != (model.input_dim,):
        raise ValueError("state/input dimensions do not match the model")
    if method == "auto":
        method = "analytic" if model.jacobian is not None else "fd"
    if method == "analytic":
        if model.jacobian is None:
            raise ValueError(f"model {model.name!r} has no analytic Jacobian")
        A, B = model.jacobian(x, w_t)
        return np.asarray(A, dtype=float), np.asarray(B, dtype=float)
    if method != "fd":
        raise ValueError(f"unknown linearization method {method!r}")
    A, B = K.fd_jacobian(x, w_t, eps0, *model.kernel_args)
    for M, what, dim in ((A, "state", model.state_dim), (B, "input", model.input_dim)):
        bad = ~np.isfinite(M)
        if bad.any():
            j = int(np.argwhere(bad)[0][1])
            raise LinearizationError(f"non-finite difference quotient for {what} coordinate {j}")
    return A, B


def fd_rhs_calls(model: ClosedLoopModel) -> int:
    return 2 * (model.state_dim + model.input_dim)


def sample_indices(k_star: int, num_samples: int | None = None) -> np.ndarray:
    """Grid-node indices of (approximately) equispaced samples over ``[0, t_{k_star}]``."""
    if k_star == 0:
        return np.zeros(1, dtype=int)
    K_ = min(DEFAULT_SAMPLES, k_star + 1) if num_samples is None else min(num_samples, k_star + 1)
    if K_ < 2:
        raise ValueError("need at least two linearization samples")
    return np.unique(np.round(np.linspace(0, k_star, K_)).astype(int))


def build_schedule(
    model: ClosedLoopModel,
    traj: Trajectory,
    w: PiecewiseLinearSignal,
    t_star: float,
    num_samples: int | None = None,
    eps0: float = EPS0,
    method: str = "fd",
) -> LinearizationSchedule:
    """Linearize along ``traj`` at sample nodes spread over ``[0, t_star]`` (endpoints included).

    Samples are snapped to grid nodes so every operating point is a simulated
    state rather than an interpolated one. ``t_star = 0`` yields a one-sample
    schedule.
    """
    k_star = traj.grid.index_of(t_star)
    idx = sample_indices(k_star, num_samples)
    d, m = model.state_dim, model.input_dim
    A = np.empty((len(idx), d, d))
    B = np.empty((len(idx), d, m))
    for s, k in enumerate(idx):
        try:
            A[s], B[s] = linearize_at(model, traj.states[k], w.values[k], eps0=eps0, method=method)
        except (LinearizationError, SimulationError) as e:
            raise LinearizationError(f"sample {s} (t={traj.grid.nodes[k]!r}): {e}") from e
    calls = len(idx) * fd_rhs_calls(model) if method == "fd" else 0
    return LinearizationSchedule(traj.grid.nodes[idx].copy(), A, B, calls)


def _bracket(schedule: LinearizationSchedule, t: np.ndarray):
    times = schedule.times
    lo, hi = schedule.span
    tol = 1e-9 * max(1.0, hi)
    if np.any(t < lo - tol) or np.any(t > hi + tol):
        raise ValueError(f"time outside schedule span [{lo}, {hi}]")
    if len(times) == 1:
        z = np.zeros(len(t), dtype=int)
        return z, z, np.ones(len(t))
    k = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(times) - 2)
    alpha = (times[k + 1] - t) / (times[k + 1] - times[k])
    alpha = np.clip(alpha, 0.0, 1.0)
    return k, k + 1, alpha


def interp_many(schedule: LinearizationSchedule, t) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`interp` over an array of times."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    k0, k1, a = _bracket(schedule, t)
    a = a[:, None, None]
    A = a * schedule.A[k0] + (1.0 - a) * schedule.A[k1]
    B = a * schedule.B[k0] + (1.0 - a) * schedule.B[k1]
    # exact sample values where the weight is one
    exact = a[:, 0, 0] == 1.0
    A[exact] = schedule.A[k0[exact]]
    B[exact] = schedule.B[k0[exact]]
    return A, B


def interp(schedule: LinearizationSchedule, t: float) -> tuple[np.ndarray, np.ndarray]:
    """``A(t) = a_k A_k + a_{k+1} A_{k+1}`` with ``a_k = (t_{k+1} - t) / (t_{k+1} - t_k)``."""
    A, B = interp_many(schedule, [t])
    return A[0], B[0]
