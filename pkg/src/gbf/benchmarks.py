"""Built-in closed-loop models and the JSON model-file format.

Model files name a registered plant, its parameter vector, and (optionally) a
network fixture by path relative to the model file::

    {"plant": "condenser", "params": [...], "network": "condenser-pi.net",
     "input_box": {"lower": [3.99], "upper": [4.01]},
     "init_box": {"lower": [...], "upper": [...]},
     "horizon": 35.0, "step": 0.01, "spec": "always[30,35] (p in [87,87.5])",
     "aliases": {"p": 0}, "settings": {"w_nominal": 4.0}}

The directory holding the shipped fixtures can be overridden with ``GBF_FIXTURES``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from numba import njit

from gbf.model import ClosedLoopModel
from gbf.networks import FnnSpec, Layer, RnnSpec, load_network
from gbf.signals import BoxSet


def fixtures_dir() -> Path:
    env = os.environ.get("GBF_FIXTURES")
    return Path(env) if env else Path(__file__).parent / "fixtures"


# --- plant right-hand sides -------------------------------------------------


@njit
def _decay_rhs(xp, w, y, p):
    return -p[0] * xp


@njit
def _integrator_rhs(xp, w, y, p):
    return w.copy()


@njit
def _zero_rhs(xp, w, y, p):
    return np.zeros(xp.shape[0])


@njit
def _lti_rhs(xp, w, y, p):
    # p = [n, m, A (row-major), B (row-major)]
    n = int(p[0])
    m = int(p[1])
    A = p[2 : 2 + n * n].reshape((n, n))
    B = p[2 + n * n : 2 + n * n + n * m].reshape((n, m))
    return A @ xp + B @ w


@njit
def _bilinear_rhs(xp, w, y, p):
    return xp * w


@njit
def _square_rhs(xp, w, y, p):
    return -xp * xp


@njit
def _smooth_rhs(xp, w, y, p):
    # x' = A x + C tanh(x) + B w + D (x o x) w ; p = [n, m, A, C, B, D]
    n = int(p[0])
    m = int(p[1])
    o = 2
    A = p[o : o + n * n].reshape((n, n))
    o += n * n
    C = p[o : o + n * n].reshape((n, n))
    o += n * n
    B = p[o : o + n * m].reshape((n, m))
    o += n * m
    D = p[o : o + n * m].reshape((n, m))
    return A @ xp + C @ np.tanh(xp) + B @ w + (xp * xp) * (D @ w)


@njit
def _follower_rhs(xp, w, y, p):
    # plant tracks the RNN output: x_p' = -x_p + y
    return -xp + y


@njit
def _input_passthrough(xp, w, p):
    return w.copy()


@njit
def _fnn_nonlinear_rhs(xp, w, y, p):
    # state [x1, x2, clock]
    x1 = xp[0]
    x2 = xp[1]
    t = xp[2]
    out = np.empty(3)
    out[0] = -0.5 * x1 - 2.0 * math.exp(-0.5 * t) * math.sin(3.0 * t) + math.sin(x2)
    out[1] = -x2 + x1 * x1 * math.cos(x2 + w[0]) + y[0]
    out[2] = 1.0
    return out


@njit
def _fnn_nonlinear_wiring(xp, w, p):
    return xp[:2].copy()


@njit
def _condenser_rhs(xp, w, y, p):
    # p = [omega, zeta, gain, wall, soft, p_ref, w_ref, setpoint]
    # Lightly damped pressure oscillation whose restoring force stiffens
    # exponentially below p_ref and softens (slope ``soft``) above it.
    omega, zeta, gain, wall, soft, p_ref, w_ref = p[0], p[1], p[2], p[3], p[4], p[5], p[6]
    dp = xp[0] - p_ref
    restoring = soft * dp - (1.0 - soft) * wall * (math.exp(-dp / wall) - 1.0)
    out = np.empty(2)
    out[0] = xp[1]
    out[1] = omega * omega * (gain * (w[0] - w_ref) - y[0] - restoring) - 2.0 * zeta * omega * xp[1]
    return out


@njit
def _condenser_wiring(xp, w, p):
    # regulation error fed to the controller: measured pressure minus setpoint
    e = np.empty(1)
    e[0] = xp[0] - p[7]
    return e


@dataclass(frozen=True)
class PlantKind:
    rhs: Callable
    plant_dim: int
    input_dim: int
    wiring: Callable | None = None
    clock_index: int | None = None
    aliases: dict | None = None


PLANTS = {
    "fnn-nonlinear": PlantKind(_fnn_nonlinear_rhs, 3, 1, _fnn_nonlinear_wiring, clock_index=2),
    "condenser": PlantKind(_condenser_rhs, 2, 1, _condenser_wiring, aliases={"p": 0, "q": 1}),
}


# --- model files ------------------------------------------------------------


def model_from_dict(cfg: dict, base: Path | None = None, name: str | None = None) -> ClosedLoopModel:
    kind_name = cfg["plant"]
    if kind_name not in PLANTS:
        raise ValueError(f"unknown plant {kind_name!r}; registered plants: {', '.join(sorted(PLANTS))}")
    kind = PLANTS[kind_name]
    net = None
    if cfg.get("network"):
        net_path = Path(cfg["network"])
        if not net_path.is_absolute():
            net_path = (base or fixtures_dir()) / net_path
        net = load_network(net_path)
    aliases = dict(kind.aliases or {})
    aliases.update(cfg.get("aliases", {}))
    return ClosedLoopModel(
        name=name or cfg.get("name", kind_name),
        plant_dim=kind.plant_dim,
        input_dim=kind.input_dim,
        plant_rhs=kind.rhs,
        params=np.array(cfg.get("params", []), dtype=float),
        input_box=BoxSet(cfg["input_box"]["lower"], cfg["input_box"]["upper"]),
        init_box=BoxSet(cfg["init_box"]["lower"], cfg["init_box"]["upper"]),
        horizon=float(cfg["horizon"]),
        step=float(cfg["step"]),
        nn=net,
        nn_input=kind.wiring if net is not None else None,
        spec=cfg.get("spec", ""),
        aliases=aliases,
        clock_index=kind.clock_index,
        settings=dict(cfg.get("settings", {})),
        description=cfg.get("description", ""),
    )


def load_model_file(path) -> ClosedLoopModel:
    path = Path(path)
    cfg = json.loads(path.read_text())
    return model_from_dict(cfg, base=path.parent, name=cfg.get("name", path.stem))


# --- toy models -------------------------------------------------------------


@dataclass(frozen=True)
class ConstantJacobian:
    """Analytic Jacobians of a linear plant; a class rather than a closure so models pickle."""

    A: np.ndarray
    B: np.ndarray

    def __call__(self, x, w):
        return self.A.copy(), self.B.copy()


@dataclass(frozen=True)
class SmoothJacobian:
    """Analytic Jacobians of ``x' = A x + C tanh(x) + B w + (x o x)(D w)``."""

    A: np.ndarray
    C: np.ndarray
    B: np.ndarray
    D: np.ndarray

    def __call__(self, x, w):
        x = np.asarray(x, dtype=float)
        w = np.asarray(w, dtype=float)
        Ja = self.A + self.C * (1.0 - np.tanh(x) ** 2)[None, :] + np.diag(2.0 * x * (self.D @ w))
        Jb = self.B + (x * x)[:, None] * self.D
        return Ja, Jb


def _box(lo, hi) -> BoxSet:
    return BoxSet(np.atleast_1d(lo), np.atleast_1d(hi))


def decay_model(rate: float = 1.0, horizon: float = 1.0, step: float = 0.01, x0: float = 1.0) -> ClosedLoopModel:
    return ClosedLoopModel(
        "decay", 1, 1, _decay_rhs, [rate], _box(-1.0, 1.0), _box(x0, x0), horizon, step,
        settings={"x0": [x0], "w_nominal": [0.0]},
        jacobian=ConstantJacobian(np.array([[-rate]]), np.zeros((1, 1))),
        description="x' = -a x",
    )


def integrator_model(horizon: float = 2.0, step: float = 0.01) -> ClosedLoopModel:
    return ClosedLoopModel(
        "integrator", 1, 1, _integrator_rhs, [], _box(-1.0, 1.0), _box(0.0, 0.0), horizon, step,
        settings={"x0": [0.0], "w_nominal": [1.0]},
        jacobian=ConstantJacobian(np.zeros((1, 1)), np.ones((1, 1))),
        description="x' = w",
    )


def zero_model(lower: float = -2.0, upper: float = 2.0, horizon: float = 1.0, step: float = 0.1) -> ClosedLoopModel:
    return ClosedLoopModel(
        "zero", 1, 1, _zero_rhs, [], _box(-1.0, 1.0), _box(lower, upper), horizon, step,
        spec="always[0,1] (x1 > -1)", settings={"w_nominal": [0.0]}, description="x' = 0; violated whenever x(0) < -1",
    )


def lti_model(A, B, init_box: BoxSet, input_box: BoxSet, horizon: float, step: float, spec: str = "") -> ClosedLoopModel:
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
    n, m = B.shape
    params = np.concatenate([[n, m], A.ravel(), B.ravel()])
    return ClosedLoopModel(
        "lti", n, m, _lti_rhs, params, input_box, init_box, horizon, step, spec=spec,
        jacobian=ConstantJacobian(A, B), description="x' = A x + B w",
    )


def bilinear_model() -> ClosedLoopModel:
    return ClosedLoopModel("bilinear", 1, 1, _bilinear_rhs, [], _box(-5.0, 5.0), _box(-5.0, 5.0), 1.0, 0.1)


def square_model() -> ClosedLoopModel:
    return ClosedLoopModel("square", 1, 1, _square_rhs, [], _box(-1.0, 1.0), _box(-5.0, 5.0), 1.0, 0.1)


def smooth_random_model(rng: np.random.Generator, n: int, m: int = 1, horizon: float = 1.0, step: float = 1e-3):
    """Random smooth nonlinear plant ``x' = A x + C tanh(x) + B w + (x o x)(D w)`` with a stable linear part."""
    A = rng.normal(size=(n, n)) / np.sqrt(n)
    A -= (np.max(np.linalg.eigvals(A).real) + 1.0) * np.eye(n)
    C = 0.5 * rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    D = 0.3 * rng.normal(size=(n, m))
    params = np.concatenate([[n, m], A.ravel(), C.ravel(), B.ravel(), D.ravel()])

    return ClosedLoopModel(
        f"smooth{n}", n, m, _smooth_rhs, params, _box(-np.ones(m), np.ones(m)), _box(-np.ones(n), np.ones(n)),
        horizon, step, jacobian=SmoothJacobian(A, C, B, D), description="random smooth test plant",
    )


def linear_rnn_model(horizon: float = 10.0, step: float = 0.01) -> ClosedLoopModel:
    """Plant ``x_p' = -x_p + y`` driven by an RNN ``x_nn' = -x_nn + w``, ``y = x_nn``."""
    state_map = FnnSpec((Layer(np.array([[-1.0], [1.0]]), [0.0], "identity"),))
    output_map = FnnSpec((Layer(np.eye(1), [0.0], "identity"),))
    net = RnnSpec(1, state_map, output_map)
    return ClosedLoopModel(
        "linear-rnn", 1, 1, _follower_rhs, [], _box(-1.0, 1.0), _box(0.0, 0.0), horizon, step,
        nn=net, nn_input=_input_passthrough, settings={"x0": [0.0], "w_nominal": [0.0]},
        description="first-order plant following a linear recurrent network",
    )


# --- registry ---------------------------------------------------------------

_FILE_MODELS = {
    "fnn-nonlinear": "fnn-nonlinear.json",
    "condenser-surrogate": "condenser-surrogate.json",
}
_TOY_MODELS = {
    "decay": decay_model,
    "integrator": integrator_model,
    "zero": zero_model,
    "linear-rnn": linear_rnn_model,
}


def available_models() -> list[str]:
    return sorted(list(_FILE_MODELS) + list(_TOY_MODELS))


def builtin_model(name: str) -> ClosedLoopModel:
    if name in _FILE_MODELS:
        return load_model_file(fixtures_dir() / _FILE_MODELS[name])
    if name in _TOY_MODELS:
        return _TOY_MODELS[name]()
    raise ValueError(f"unknown model {name!r}; available models: {', '.join(available_models())}")
