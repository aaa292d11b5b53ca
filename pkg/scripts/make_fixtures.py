"""Regenerate the shipped benchmark fixtures in src/gbf/fixtures.

The fixtures are frozen; this script documents how they were produced and can
rebuild them. Run it from the repository root:

    python3 scripts/make_fixtures.py [--out DIR] [--check]

``--check`` rebuilds into memory and reports whether the files on disk match.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from gbf.benchmarks import PLANTS, fixtures_dir, model_from_dict
from gbf.model import simulate
from gbf.networks import FnnSpec, Layer, RnnSpec, dumps_network, fnn_eval, rnn_output
from gbf.stl import parse_formula, robustness

# --- nonlinear plant with a feed-forward controller --------------------------

FNN_EPS = 0.1
FNN_SPEC = (
    f"always[0,12] ((x1 < 0 and eventually[0,{FNN_EPS}] (x1 > 0)) -> eventually[0,7] always[0,5] (x1 < 0.1))"
)
FNN_SEED = 2024
FNN_WIDTH = 8
FNN_TARGET_ROBUSTNESS = 0.005  # nominal (w = 0) margin of the shipped controller


def fnn_config() -> dict:
    return {
        "name": "fnn-nonlinear",
        "description": (
            "Nonlinear time-varying plant (x1, x2 and a clock state) under a 5-layer tanh feed-forward "
            f"controller. Rise-time requirement with eps = {FNN_EPS}; outer and settling windows bounded "
            "so the formula horizon equals the simulation horizon."
        ),
        "plant": "fnn-nonlinear",
        "params": [],
        "network": "fnn-controller.net",
        "input_box": {"lower": [-0.1], "upper": [0.1]},
        "init_box": {"lower": [-0.2, 5.0, 0.0], "upper": [-0.2, 5.0, 0.0]},
        "horizon": 24.0,
        "step": 0.024,
        "spec": FNN_SPEC,
        "aliases": {},
        "settings": {"x0": [-0.2, 5.0, 0.0], "w_nominal": [0.0], "eps": FNN_EPS},
    }


def fnn_hidden_layers(seed: int = FNN_SEED, width: int = FNN_WIDTH):
    rng = np.random.default_rng(seed)
    widths = (2, width, width, width, width)
    return [
        Layer(0.5 * rng.normal(size=(widths[i], widths[i + 1])) / np.sqrt(widths[i]), 0.1 * rng.normal(size=widths[i + 1]), "tanh")
        for i in range(4)
    ]


def fnn_output_fit(hidden):
    """Least-squares fit of the last tanh layer's pre-activation to ``-0.5 x1 + 0.04`` on a state grid."""
    g = np.stack(np.meshgrid(np.linspace(-1.0, 1.5, 41), np.linspace(-1.0, 5.5, 41)), -1).reshape(-1, 2)
    body = FnnSpec(tuple(hidden))
    H = np.array([fnn_eval(body, u) for u in g])
    target = -0.5 * g[:, 0] + 0.04
    coef, *_ = np.linalg.lstsq(np.hstack([H, np.ones((len(H), 1))]), target, rcond=None)
    return coef


def fnn_network(hidden, coef, bias_shift: float) -> FnnSpec:
    last = Layer(coef[:-1].reshape(-1, 1), [coef[-1] + bias_shift], "tanh")
    return FnnSpec(tuple(hidden) + (last,))


def nominal_robustness(cfg: dict, net) -> float:
    base = model_from_dict({**cfg, "network": None})
    model = replace(base, nn=net, nn_input=PLANTS[cfg["plant"]].wiring)
    phi = parse_formula(model.spec, names=model.names, plant_dim=model.plant_dim)
    traj = simulate(model, model.nominal_x0(), model.nominal_input()).trajectory
    return robustness(phi, traj).robustness


def build_fnn():
    cfg = fnn_config()
    hidden = fnn_hidden_layers()
    coef = fnn_output_fit(hidden)
    shift = brentq(
        lambda s: nominal_robustness(cfg, fnn_network(hidden, coef, s)) - FNN_TARGET_ROBUSTNESS,
        -0.05,
        0.05,
        xtol=1e-12,
    )
    net = fnn_network(hidden, coef, shift)
    cfg["settings"]["nominal_robustness"] = nominal_robustness(cfg, net)
    # controller output at the initial state with w = 0, by direct evaluation
    cfg["settings"]["nn_output_at_x0"] = float(fnn_eval(net, [-0.2, 5.0])[0])
    return cfg, net


# --- condenser surrogate with a recurrent tanh-PI controller ----------------

# plant: p'' = omega^2 (gain (w - w_ref) - y - restoring(p - p_ref)) - 2 zeta omega p'
COND = dict(omega=3.0, zeta=0.1, gain=7.0, wall=0.04, soft=0.2, p_ref=87.2, w_ref=4.0, setpoint=87.2)
# controller: leaky integral and filtered error feeding a saturating output
PI = dict(Ki=0.3, Kp=0.0, leak=0.05, tau_f=0.2, sat=0.02)


def condenser_network(Ki, Kp, leak, tau_f, sat) -> RnnSpec:
    # state [xi, e_f], input e = p - setpoint
    #   xi'  = -leak xi + e
    #   e_f' = (e - e_f) / tau_f
    #   y    = sat tanh((Ki xi + Kp e_f) / sat)
    state_map = FnnSpec((Layer([[-leak, 0.0], [0.0, -1.0 / tau_f], [1.0, 1.0 / tau_f]], [0.0, 0.0], "identity"),))
    output_map = FnnSpec(
        (Layer([[Ki / sat], [Kp / sat]], [0.0], "tanh"), Layer([[sat]], [0.0], "identity"))
    )
    return RnnSpec(2, state_map, output_map)


def condenser_config() -> dict:
    p = COND
    return {
        "name": "condenser-surrogate",
        "description": (
            "Two-state pressure surrogate (p, q = p') with a restoring force that stiffens exponentially "
            "below the operating point, driven by the steam input w and regulated by a continuous-time "
            "recurrent tanh-PI controller with saturated authority."
        ),
        "plant": "condenser",
        "params": [p["omega"], p["zeta"], p["gain"], p["wall"], p["soft"], p["p_ref"], p["w_ref"], p["setpoint"]],
        "network": "condenser-pi.net",
        "input_box": {"lower": [3.99], "upper": [4.01]},
        "init_box": {"lower": [p["p_ref"], 0.0], "upper": [p["p_ref"], 0.0]},
        "horizon": 35.0,
        "step": 0.01,
        "spec": "always[30,35] (p in [87, 87.5])",
        "aliases": {"p": 0, "q": 1},
        "settings": {"x0": [p["p_ref"], 0.0], "w_nominal": [4.0], "controller": dict(PI)},
    }


def build_condenser():
    cfg = condenser_config()
    net = condenser_network(**PI)
    cfg["settings"]["nominal_robustness"] = nominal_robustness(cfg, net)
    cfg["settings"]["nn_output_at_zero"] = float(rnn_output(net, np.zeros(2))[0])
    return cfg, net


def render(out: Path) -> dict[Path, str]:
    files = {}
    for build in (build_fnn, build_condenser):
        cfg, net = build()
        files[out / cfg["network"]] = dumps_network(net)
        files[out / f"{cfg['name']}.json"] = json.dumps(cfg, indent=2) + "\n"
    return files


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=fixtures_dir())
    ap.add_argument("--check", action="store_true", help="compare against the files on disk instead of writing")
    args = ap.parse_args(argv)
    files = render(args.out)
    if args.check:
        stale = [p for p, text in files.items() if not p.exists() or p.read_text() != text]
        for p in stale:
            print(f"differs: {p}")
        return 1 if stale else 0
    args.out.mkdir(parents=True, exist_ok=True)
    for p, text in files.items():
        p.write_text(text)
        print(f"wrote {p}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
