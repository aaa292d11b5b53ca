"""Brute-force random-search oracle certifying that the shipped benchmarks are falsifiable.

The oracle shares no simulation or monitoring code with the package: it runs
its own batched RK4 in numpy, evaluates the controllers with plain matrix
products, and computes robustness of the two benchmark formulas by hand. Only
the fixture weights are read through the package loader.

    python3 scripts/certify_falsifiability.py [--samples 100000] [--out results/falsifiability.json]
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from gbf.benchmarks import fixtures_dir
from gbf.networks import load_network


def _act(name, s):
    if name == "tanh":
        return np.tanh(s)
    if name == "logistic":
        return 1.0 / (1.0 + np.exp(-s))
    return s


def forward(layers, U):
    """Batched feed-forward pass; ``U`` has one input row per sample."""
    for W, b, act in layers:
        U = _act(act, U @ W + b)
    return U


def unpack(net):
    return [(layer.W, layer.b, layer.activation) for layer in net.layers]


def rk4_batch(f, X0, W, h):
    """Integrate ``x' = f(x, w)`` for a batch; ``W`` holds node values (batch, nodes) of piecewise-linear inputs."""
    X = np.empty((W.shape[1],) + X0.shape)
    X[0] = x = X0
    for k in range(W.shape[1] - 1):
        w0, w1 = W[:, k], W[:, k + 1]
        wm = 0.5 * (w0 + w1)
        k1 = f(x, w0)
        k2 = f(x + 0.5 * h * k1, wm)
        k3 = f(x + 0.5 * h * k2, wm)
        k4 = f(x + h * k3, w1)
        x = x + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        X[k + 1] = x
    return X  # (nodes, batch, dim)


def offsets(a, b, h):
    return int(np.ceil(a / h - 1e-9)), int(np.floor(b / h + 1e-9))


# --- nonlinear plant with feed-forward controller ----------------------------


def fnn_robustness(W, cfg, layers):
    h = cfg["step"]
    eps = cfg["settings"]["eps"]

    def f(x, w):
        t = x[:, 2]
        y = forward(layers, x[:, :2])[:, 0]
        dx1 = -0.5 * x[:, 0] - 2.0 * np.exp(-0.5 * t) * np.sin(3.0 * t) + np.sin(x[:, 1])
        dx2 = -x[:, 1] + x[:, 0] ** 2 * np.cos(x[:, 1] + w) + y
        return np.stack([dx1, dx2, np.ones_like(t)], axis=1)

    X0 = np.tile(np.array(cfg["settings"]["x0"], dtype=float), (W.shape[0], 1))
    x1 = rk4_batch(f, X0, W, h)[:, :, 0].T  # (batch, nodes)
    _, n_out = offsets(0, 12, h)
    _, n_eps = offsets(0, eps, h)
    _, n_ev = offsets(0, 7, h)
    _, n_al = offsets(0, 5, h)
    # always[0,5] (x1 < 0.1)
    settle = sliding_window_view(0.1 - x1, n_al + 1, axis=1).min(axis=2)
    # eventually[0,7] of that
    reach = sliding_window_view(settle, n_ev + 1, axis=1).max(axis=2)
    # not (x1 < 0 and eventually[0,eps] x1 > 0) = x1 >= 0 or always[0,eps] x1 <= 0
    stay_neg = sliding_window_view(-x1, n_eps + 1, axis=1).min(axis=2)
    k = n_out + 1
    body = np.maximum(np.maximum(x1[:, :k], stay_neg[:, :k]), reach[:, :k])
    return body.min(axis=1)


def fnn_inputs(rng, n, nodes, T, segments=8):
    """Piecewise-constant inputs with ``segments`` uniform levels in [-0.1, 0.1]."""
    levels = rng.uniform(-0.1, 0.1, (n, segments))
    idx = np.minimum((nodes / (T / segments)).astype(int), segments - 1)
    return levels[:, idx]


# --- condenser surrogate -----------------------------------------------------


def condenser_robustness(W, cfg, net):
    omega, zeta, gain, wall, soft, p_ref, w_ref, setpoint = cfg["params"]
    sm, om = unpack(net.state_map), unpack(net.output_map)

    def f(x, w):
        p, q, nn = x[:, 0], x[:, 1], x[:, 2:]
        y = forward(om, nn)[:, 0]
        e = (p - setpoint)[:, None]
        dnn = forward(sm, np.hstack([nn, e]))
        d = p - p_ref
        restoring = soft * d - (1 - soft) * wall * (np.exp(-d / wall) - 1)
        dq = omega**2 * (gain * (w - w_ref) - y - restoring) - 2 * zeta * omega * q
        return np.column_stack([q, dq, dnn])

    X0 = np.zeros((W.shape[0], 2 + net.state_dim))
    X0[:, :2] = cfg["settings"]["x0"]
    p = rk4_batch(f, X0, W, cfg["step"])[:, :, 0].T
    a, b = offsets(30, 35, cfg["step"])
    win = p[:, a : b + 1]
    return np.minimum(win - 87.0, 87.5 - win).min(axis=1)


def condenser_inputs(rng, n, nodes, T):
    """Half control-point inputs, half bang-bang square waves of random period and phase."""
    lo, hi = 3.99, 4.01
    half = n // 2
    pts = rng.uniform(lo, hi, (half, 10))
    cp = np.array([np.interp(nodes, np.linspace(0, T, 10), row) for row in pts])
    period = rng.uniform(1.0, 4.0, (n - half, 1))
    phase = rng.uniform(0.0, 1.0, (n - half, 1)) * period
    sq = np.where(np.sin(2 * np.pi * (nodes[None, :] + phase) / period) >= 0, hi, lo)
    return np.vstack([cp, sq])


def certify(name, samples, batch, seed):
    cfg = json.loads((fixtures_dir() / f"{name}.json").read_text())
    net = load_network(fixtures_dir() / cfg["network"])
    T, h = cfg["horizon"], cfg["step"]
    nodes = np.linspace(0.0, T, int(round(T / h)) + 1)
    rng = np.random.default_rng(seed)
    best, count, start = np.inf, 0, time.perf_counter()
    families = {}
    for done in range(0, samples, batch):
        n = min(batch, samples - done)
        if name == "fnn-nonlinear":
            r = fnn_robustness(fnn_inputs(rng, n, nodes, T), cfg, unpack(net))
            split = {"piecewise_constant": r}
        else:
            r = condenser_robustness(condenser_inputs(rng, n, nodes, T), cfg, net)
            split = {"control_points": r[: n // 2], "square_wave": r[n // 2 :]}
        count += int(np.sum(r < 0))
        best = min(best, float(r.min()))
        for fam, rf in split.items():
            tot, hit, lo = families.get(fam, (0, 0, np.inf))
            families[fam] = (tot + len(rf), hit + int(np.sum(rf < 0)), min(lo, float(rf.min())))
    return {
        "model": name,
        "samples": samples,
        "seed": seed,
        "falsifying": count,
        "min_robustness": best,
        "certified": count > 0,
        "by_family": {f: {"samples": a, "falsifying": b, "min_robustness": c} for f, (a, b, c) in families.items()},
        "seconds": round(time.perf_counter() - start, 1),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=100_000)
    ap.add_argument("--batch", type=int, default=5000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--models", default="fnn-nonlinear,condenser-surrogate")
    ap.add_argument("--out", type=Path, default=Path("results/falsifiability.json"))
    args = ap.parse_args(argv)
    report = []
    for name in args.models.split(","):
        res = certify(name, args.samples, args.batch, args.seed)
        print(json.dumps(res))
        report.append(res)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(json.dumps(report, indent=2) + "\n")


if __name__ == "__main__":
    main()
