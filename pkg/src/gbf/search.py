"""Global search layers (uniform random sampling, simulated annealing) and their
combination with the adjoint local search, plus multi-run experiments.

Global candidates parameterise the input by ``P`` control points per channel,
equispaced over ``[0, T]`` and linearly interpolated onto the simulation grid.
The local search always works on the full grid.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from gbf.adjoint import LocalSearchOptions, _as_formula, local_search
from gbf.model import ClosedLoopModel, SimulationError, simulate
from gbf.result import FalsificationResult
from gbf.signals import BoxSet, PiecewiseLinearSignal, in_box
from gbf.stl import robustness

METHODS = ("ur", "sa", "ur+gd", "sa+gd", "gd")
DEFAULT_STALL = {"ur+gd": 50, "sa+gd": 30}

RUN_COLUMNS = [
    "run_id", "method", "seed", "falsified", "min_robustness",
    "num_sims", "lin_rhs_calls", "gd_invocations", "wall_time_s",
]
AGGREGATE_COLUMNS = [
    "method", "runs", "falsifications", "avg_min_robustness", "avg_wall_time_s", "avg_num_sims",
]


@dataclass
class Candidate:
    x0: np.ndarray
    w_params: np.ndarray  # (m, P)
    robustness: float | None = None

    def signal(self, grid) -> PiecewiseLinearSignal:
        return PiecewiseLinearSignal.from_control_points(grid, self.w_params)


@dataclass(frozen=True)
class SearchConfig:
    method: str = "ur+gd"
    seed: int = 0
    max_sims: int = 600
    time_limit: float = 60.0
    stall_trigger: int | None = None
    c_max: int = 5
    control_points: int = 10
    sa_temp_init: float | None = None
    sa_cooling: float = 0.95
    sa_scale: float = 0.1
    w_init: str = "nominal"
    local: LocalSearchOptions = field(default_factory=LocalSearchOptions)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {', '.join(METHODS)}")
        if self.control_points < 1:
            raise ValueError("need at least one control point")

    @property
    def stall(self) -> int:
        if self.stall_trigger is not None:
            return self.stall_trigger
        return DEFAULT_STALL.get(self.method, 50)

    @property
    def uses_gd(self) -> bool:
        return self.method.endswith("gd")


def sample_uniform(rng: np.random.Generator, X0: BoxSet, U: BoxSet, P: int) -> Candidate:
    """Initial condition uniform in ``X0``, each control point uniform in ``U`` (drawn in that order)."""
    if P < 1:
        raise ValueError("need at least one control point")
    x0 = rng.uniform(X0.lower, X0.upper)
    pts = rng.uniform(U.lower[:, None], U.upper[:, None], size=(U.dim, P))
    return Candidate(np.asarray(x0, dtype=float), pts)


def sa_propose(rng: np.random.Generator, current: Candidate, X0: BoxSet, U: BoxSet, scale: float) -> Candidate:
    x0 = in_box(current.x0 + scale * X0.width * rng.normal(size=current.x0.shape), X0)
    noise = scale * U.width[:, None] * rng.normal(size=current.w_params.shape)
    pts = in_box((current.w_params + noise).T, U).T
    return Candidate(x0, pts)


def acceptance_probability(delta: float, temp: float) -> float:
    if delta <= 0:
        return 1.0
    if temp <= 0:
        return 0.0
    return math.exp(-delta / temp)


def sa_step(
    rng: np.random.Generator,
    current: Candidate,
    temp: float,
    cfg: SearchConfig,
    X0: BoxSet,
    U: BoxSet,
    evaluate: Callable[[Candidate], float],
) -> tuple[Candidate, Candidate, bool]:
    """One annealing move; returns ``(next current, proposal, accepted)``."""
    proposal = sa_propose(rng, current, X0, U, cfg.sa_scale)
    proposal.robustness = evaluate(proposal)
    u = rng.uniform()
    accepted = u < acceptance_probability(proposal.robustness - current.robustness, temp)
    return (proposal if accepted else current), proposal, bool(accepted)


def initial_input(model: ClosedLoopModel, spec: str, rng: np.random.Generator | None = None, grid=None):
    """Input signal named by ``zero``, ``nominal``, ``const:<v>`` or ``random``."""
    grid = grid or model.grid
    U = model.input_box
    if spec == "nominal":
        w = model.nominal_input(grid)
    elif spec == "zero":
        w = PiecewiseLinearSignal.constant(grid, np.zeros(model.input_dim))
    elif spec.startswith("const:"):
        w = PiecewiseLinearSignal.constant(grid, [float(v) for v in spec[6:].split(",")])
    elif spec == "random":
        rng = rng or np.random.default_rng(0)
        w = PiecewiseLinearSignal(grid, rng.uniform(U.lower, U.upper, size=(grid.size, U.dim)))
    else:
        raise ValueError(f"unknown input initialisation {spec!r}")
    if not U.contains(w.values):
        raise ValueError(f"initial input {spec!r} leaves the input box")
    return w


def run_search(model: ClosedLoopModel, phi, cfg: SearchConfig) -> FalsificationResult:
    """Run one falsification search with the budget and method in ``cfg``.

    With a GD method, the local search is launched once the sampler has gone
    ``cfg.stall`` evaluations without improving its own best sample, starting
    from that sample. A start point that was already refined is not refined
    again. Local-search simulations count against ``max_sims``.
    """
    phi = _as_formula(model, phi)
    rng = np.random.default_rng(cfg.seed)
    grid = model.grid
    X0, U = model.init_box, model.input_box
    start = time.perf_counter()

    if cfg.method == "gd":
        x0 = model.nominal_x0()
        w0 = initial_input(model, cfg.w_init, rng, grid)
        opts = replace(cfg.local, max_sims=cfg.max_sims, time_limit=cfg.time_limit)
        res = local_search(model, phi, x0, w0, opts)
        res.method, res.seed = "gd", cfg.seed
        return res

    # overall best (reported) and the sampler's own incumbent, which drives the stall counter
    state = {"best": np.inf, "x0": None, "w": None, "sims": 0}
    incumbent = {"d": np.inf, "x0": None, "w": None}
    history: list[float] = []
    failures: list[str] = []

    def record(d: float, x0: np.ndarray, w_values: np.ndarray) -> None:
        if d < state["best"]:
            state["best"], state["x0"], state["w"] = d, x0.copy(), w_values.copy()

    def evaluate(cand: Candidate) -> float:
        w_sig = cand.signal(grid)
        state["sims"] += 1
        try:
            traj = simulate(model, cand.x0, w_sig, grid).trajectory
            d = robustness(phi, traj).robustness
        except SimulationError as e:
            failures.append(f"sim {state['sims']}: {e}")
            d = np.inf
        history.append(d)
        record(d, cand.x0, w_sig.values)
        if d < incumbent["d"]:
            incumbent.update(d=d, x0=cand.x0.copy(), w=w_sig.values.copy())
        return d

    lin_calls = gd_calls = stall = 0
    last_gd_start = None
    current: Candidate | None = None
    temp = 0.0
    reason = "max_sims"
    while True:
        if state["best"] < 0:
            reason = "falsified"
            break
        if state["sims"] >= cfg.max_sims:
            reason = "max_sims"
            break
        elapsed = time.perf_counter() - start
        if elapsed >= cfg.time_limit:
            reason = "time_limit"
            break

        if cfg.uses_gd and stall >= cfg.stall and gd_calls < cfg.c_max and np.isfinite(incumbent["d"]):
            stall = 0
            # local_search is deterministic: restarting from the same point would only repeat it
            if last_gd_start is not incumbent["w"]:
                last_gd_start = incumbent["w"]
                opts = replace(
                    cfg.local,
                    max_sims=cfg.max_sims - state["sims"],
                    time_limit=cfg.time_limit - elapsed,
                )
                w_start = PiecewiseLinearSignal(grid, incumbent["w"])
                gd_calls += 1
                try:
                    res = local_search(model, phi, incumbent["x0"], w_start, opts)
                except SimulationError as e:
                    failures.append(f"local search {gd_calls}: {e}")
                    res = None
                if res is not None:
                    state["sims"] += res.num_sims
                    lin_calls += res.lin_rhs_calls
                    history.extend(res.history)
                    record(res.best_robustness, res.witness_x0, res.witness_w.values)
                continue

        before = incumbent["d"]
        if cfg.method.startswith("ur"):
            evaluate(sample_uniform(rng, X0, U, cfg.control_points))
        elif current is None:
            current = sample_uniform(rng, X0, U, cfg.control_points)
            current.robustness = evaluate(current)
            if cfg.sa_temp_init is not None:
                temp = cfg.sa_temp_init
            else:
                temp = 0.1 * abs(current.robustness) if np.isfinite(current.robustness) else 1.0
        else:
            current, _, accepted = sa_step(rng, current, temp, cfg, X0, U, evaluate)
            if accepted:
                temp *= cfg.sa_cooling
        stall = 0 if incumbent["d"] < before else stall + 1

    if history and not np.isfinite(min(history)):
        raise SimulationError(f"every candidate failed to simulate: {failures[0] if failures else ''}")
    best = float(state["best"])
    return FalsificationResult(
        falsified=bool(best < 0),
        best_robustness=best,
        witness_x0=state["x0"] if state["x0"] is not None else model.nominal_x0(),
        witness_w=PiecewiseLinearSignal(grid, state["w"]) if state["w"] is not None else model.nominal_input(grid),
        num_sims=state["sims"],
        wall_time=time.perf_counter() - start,
        gd_invocations=gd_calls,
        lin_rhs_calls=lin_calls,
        method=cfg.method,
        seed=cfg.seed,
        stop_reason=reason,
        history=history,
        failures=failures,
    )


# --- experiments ------------------------------------------------------------


def run_seed(base_seed: int, run: int) -> int:
    """64-bit seed for run ``run``; every method gets the same seed for the same run."""
    return int(np.random.SeedSequence([base_seed, run]).generate_state(1, np.uint64)[0])


@dataclass
class ExperimentTable:
    runs: list[dict]
    aggregate: list[dict]
    results: list[FalsificationResult] = field(default_factory=list, repr=False)

    def write(self, runs_path, aggregate_path=None) -> None:
        write_csv(runs_path, RUN_COLUMNS, self.runs)
        if aggregate_path is not None:
            write_csv(aggregate_path, AGGREGATE_COLUMNS, self.aggregate)


def result_row(run_id: int, res: FalsificationResult) -> dict:
    return {
        "run_id": run_id,
        "method": res.method,
        "seed": res.seed,
        "falsified": int(res.falsified),
        "min_robustness": repr(float(res.best_robustness)),
        "num_sims": res.num_sims,
        "lin_rhs_calls": res.lin_rhs_calls,
        "gd_invocations": res.gd_invocations,
        "wall_time_s": repr(float(res.wall_time)),
    }


def aggregate(rows: Sequence[dict], methods: Sequence[str]) -> list[dict]:
    out = []
    for method in methods:
        sel = [r for r in rows if r["method"] == method]
        if not sel:
            continue
        out.append(
            {
                "method": method,
                "runs": len(sel),
                "falsifications": sum(int(r["falsified"]) for r in sel),
                "avg_min_robustness": repr(float(np.mean([float(r["min_robustness"]) for r in sel]))),
                "avg_wall_time_s": repr(float(np.mean([float(r["wall_time_s"]) for r in sel]))),
                "avg_num_sims": repr(float(np.mean([r["num_sims"] for r in sel]))),
            }
        )
    return out


def _one_run(args):
    model, phi, cfg = args
    return run_search(model, phi, cfg)


def run_experiment(
    model: ClosedLoopModel,
    phi,
    methods: Sequence[str],
    runs: int,
    base_seed: int,
    config: SearchConfig | None = None,
    jobs: int = 1,
    progress: Callable[[int, FalsificationResult], None] | None = None,
) -> ExperimentTable:
    """Run every method ``runs`` times; run ``k`` of each method shares the seed ``run_seed(base_seed, k)``."""
    if runs < 1:
        raise ValueError("need at least one run")
    phi = _as_formula(model, phi)
    config = config or SearchConfig()
    tasks = []
    for method in methods:
        for k in range(runs):
            tasks.append((k, replace(config, method=method, seed=run_seed(base_seed, k))))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_one_run, [(model, phi, cfg) for _, cfg in tasks]))
    else:
        results = []
        for k, cfg in tasks:
            results.append(run_search(model, phi, cfg))
            if progress is not None:
                progress(k, results[-1])
    rows = [result_row(k, res) for (k, _), res in zip(tasks, results)]
    return ExperimentTable(rows, aggregate(rows, methods), results)


def write_csv(path, columns: Sequence[str], rows: Sequence[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({c: row[c] for c in columns})
