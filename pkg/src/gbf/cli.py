"""Command line: ``gbf falsify | monitor | replay | models``.

Exit codes: 0 falsified, 1 not falsified, 2 configuration error, 3 replay mismatch.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from gbf.adjoint import LocalSearchOptions
from gbf.benchmarks import available_models, builtin_model, load_model_file
from gbf.model import ClosedLoopModel, SimulationError, simulate
from gbf.networks import NetworkFormatError
from gbf.result import FalsificationResult
from gbf.search import METHODS, SearchConfig, initial_input, run_experiment, run_search
from gbf.signals import PiecewiseLinearSignal, TimeGrid, Trajectory
from gbf.stl import MonitorError, ParseError, parse_formula, robustness

EXIT_FALSIFIED, EXIT_NOT_FALSIFIED, EXIT_CONFIG, EXIT_MISMATCH = 0, 1, 2, 3
REPLAY_TOL = 1e-9


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    """Everything needed to repeat a ``falsify`` run; written as ``<out stem>_run_config.json``."""

    model: str | None = None
    model_file: str | None = None
    spec: str | None = None
    spec_file: str | None = None
    method: str = "ur+gd"
    seed: int = 0
    runs: int = 1
    max_sims: int = 600
    time_limit: float = 60.0
    w_init: str = "nominal"
    out: str = "gbf-out/results.csv"
    jobs: int = 1
    stall_trigger: int | None = None
    c_max: int = 5
    control_points: int = 10
    sa_temp_init: float | None = None
    sa_cooling: float = 0.95
    sa_scale: float = 0.1
    local: dict = field(default_factory=lambda: asdict(LocalSearchOptions()))

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict) -> RunConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown run-config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**data)
        local_known = {f.name for f in fields(LocalSearchOptions)}
        bad = set(cfg.local) - local_known
        if bad:
            raise ConfigError(f"unknown local-search options: {', '.join(sorted(bad))}")
        cfg.local = {**asdict(LocalSearchOptions()), **cfg.local}
        return cfg

    @classmethod
    def load(cls, path) -> RunConfig:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except (OSError, json.JSONDecodeError, TypeError) as e:
            raise ConfigError(f"cannot read run config {path}: {e}") from e

    def search_config(self, method: str | None = None, seed: int | None = None) -> SearchConfig:
        return SearchConfig(
            method=method or self.method,
            seed=self.seed if seed is None else seed,
            max_sims=self.max_sims,
            time_limit=self.time_limit,
            stall_trigger=self.stall_trigger,
            c_max=self.c_max,
            control_points=self.control_points,
            sa_temp_init=self.sa_temp_init,
            sa_cooling=self.sa_cooling,
            sa_scale=self.sa_scale,
            w_init=self.w_init,
            local=LocalSearchOptions(**self.local),
        )

    @property
    def methods(self) -> list[str]:
        return [m.strip() for m in self.method.split(",") if m.strip()]


# --- shared helpers ---------------------------------------------------------


def resolve_model(model: str | None, model_file: str | None) -> ClosedLoopModel:
    if model and model_file:
        raise ConfigError("give either --model or --model-file, not both")
    try:
        if model_file:
            return load_model_file(model_file)
        return builtin_model(model or "condenser-surrogate")
    except FileNotFoundError as e:
        raise ConfigError(f"model file not found: {e.filename}") from e
    except (ValueError, KeyError, NetworkFormatError, json.JSONDecodeError) as e:
        raise ConfigError(str(e)) from e


def resolve_spec(model: ClosedLoopModel | None, spec: str | None, spec_file: str | None) -> str:
    if spec and spec_file:
        raise ConfigError("give either --spec or --spec-file, not both")
    if spec_file:
        try:
            return Path(spec_file).read_text().strip()
        except OSError as e:
            raise ConfigError(f"cannot read spec file {spec_file}: {e.strerror}") from e
    if spec:
        return spec
    if model is not None and model.spec:
        return model.spec
    raise ConfigError("no specification given and the model has no default")


def _parse(text: str, names, plant_dim=None):
    try:
        return parse_formula(text, names=names, plant_dim=plant_dim)
    except (ParseError, MonitorError, ValueError) as e:
        raise ConfigError(f"specification error: {e}") from e


def _fmt(v: float) -> str:
    return repr(float(v))


def _write_rows(path: Path, header: list[str], rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _read_matrix(path: Path) -> tuple[list[str], np.ndarray]:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigError(f"{path} has no data rows")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from e
    if data.ndim != 2 or data.shape[1] != len(rows[0]):
        raise ConfigError(f"{path}: ragged rows")
    return rows[0], data


def _state_names(model: ClosedLoopModel) -> list[str]:
    plant = [f"x{i + 1}" if i != model.clock_index else "t_clock" for i in range(model.plant_dim)]
    return plant + [f"nn{j + 1}" for j in range(model.nn_dim)]


# --- witnesses --------------------------------------------------------------


def write_witness(
    directory: Path, model: ClosedLoopModel, cfg: RunConfig, spec: str, res: FalsificationResult, run_id: int
) -> Path:
    """Store ``x0.csv``, ``w.csv``, ``trajectory.csv`` and ``witness.json`` for one run."""
    directory.mkdir(parents=True, exist_ok=True)
    w = res.witness_w
    traj = simulate(model, res.witness_x0, w).trajectory
    grid = w.grid
    _write_rows(directory / "x0.csv", [f"x{i + 1}" for i in range(model.plant_dim)], [res.witness_x0])
    _write_rows(
        directory / "w.csv", ["t"] + [f"w{j + 1}" for j in range(model.input_dim)],
        np.column_stack([grid.nodes, w.values]),
    )
    _write_rows(directory / "trajectory.csv", ["t"] + _state_names(model), np.column_stack([grid.nodes, traj.states]))
    meta = {
        "model": cfg.model,
        "model_file": str(Path(cfg.model_file).resolve()) if cfg.model_file else None,
        "spec": spec,
        "method": res.method,
        "seed": res.seed,
        "run_id": run_id,
        "falsified": res.falsified,
        "robustness": _fmt(res.best_robustness),
        "horizon": _fmt(grid.T),
        "step": _fmt(grid.step),
        "num_sims": res.num_sims,
        "stop_reason": res.stop_reason,
    }
    (directory / "witness.json").write_text(json.dumps(meta, indent=2))
    return directory


def load_witness(path) -> tuple[dict, np.ndarray, PiecewiseLinearSignal]:
    path = Path(path)
    directory = path.parent if path.is_file() else path
    try:
        meta = json.loads((directory / "witness.json").read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read witness metadata in {directory}: {e}") from e
    _, x0 = _read_matrix(directory / "x0.csv")
    _, wmat = _read_matrix(directory / "w.csv")
    grid = TimeGrid(float(meta["horizon"]), float(meta["step"]))
    if wmat.shape[0] != grid.size or np.any(wmat[:, 0] != grid.nodes):
        raise ConfigError("witness input is not sampled on the recorded grid")
    return meta, x0[0], PiecewiseLinearSignal(grid, wmat[:, 1:])


# --- subcommands ------------------------------------------------------------


def _run_config_from_args(args) -> RunConfig:
    if args.config:
        cfg = RunConfig.load(args.config)
        return cfg
    local = asdict(LocalSearchOptions())
    for key in ("h0", "c", "max_iters", "tol_d", "tol_x", "num_lin_samples"):
        val = getattr(args, key)
        if val is not None:
            local[key] = val
    return RunConfig(
        model=args.model if not args.model_file else None,
        model_file=args.model_file,
        spec=args.spec,
        spec_file=args.spec_file,
        method=args.method,
        seed=args.seed,
        runs=args.runs,
        max_sims=args.max_sims,
        time_limit=args.time_limit,
        w_init=args.w_init,
        out=args.out,
        jobs=args.jobs,
        stall_trigger=args.stall_trigger,
        c_max=args.c_max,
        control_points=args.control_points,
        local=local,
    )


def cmd_falsify(args) -> int:
    cfg = _run_config_from_args(args)
    if cfg.model is None and cfg.model_file is None:
        cfg.model = "condenser-surrogate"
    model = resolve_model(cfg.model, cfg.model_file)
    spec = resolve_spec(model, cfg.spec, cfg.spec_file)
    phi = _parse(spec, model.names, model.plant_dim)
    methods = cfg.methods
    for m in methods:
        if m not in METHODS:
            raise ConfigError(f"unknown method {m!r}; expected one of {', '.join(METHODS)}")
    if cfg.runs < 1:
        raise ConfigError("--runs must be at least 1")
    try:
        initial_input(model, cfg.w_init)
    except ValueError as e:
        raise ConfigError(str(e)) from e

    out = Path(cfg.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stem = out.with_suffix("")
    Path(f"{stem}_run_config.json").write_text(cfg.to_json() + "\n")

    if cfg.runs == 1 and len(methods) == 1:
        res = run_search(model, phi, cfg.search_config(methods[0]))
        from gbf.search import ExperimentTable, aggregate, result_row

        rows = [result_row(0, res)]
        table = ExperimentTable(rows, aggregate(rows, methods), [res])
        run_ids = [0]
    else:
        table = run_experiment(model, phi, methods, cfg.runs, cfg.seed, cfg.search_config(methods[0]), jobs=cfg.jobs)
        run_ids = [int(r["run_id"]) for r in table.runs]
    table.write(out, Path(f"{stem}_aggregate.csv"))

    for run_id, res in zip(run_ids, table.results):
        write_witness(Path(f"{stem}_witnesses") / f"{res.method}-run{run_id:03d}", model, cfg, spec, res, run_id)

    for row in table.aggregate:
        print(
            f"{row['method']}: falsified {row['falsifications']}/{row['runs']}, "
            f"avg min robustness {row['avg_min_robustness']}, avg sims {row['avg_num_sims']}, "
            f"avg time {float(row['avg_wall_time_s']):.2f}s"
        )
    print(f"results: {out}")
    return EXIT_FALSIFIED if any(r.falsified for r in table.results) else EXIT_NOT_FALSIFIED


def cmd_monitor(args) -> int:
    path = Path(args.trace)
    if not path.exists():
        raise ConfigError(f"trace file not found: {path}")
    header, data = _read_matrix(path)
    if header[0].strip() != "t":
        raise ConfigError("first trace column must be 't'")
    t = data[:, 0]
    if len(t) < 2:
        raise ConfigError("trace needs at least two samples")
    steps = np.diff(t)
    if t[0] != 0.0 or np.any(steps <= 0) or np.ptp(steps) > 1e-9 * max(1.0, t[-1]):
        raise ConfigError("trace times must start at 0 and be uniformly spaced")
    try:
        grid = TimeGrid(float(t[-1]), float(t[-1]) / (len(t) - 1))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    names = {name.strip(): i for i, name in enumerate(header[1:])}
    spec = resolve_spec(None, args.spec, args.spec_file)
    phi = _parse(spec, names)
    traj = Trajectory(grid, data[:, 1:], data.shape[1] - 1)
    try:
        cert = robustness(phi, traj)
    except MonitorError as e:
        raise ConfigError(str(e)) from e
    print(f"robustness {_fmt(cert.robustness)}")
    print(f"critical_time {_fmt(cert.critical_time)}")
    print(f"critical_predicate {cert.critical_predicate}")
    print("critical_point " + " ".join(_fmt(v) for v in cert.critical_point))
    return EXIT_FALSIFIED if cert.robustness < 0 else EXIT_NOT_FALSIFIED


def replay_witness(path, refine: int | None = None, out_dir=None) -> tuple[float, float, float | None]:
    """Re-simulate a stored witness; returns ``(recorded, replayed, refined or None)``."""
    meta, x0, w = load_witness(path)
    model = resolve_model(meta.get("model"), meta.get("model_file"))
    phi = _parse(meta["spec"], model.names, model.plant_dim)
    traj = simulate(model, x0, w, w.grid).trajectory
    replayed = robustness(phi, traj).robustness
    refined = None
    if refine is not None and refine > 1:
        fine = TimeGrid(w.grid.T, w.grid.step / refine)
        w_fine = PiecewiseLinearSignal(fine, np.array([w(t) for t in fine.nodes]))
        refined = robustness(phi, simulate(model, x0, w_fine, fine).trajectory).robustness
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        names = _state_names(model)
        _write_rows(out_dir / "replay_trajectory.csv", ["t"] + names, np.column_stack([w.grid.nodes, traj.states]))
        plant_cols = [i for i in range(model.plant_dim) if i != model.clock_index]
        _write_rows(
            out_dir / "plot_data.csv",
            ["t"] + [f"w{j + 1}" for j in range(model.input_dim)] + [names[i] for i in plant_cols],
            np.column_stack([w.grid.nodes, w.values, traj.states[:, plant_cols]]),
        )
    return float(meta["robustness"]), replayed, refined


def cmd_replay(args) -> int:
    recorded, replayed, refined = replay_witness(args.witness, args.refine, args.out or Path(args.witness))
    print(f"recorded {_fmt(recorded)}")
    print(f"replayed {_fmt(replayed)}")
    if refined is not None:
        print(f"refined  {_fmt(refined)} (step / {args.refine}, difference {_fmt(refined - replayed)})")
    if not abs(replayed - recorded) <= REPLAY_TOL:
        print(f"mismatch: |replayed - recorded| = {abs(replayed - recorded)!r} > {REPLAY_TOL}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_FALSIFIED if replayed < 0 else EXIT_NOT_FALSIFIED


def cmd_models(args) -> int:
    for name in available_models():
        model = builtin_model(name)
        print(f"{name}: {model.description or 'no description'}")
        if model.spec:
            print(f"    spec: {model.spec}")
    return 0


# --- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gbf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("falsify", help="search for a falsifying input")
    f.add_argument("--config", help="repeat a run from a stored run_config.json")
    f.add_argument("--model")
    f.add_argument("--model-file")
    f.add_argument("--spec")
    f.add_argument("--spec-file")
    f.add_argument("--method", default="ur+gd", help="one of ur, sa, ur+gd, sa+gd, gd (comma-separated for several)")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--runs", type=int, default=1)
    f.add_argument("--max-sims", type=int, default=600)
    f.add_argument("--time-limit", type=float, default=60.0)
    f.add_argument("--w-init", default="nominal", help="zero, nominal, const:<v> or random (gd method)")
    f.add_argument("--out", default="gbf-out/results.csv")
    f.add_argument("--jobs", type=int, default=1)
    f.add_argument("--stall-trigger", type=int)
    f.add_argument("--c-max", type=int, default=5)
    f.add_argument("--control-points", type=int, default=10)
    f.add_argument("--h0", type=float)
    f.add_argument("--c", type=float)
    f.add_argument("--max-iters", type=int)
    f.add_argument("--tol-d", type=float)
    f.add_argument("--tol-x", type=float)
    f.add_argument("--num-lin-samples", type=int)
    f.set_defaults(func=cmd_falsify)

    m = sub.add_parser("monitor", help="robustness of a trace CSV")
    m.add_argument("trace")
    m.add_argument("--spec")
    m.add_argument("--spec-file")
    m.set_defaults(func=cmd_monitor)

    r = sub.add_parser("replay", help="re-simulate a witness and check its robustness")
    r.add_argument("witness", help="witness directory (or its witness.json)")
    r.add_argument("--refine", type=int, help="also monitor on a grid with step / REFINE")
    r.add_argument("--out", help="directory for replay_trajectory.csv and plot_data.csv (default: the witness)")
    r.set_defaults(func=cmd_replay)

    ls = sub.add_parser("models", help="list built-in models")
    ls.set_defaults(func=cmd_models)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except MonitorError as e:
        print(f"specification error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
