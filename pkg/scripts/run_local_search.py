"""Pure gradient local search on the two case studies.

FNN plant from w = 0, and the condenser surrogate from the lower bound,
midpoint and upper bound of the input box. Prints robustness before and after
and writes one witness directory per run (replayable with ``gbf replay``).

    python3 scripts/run_local_search.py [--out results/local_search]
"""

from __future__ import annotations

import argparse
from pathlib import Path

from gbf.adjoint import local_search
from gbf.benchmarks import builtin_model
from gbf.cli import RunConfig, write_witness
from gbf.signals import PiecewiseLinearSignal


def run(name, w0, out: Path, run_id: int):
    model = builtin_model(name)
    res = local_search(model, model.spec, model.nominal_x0(), PiecewiseLinearSignal.constant(model.grid, w0))
    d = write_witness(out / f"{name}-w{w0:g}", model, RunConfig(model=name), model.spec, res, run_id)
    print(
        f"{name:20s} w0={w0:<6g} d {res.history[0]:+.6g} -> {res.best_robustness:+.6g} "
        f"({res.iterations} iterations, {res.num_sims} sims, {res.stop_reason}) -> {d}"
    )


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results/local_search"))
    args = ap.parse_args(argv)
    run("fnn-nonlinear", 0.0, args.out, 0)
    for k, w0 in enumerate((3.99, 4.0, 4.01)):
        run("condenser-surrogate", w0, args.out, k)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
