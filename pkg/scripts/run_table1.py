"""Falsification comparison on the condenser surrogate: UR, SA, UR+GD and SA+GD.

Every method gets the same seeds, the same 600-simulation budget and a 60 s
wall-clock limit per run. Writes per-run and aggregate CSVs.

    python3 scripts/run_table1.py [--runs 20] [--seed 1] [--jobs 1] [--out results/table1.csv]
"""

from __future__ import annotations

import argparse
import time
from pathlib import Path

from gbf.benchmarks import builtin_model
from gbf.search import SearchConfig, run_experiment


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--model", default="condenser-surrogate")
    ap.add_argument("--methods", default="ur,sa,ur+gd,sa+gd")
    ap.add_argument("--runs", type=int, default=20)
    ap.add_argument("--seed", type=int, default=1)
    ap.add_argument("--max-sims", type=int, default=600)
    ap.add_argument("--time-limit", type=float, default=60.0)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results/table1.csv"))
    args = ap.parse_args(argv)

    model = builtin_model(args.model)
    methods = [m.strip() for m in args.methods.split(",")]
    cfg = SearchConfig(max_sims=args.max_sims, time_limit=args.time_limit)

    def progress(k, res):
        print(f"  {res.method:6s} run {k:3d}: d = {res.best_robustness:+.6f} sims {res.num_sims:4d} gd {res.gd_invocations}")

    start = time.perf_counter()
    table = run_experiment(model, model.spec, methods, args.runs, args.seed, cfg, jobs=args.jobs, progress=progress)
    table.write(args.out, args.out.with_name(args.out.stem + "_aggregate.csv"))

    print(f"\n{'method':8s} {'falsified':>10s} {'avg min d':>12s} {'avg sims':>9s} {'avg time':>9s}")
    for row in table.aggregate:
        print(
            f"{row['method']:8s} {row['falsifications']:>4d}/{row['runs']:<5d} {float(row['avg_min_robustness']):12.6f} "
            f"{float(row['avg_num_sims']):9.1f} {float(row['avg_wall_time_s']):8.2f}s"
        )
    print(f"total {time.perf_counter() - start:.0f}s; results in {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
