#!/usr/bin/env python3
"""Relative error versus oversampling ratio (plot-ready CSV).

Sweeps n/p over a grid at fixed dimension and writes the raw per-trial rows
plus per-cell medians; the medians file has one row per (p, n/p, algorithm)
and plots directly as error-vs-oversampling curves.

Example:
    python scripts/error_vs_oversampling.py --p 100 --out bench_out
"""

import argparse

from lvggm.bench import BenchSpec, run_bench


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=100)
    ap.add_argument(
        "--ratios", type=float, nargs="+", default=[25, 50, 100, 200, 400]
    )
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--algos", nargs="+", default=["ep", "ap-bk"])
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--out", required=True)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    spec = BenchSpec(
        dims=[args.p],
        oversampling=list(args.ratios),
        trials=args.trials,
        algorithms=args.algos,
        master_seed=args.seed,
    )
    results, medians = run_bench(spec, args.out, workers=args.workers)
    print(results)
    print(medians)
    with open(medians, "r", encoding="utf-8") as fh:
        print(fh.read().strip())


if __name__ == "__main__":
    main()
