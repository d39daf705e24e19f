#!/usr/bin/env python3
"""Algorithm comparison table on synthetic data.

Reproduces the desk-scale comparison experiment: for a fixed dimension and
oversampling ratio, runs each solver on matched instances over several
Monte-Carlo trials and prints median relative error, per-iteration and total
time, output rank, and the NLL gap to the truth.

Example:
    python scripts/table_comparison.py --p 100 --ratio 400 --trials 5
    python scripts/table_comparison.py --p 1000 --ratio 50 --trials 1
"""

import argparse

import numpy as np

from lvggm.bench import BenchSpec, run_single


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p", type=int, default=100)
    ap.add_argument("--ratio", type=float, default=400.0, help="n/p oversampling")
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument(
        "--algos", nargs="+", default=["ep", "ap-bk", "ap-lanczos", "admm"]
    )
    args = ap.parse_args()

    spec = BenchSpec(
        dims=[args.p],
        oversampling=[args.ratio],
        trials=args.trials,
        algorithms=args.algos,
        master_seed=args.seed,
    )
    print(
        f"p={args.p}, n={int(args.ratio * args.p)} (n/p={args.ratio:g}), "
        f"{args.trials} trial(s), master seed {args.seed}"
    )
    header = (
        f"{'alg':12s} {'rel_error':>12s} {'iter_time_s':>12s} "
        f"{'total_s':>10s} {'rank':>5s} {'nll_gap':>12s}"
    )
    print(header)
    print("-" * len(header))
    for algo in args.algos:
        rows = [
            run_single(spec, args.p, args.ratio, algo, t)
            for t in range(args.trials)
        ]
        ok = [r for r in rows if r["status"] == "ok"]
        if not ok:
            print(f"{algo:12s} all trials failed")
            continue
        med = lambda k: float(np.median([r[k] for r in ok]))
        print(
            f"{algo:12s} {med('rel_error'):12.6e} {med('mean_iter_seconds'):12.6e} "
            f"{med('seconds'):10.3f} {med('rank'):5.0f} {med('nll_gap'):12.4e}"
        )


if __name__ == "__main__":
    main()
