"""Monte-Carlo benchmark harness.

Runs a (dims x oversampling x algorithm x trial) grid of synthetic
experiments, one CSV row per run, plus an aggregated medians file for
error-versus-oversampling curves.  All randomness derives from the master
seed: the model seed depends on ``(p, trial)`` so every algorithm and every
sample size sees the same ground truth within a trial, and the covariance
seed additionally depends on ``n``.
"""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .baseline import AdmmConfig, admm_lvglasso, admm_objective
from .datagen import GenParams, gen_model, sample_covariance
from .objective import ModelContext, nll
from .projections import ProjectionConfig
from .solvers import DivergedError, SolverConfig, ap_lvm, ep_lvm

ALGORITHMS = ("ep", "ap-bk", "ap-lanczos", "admm")

RESULTS_HEADER = (
    "p,oversampling,algo,trial,status,rel_error,final_nll,true_nll,nll_gap,"
    "seconds,mean_iter_seconds,iterations,rank"
)
MEDIANS_HEADER = (
    "p,oversampling,algo,trials,median_rel_error,median_nll_gap,"
    "median_seconds,median_rank"
)

# Relative grid of (l1, nuclear) weight multipliers for the ADMM comparator;
# weights are manually-tuned in the reference experiments, so the harness
# searches this small grid and keeps the best-error configuration.
ADMM_L1_GRID = (0.25, 1.0, 4.0)
ADMM_NUCLEAR_GRID = (0.25, 1.0, 4.0)


@dataclass
class BenchSpec:
    """Benchmark grid description (JSON-serializable)."""

    dims: list
    oversampling: list
    trials: int = 5
    algorithms: list = field(default_factory=lambda: ["ep"])
    master_seed: int = 0
    rank: object = "auto"
    max_iters: int = 600
    use_true_nll_floor: bool = True
    diag_range: tuple = (1.0, 2.0)
    spectral_norm: float = 1.0

    def __post_init__(self):
        if not self.dims or any(int(p) < 2 for p in self.dims):
            raise ValueError("dims must be non-empty with all p >= 2")
        if not self.oversampling or any(float(x) <= 0 for x in self.oversampling):
            raise ValueError("oversampling ratios must be positive")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if not self.algorithms:
            raise ValueError("algorithm list must not be empty")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ValueError(f"unknown algorithms: {sorted(unknown)}")

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(payload) - known
        if extra:
            raise ValueError(f"unknown bench spec fields: {sorted(extra)}")
        if "diag_range" in payload:
            payload["diag_range"] = tuple(payload["diag_range"])
        return cls(**payload)


def derived_seed(master, *salts):
    ss = np.random.SeedSequence([int(master) & (2**64 - 1), *map(int, salts)])
    return int(ss.generate_state(1, np.uint64)[0])


def _resolve_rank(spec, p):
    return int(math.ceil(0.05 * p)) if spec.rank == "auto" else int(spec.rank)


def _solver_config(spec, r, algo, seed):
    backend = "lanczos" if algo == "ap-lanczos" else "block-krylov"
    return SolverConfig(
        rank=r,
        max_iters=spec.max_iters,
        projection=ProjectionConfig(seed=seed, backend=backend),
    )


def tune_admm(C, n, truth=None, max_iters=300):
    """Grid-search ADMM weights; keep the best configuration.

    With a known truth the selection minimizes relative error (the most
    favorable treatment for the comparator); otherwise it minimizes the
    regularized objective at the mid-grid weights.
    """
    p = C.shape[0]
    base_l1 = math.sqrt(math.log(p) / n)
    base_nuc = math.sqrt(p / n)
    best = None
    ref_cfg = AdmmConfig(l1_weight=base_l1, nuclear_weight=base_nuc)
    truth_norm = None if truth is None else float(np.linalg.norm(truth, "fro"))
    for a in ADMM_L1_GRID:
        for b in ADMM_NUCLEAR_GRID:
            cfg = AdmmConfig(
                l1_weight=a * base_l1,
                nuclear_weight=b * base_nuc,
                max_iters=max_iters,
            )
            S_hat, L_hat, trace = admm_lvglasso(C, cfg)
            if truth is not None:
                score = float(np.linalg.norm(L_hat - truth, "fro")) / max(
                    truth_norm, 1e-300
                )
            else:
                score = admm_objective(C, S_hat, L_hat, ref_cfg)
            if best is None or score < best[0]:
                best = (score, S_hat, L_hat, trace, cfg)
    return best[1], best[2], best[3], best[4]


def _effective_rank(L, rel_tol=1e-8):
    w = np.abs(np.linalg.eigvalsh((L + L.T) / 2.0))
    lam1 = float(w.max()) if w.size else 0.0
    if lam1 == 0.0:
        return 0
    return int(np.sum(w > rel_tol * lam1))


def run_single(spec, p, ratio, algo, trial):
    """One benchmark cell; returns a result-row dict (never raises)."""
    row = {
        "p": p,
        "oversampling": ratio,
        "algo": algo,
        "trial": trial,
        "status": "ok",
        "rel_error": float("nan"),
        "final_nll": float("nan"),
        "true_nll": float("nan"),
        "nll_gap": float("nan"),
        "seconds": float("nan"),
        "mean_iter_seconds": float("nan"),
        "iterations": 0,
        "rank": 0,
    }
    try:
        r = _resolve_rank(spec, p)
        n = int(round(ratio * p))
        model = gen_model(
            p, r, seed=derived_seed(spec.master_seed, 1, p, trial),
            params=GenParams(spec.diag_range, spec.spectral_norm),
        )
        C = sample_covariance(
            model, n, seed=derived_seed(spec.master_seed, 2, p, n, trial)
        )
        ctx = ModelContext.create(model.S_star, C, validate_psd=False)
        true_nll = nll(ctx, model.L_factor)
        row["true_nll"] = true_nll
        L_true = model.L_star
        true_norm = float(np.linalg.norm(L_true, "fro"))

        if algo == "admm":
            tic = time.perf_counter()
            _, L_hat, trace, _ = tune_admm(C, n, truth=L_true)
            row["seconds"] = time.perf_counter() - tic
            row["iterations"] = trace.iterations
            row["mean_iter_seconds"] = row["seconds"] / max(trace.iterations, 1)
            row["rank"] = _effective_rank(L_hat)
            row["final_nll"] = nll(ctx, L_hat)
            row["rel_error"] = float(np.linalg.norm(L_hat - L_true, "fro")) / true_norm
        else:
            cfg = _solver_config(
                spec, r, algo, derived_seed(spec.master_seed, 3, p, n, trial)
            )
            if spec.use_true_nll_floor:
                cfg.true_nll_floor = true_nll
            solver = ep_lvm if algo == "ep" else ap_lvm
            est, trace = solver(ctx, cfg, truth=model.L_factor)
            row["final_nll"] = trace.nll[-1]
            row["rel_error"] = trace.rel_error[-1]
            row["iterations"] = len(trace)
            row["seconds"] = float(np.sum(trace.seconds))
            per_iter = trace.seconds[1:] if len(trace) > 1 else trace.seconds
            row["mean_iter_seconds"] = float(np.mean(per_iter))
            row["rank"] = est.effective_rank()
        row["nll_gap"] = row["final_nll"] - true_nll
    except DivergedError:
        row["status"] = "diverged"
    except Exception as exc:  # per-run failures become rows, harness continues
        row["status"] = f"failed:{type(exc).__name__}"
    return row


def _run_cell(args):
    return run_single(*args)


def worker_count():
    env = os.environ.get("LVGGM_WORKERS", "")
    try:
        return max(1, int(env))
    except ValueError:
        return 1


def run_bench(spec, out_dir, workers=None):
    """Execute the grid; write ``results.csv`` and ``medians.csv``.

    Rows are collected order-independently, then sorted, so results are
    reproducible for a fixed spec and master seed (timing columns exempt).
    """
    os.makedirs(out_dir, exist_ok=True)
    cells = [
        (spec, int(p), float(ratio), algo, trial)
        for p in spec.dims
        for ratio in spec.oversampling
        for algo in spec.algorithms
        for trial in range(spec.trials)
    ]
    workers = worker_count() if workers is None else max(1, workers)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [run_single(*cell) for cell in cells]
    rows.sort(key=lambda r: (r["p"], r["oversampling"], r["algo"], r["trial"]))

    results_path = os.path.join(out_dir, "results.csv")
    with open(results_path, "w", encoding="utf-8") as fh:
        fh.write(RESULTS_HEADER + "\n")
        for r in rows:
            fh.write(
                f"{r['p']},{r['oversampling']:.17g},{r['algo']},{r['trial']},"
                f"{r['status']},{r['rel_error']:.17g},{r['final_nll']:.17g},"
                f"{r['true_nll']:.17g},{r['nll_gap']:.17g},{r['seconds']:.6f},"
                f"{r['mean_iter_seconds']:.6f},{r['iterations']},{r['rank']}\n"
            )

    medians_path = os.path.join(out_dir, "medians.csv")
    groups = {}
    for r in rows:
        groups.setdefault((r["p"], r["oversampling"], r["algo"]), []).append(r)
    with open(medians_path, "w", encoding="utf-8") as fh:
        fh.write(MEDIANS_HEADER + "\n")
        for (p, ratio, algo), members in sorted(groups.items()):
            ok = [m for m in members if m["status"] == "ok"]
            if ok:
                med = lambda key: float(np.median([m[key] for m in ok]))
                fh.write(
                    f"{p},{ratio:.17g},{algo},{len(ok)},{med('rel_error'):.17g},"
                    f"{med('nll_gap'):.17g},{med('seconds'):.6f},"
                    f"{med('rank'):.17g}\n"
                )
            else:
                fh.write(f"{p},{ratio:.17g},{algo},0,nan,nan,nan,nan\n")
    return results_path, medians_path
