"""Compare engine metrics against the brute-force oracles over seeded random drills.

    python scripts/oracle_sweep.py [--seeds 200] [--start 0] [--tol 0.05] [--zero-noise]

For each seed the engine scores ground truth (must match the oracle within
1e-9) and the full pipeline scores the rendered detection stream (compared
against ``--tol``).  Prints per-metric error statistics and the worst cases.
Exits 1 on any ground-truth mismatch.
"""
from __future__ import annotations

import argparse
import sys
import time
from collections import defaultdict

import numpy as np

from ecr_analytics.config import METRIC_NAMES
from ecr_analytics.metrics import compute_all
from ecr_analytics.pipeline import analyze
from ecr_analytics.synthetic import NoiseModel, context_from_truth, oracle_all, random_scenario, render_scenario


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--start", type=int, default=0)
    ap.add_argument("--tol", type=float, default=0.05)
    ap.add_argument("--zero-noise", action="store_true", help="render without detector noise")
    ap.add_argument("--worst", type=int, default=10, help="worst noisy cases to list")
    args = ap.parse_args()

    t0 = time.perf_counter()
    truth_bad = []
    diffs = defaultdict(list)  # metric -> signed noisy - oracle
    worst = []
    for seed in range(args.start, args.start + args.seeds):
        s = random_scenario(seed, noise=NoiseModel.zero() if args.zero_noise else None)
        frames, gt = render_scenario(s)
        ref = oracle_all(gt, s.room)
        truth = {k: r.score for k, r in compute_all(context_from_truth(s, gt)).items()}
        noisy = {k: r.score for k, r in analyze(frames, s.room).results.items()}
        for k in METRIC_NAMES:
            if (truth[k] is None) != (ref[k] is None) or (ref[k] is not None and abs(truth[k] - ref[k]) > 1e-9):
                truth_bad.append((seed, k, truth[k], ref[k]))
            if ref[k] is None or noisy[k] is None:
                if (ref[k] is None) != (noisy[k] is None):
                    worst.append((float("inf"), seed, k, noisy[k], ref[k]))
                continue
            d = noisy[k] - ref[k]
            diffs[k].append(d)
            worst.append((abs(d), seed, k, noisy[k], ref[k]))

    print(f"{args.seeds} seeds in {time.perf_counter() - t0:.1f} s; ground-truth mismatches: {len(truth_bad)}")
    for row in truth_bad[:20]:
        print("  truth mismatch", row)
    print(f"{'metric':28s} {'n':>4s} {'mean':>8s} {'max|d|':>8s} {'>tol':>5s}")
    for k in METRIC_NAMES:
        d = np.array(diffs[k])
        if len(d) == 0:
            print(f"{k:28s} {0:4d}")
            continue
        print(f"{k:28s} {len(d):4d} {d.mean():+8.4f} {np.abs(d).max():8.4f} {(np.abs(d) > args.tol).sum():5d}")
    worst.sort(key=lambda w: -w[0])
    print("worst noisy cases (|d|, seed, metric, engine, oracle):")
    for w in worst[:args.worst]:
        print("  ", w)
    return 1 if truth_bad else 0


if __name__ == "__main__":
    sys.exit(main())
