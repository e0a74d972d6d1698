"""Fuzz the full pipeline with seeded random drills and check range closure.

    python scripts/fuzz.py [--count 500] [--start 10000]

Every applicable score must lie in [0, 1] and no trajectory, gaze triangle,
metric detail or roll-up value may be NaN or infinite.  Exits 1 on any
violation and prints the offending seeds.
"""
from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from ecr_analytics.pipeline import analyze
from ecr_analytics.rollup import default_hierarchy, run_rollup
from ecr_analytics.synthetic import random_scenario, render_scenario


def check(seed: int) -> list[str]:
    s = random_scenario(seed)
    frames, _ = render_scenario(s)
    an = analyze(frames, s.room)
    problems = [f"{k}={r.score}" for k, r in an.results.items() if r.score is not None and not 0 <= r.score <= 1]
    for tid, traj in an.trajectories.items():
        for smp in traj:
            if not np.isfinite(smp.map_position).all():
                problems.append(f"track {tid} frame {smp.frame_index} position")
    for tid, recs in an.gaze.items():
        for f, g in recs.items():
            tris = [g.image_triangle] + ([] if g.map_triangle is None else [g.map_triangle])
            if not all(np.isfinite(t).all() for t in tris):
                problems.append(f"gaze {tid} frame {f}")
    sheet = run_rollup(default_hierarchy(), [{k: r.score for k, r in an.results.items()}])
    try:
        json.dumps([r.to_dict() for r in an.results.values()], allow_nan=False)
        json.dumps(sheet.to_dict(), allow_nan=False)
    except ValueError:
        problems.append("non-finite value in metric or roll-up output")
    return problems


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--count", type=int, default=500)
    ap.add_argument("--start", type=int, default=10_000)
    args = ap.parse_args()
    t0 = time.perf_counter()
    failed = 0
    for seed in range(args.start, args.start + args.count):
        problems = check(seed)
        if problems:
            failed += 1
            print(f"seed {seed}: {', '.join(problems[:5])}")
    print(f"{args.count} scenarios, {failed} with violations, {time.perf_counter() - t0:.1f} s")
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
