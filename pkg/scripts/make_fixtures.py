"""Regenerate the shipped fixture corpus under fixtures/.

    python scripts/make_fixtures.py [--check]

Writes one scenario script per shipped scenario, a toy roll-up hierarchy, a
demo run manifest, and expected-output files holding the oracle metric
scores, the tracker's identity-switch count and a digest of the rendered
detection stream.  With ``--check`` nothing is written; the script exits 1
if any file would change.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys

from ecr_analytics.ingest import dump_frames
from ecr_analytics.synthetic import SHIPPED, oracle_all, oracle_track_assignment, render_scenario

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), os.pardir, "fixtures")

TOY_HIERARCHY = {
    "nodes": [
        {"id": "root", "name": "Team", "level": 0, "children": [{"id": "move", "weight": 1.0},
                                                               {"id": "look", "weight": 3.0}]},
        {"id": "move", "name": "Movement", "level": 1, "children": [{"id": "entrance_vectors", "weight": 1.0},
                                                                   {"id": "move_along_wall", "weight": 1.0}]},
        {"id": "look", "name": "Looking", "level": 1, "children": [{"id": "threat_coverage", "weight": 2.0},
                                                                  {"id": "floor_coverage", "weight": 1.0}]},
        {"id": "entrance_vectors", "name": "Entrance Vectors", "level": 4, "metric": "entrance_vectors"},
        {"id": "move_along_wall", "name": "Move Along the Wall", "level": 4, "metric": "move_along_wall"},
        {"id": "threat_coverage", "name": "Threat Coverage", "level": 4, "metric": "threat_coverage"},
        {"id": "floor_coverage", "name": "Floor Coverage", "level": 4, "metric": "floor_coverage"},
    ],
    "smoothing": {"alpha_ceil": 1.0, "half_life": 1.0, "smooth_leaves": True},
    "bands": {"above_min": 0.8, "at_min": 0.5},
}

# three trials of leaf scores for the toy tree; trial 2 lacks threat coverage
TOY_TRIALS = [
    {"entrance_vectors": 1.0, "move_along_wall": 0.5, "threat_coverage": 0.25, "floor_coverage": 1.0},
    {"entrance_vectors": 0.0, "move_along_wall": 1.0, "threat_coverage": None, "floor_coverage": 0.5},
    {"entrance_vectors": 1.0, "move_along_wall": 1.0, "threat_coverage": 1.0, "floor_coverage": 1.0},
]

DEMO_MANIFEST = {
    "out_dir": "../build/demo",
    "stages": ["synth", "analyze", "rollup", "report"],
    "label": "demo-team",
    "trials": [
        {"label": "trial1", "scenario": "scenarios/pathological.json", "seed": 11},
        {"label": "trial2", "scenario": "scenarios/perfect_doctrine.json", "seed": 7},
    ],
}


def _dump(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def build() -> dict[str, str]:
    files = {}
    for name, make in SHIPPED.items():
        script = make()
        files[f"scenarios/{name}.json"] = script.to_json() + "\n"
        frames, gt = render_scenario(script)
        files[f"expected/{name}.json"] = _dump({
            "scenario": name,
            "num_frames": gt.num_frames,
            "detections_sha256": hashlib.sha256(dump_frames(frames).encode()).hexdigest(),
            "identity_switches": oracle_track_assignment(frames, gt, script.room.tracker),
            "oracle_scores": oracle_all(gt, script.room),
        })
    files["hierarchy_toy.json"] = _dump(TOY_HIERARCHY)
    for i, trial in enumerate(TOY_TRIALS, start=1):
        files[f"toy_trials/trial{i}.json"] = _dump({"trial": f"trial{i}", "metrics": trial})
    files["demo_manifest.json"] = _dump(DEMO_MANIFEST)
    return files


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--check", action="store_true", help="report drift instead of writing")
    args = ap.parse_args()
    stale = []
    for rel, text in sorted(build().items()):
        path = os.path.normpath(os.path.join(ROOT, rel))
        old = open(path, encoding="utf-8").read() if os.path.exists(path) else None
        if old == text:
            continue
        stale.append(rel)
        if not args.check:
            os.makedirs(os.path.dirname(path), exist_ok=True)
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
    verb = "stale" if args.check else "wrote"
    for rel in stale:
        print(f"{verb} {rel}")
    return 1 if args.check and stale else 0


if __name__ == "__main__":
    sys.exit(main())
