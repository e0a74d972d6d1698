"""Shared builders for hand-made detections, rooms and metric contexts."""
from __future__ import annotations

import json

import numpy as np
import pytest

from ecr_analytics.ingest import Detection, room_config_from_dict

SCALE = 100.0  # pixels per meter in the toy room


def keypoints_at(x: float, y: float, conf: float = 0.9) -> np.ndarray:
    """26 keypoints all at one pixel."""
    kp = np.zeros((26, 3))
    kp[:, 0], kp[:, 1], kp[:, 2] = x, y, conf
    return kp


def head_keypoints(origin, direction, conf: float = 0.9, base=None) -> np.ndarray:
    """Keypoints whose eyes sit at ``origin`` and ears 10 px behind it."""
    kp = keypoints_at(*origin, conf) if base is None else base.copy()
    o = np.asarray(origin, dtype=float)
    g = np.asarray(direction, dtype=float)
    g = g / np.linalg.norm(g)
    side = np.array([-g[1], g[0]])
    kp[1, :2], kp[2, :2] = o + 3 * side, o - 3 * side
    kp[3, :2], kp[4, :2] = o - 10 * g + 5 * side, o - 10 * g - 5 * side
    kp[0, :2] = o + 2 * g
    kp[[0, 1, 2, 3, 4], 2] = conf
    return kp


def det(frame: int, bbox, kp=None, hint=None) -> Detection:
    if kp is None:
        cx, cy = (bbox[0] + bbox[2]) / 2, bbox[3]
        kp = keypoints_at(cx, cy)
    return Detection(frame_index=frame, bbox=tuple(float(v) for v in bbox), keypoints=kp, track_hint=hint)


def jsonl(records) -> str:
    return "".join(json.dumps(r) + "\n" for r in records)


def toy_room_dict(**metric_params) -> dict:
    """4x4 m room, doorway below the bottom wall, pixel = 100 * meters."""
    room = [[0, 0], [4, 0], [4, 4], [0, 4]]
    pairs = [{"pixel": [x * SCALE, y * SCALE], "map": [x, y]} for x, y in room]
    return {
        "room": room,
        "entry_zone": [[1.5, -1.0], [2.5, -1.0], [2.5, 0.3], [1.5, 0.3]],
        "pods": {"A": [[0, 3], [1, 3], [1, 4], [0, 4]], "B": [[3, 3], [4, 3], [4, 4], [3, 4]],
                 "C": [[1.5, 3], [2.5, 3], [2.5, 4], [1.5, 4]]},
        "door_normal": [0, 1],
        "calibration": {"pairs": pairs},
        "metric_params": dict(metric_params),
    }


@pytest.fixture
def toy_room():
    return room_config_from_dict(toy_room_dict())


def random_tree(rng: np.random.Generator, equal_weights: bool = False, max_depth: int = 3) -> dict:
    """Random hierarchy JSON: a root, up to ``max_depth`` construct levels, metric leaves.

    Leaves may be shared between parents, so the result is a DAG.
    """
    from ecr_analytics.config import METRIC_NAMES

    nodes = []
    leaves = set()
    counter = [0]

    def weight():
        return 1.0 if equal_weights else float(rng.uniform(0.1, 5.0))

    def build(level: int, depth_left: int) -> str:
        nid = f"n{counter[0]}"
        counter[0] += 1
        kids = []
        for _ in range(int(rng.integers(1, 4))):
            if depth_left > 0 and rng.random() < 0.5:
                cid = build(level + 1, depth_left - 1)
            else:
                cid = str(rng.choice(METRIC_NAMES))
                leaves.add(cid)
            if cid not in [k["id"] for k in kids]:
                kids.append({"id": cid, "weight": weight()})
        nodes.append({"id": nid, "name": nid, "level": level, "children": kids})
        return nid

    build(0, max_depth - 1)
    nodes += [{"id": m, "name": m, "level": 4, "metric": m} for m in sorted(leaves)]
    return {"nodes": nodes,
            "smoothing": {"alpha_ceil": float(rng.uniform(0.2, 1.0)), "half_life": float(rng.uniform(0.5, 5.0))}}


def random_leaves(rng: np.random.Generator, p_missing: float = 0.2) -> dict:
    from ecr_analytics.config import METRIC_NAMES

    return {m: (None if rng.random() < p_missing else float(rng.random())) for m in METRIC_NAMES}
