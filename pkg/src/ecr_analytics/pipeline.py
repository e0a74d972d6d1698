"""Detections in, metric results out: track, map, gaze, metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .gaze import GazeRecord, build_gaze_records
from .homography import Homography, calibrate
from .ingest import FrameSequence, RoomConfig
from .mapping import AgentRole, TrajectorySample, build_trajectories, classify_roles
from .config import METRIC_NAMES
from .metrics import MetricContext, MetricResult, compute_all, not_applicable
from .tracking import Track, run_tracker


@dataclass
class Analysis:
    homography: Homography
    calibration_errors: list
    tracks: list[Track]
    trajectories: dict[int, list[TrajectorySample]]
    roles: dict[int, AgentRole]
    gaze: dict[int, dict[int, GazeRecord]]
    context: MetricContext
    results: dict[str, MetricResult]


def analyze(frames: FrameSequence, config: RoomConfig, fps: Optional[float] = None) -> Analysis:
    fps = fps or config.fps or frames.fps
    h, err = calibrate(config.calibration_pixels, config.calibration_map, config.mapping.calibration_tolerance)
    tracks = run_tracker(frames, config.tracker)
    traj = build_trajectories(tracks, h, config, fps)
    roles = classify_roles(traj, config, fps)
    gaze = build_gaze_records(tracks, h, config)
    ctx = MetricContext(fps=fps, config=config, trajectories=traj, roles=roles,
                        detections={t.id: dict(t.observations) for t in tracks}, gaze=gaze)
    if frames.num_detections() == 0:
        # a vacuous run: nothing was observed, so nothing can be scored
        results = {n: not_applicable(n, "no detections in the stream") for n in METRIC_NAMES}
    else:
        results = compute_all(ctx)
    return Analysis(h, [float(e) for e in err], tracks, traj, roles, gaze, ctx, results)
