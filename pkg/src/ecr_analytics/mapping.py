"""From image-space tracks to smoothed floor-map trajectories and roles.

Per frame and track: average the confident foot keypoints, smooth them with
a 2-D constant-velocity filter, bridge foot dropouts with a velocity taken
from other keypoints (or box centers), project through the floor
homography, then blend with the previous map position using a
motion-dependent factor.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry as geo
from .config import FOOT_KEYPOINTS, NUM_KEYPOINTS, MappingParams
from .errors import NoHistory, PointAtInfinity
from .homography import Homography, project
from .ingest import RoomConfig, valid_mask
from .tracking import Track

MEASURED = "measured"
VELOCITY_FALLBACK = "velocity-fallback"
ESTIMATOR_ONLY = "estimator-only"

TEAM, ENEMY, UNKNOWN = "team", "enemy", "unknown"

_FOOT = np.array(FOOT_KEYPOINTS)
_NON_FOOT = np.array([i for i in range(NUM_KEYPOINTS) if i not in FOOT_KEYPOINTS])


@dataclass
class TrajectorySample:
    track_id: int
    frame_index: int
    pixel_position: np.ndarray
    map_position: np.ndarray
    source: str
    in_room: bool = True


@dataclass
class AgentRole:
    track_id: int
    role: str
    entry_order: Optional[int] = None
    entry_time: Optional[float] = None
    entry_frame: Optional[int] = None

    @property
    def is_team(self) -> bool:
        return self.role == TEAM

    def to_dict(self) -> dict:
        return {"track_id": self.track_id, "role": self.role, "entry_order": self.entry_order,
                "entry_time": self.entry_time, "entry_frame": self.entry_frame}


def foot_position(keypoints, conf_threshold: float) -> Optional[np.ndarray]:
    """Mean of the valid ankle, toe and heel keypoints, or None."""
    kp = np.asarray(keypoints, dtype=float)
    ok = valid_mask(kp, conf_threshold)[_FOOT]
    if not ok.any():
        return None
    return kp[_FOOT[ok], :2].mean(axis=0)


def fallback_velocity(s_t, s_tk, k: int) -> np.ndarray:
    """Per-frame velocity from two reference positions ``k`` frames apart."""
    if s_t is None or s_tk is None:
        raise NoHistory("no reference positions for velocity fallback")
    if k < 1:
        raise ValueError("k must be >= 1")
    return (np.asarray(s_t, dtype=float) - np.asarray(s_tk, dtype=float)) / k


def predict_missing_position(p_t, v) -> np.ndarray:
    return np.asarray(p_t, dtype=float) + np.asarray(v, dtype=float)


class PixelFilter:
    """Constant-velocity filter on a 2-D pixel position."""

    def __init__(self, position, process_noise: float = 1.0, measurement_noise: float = 4.0):
        self.x = np.array([position[0], position[1], 0.0, 0.0], dtype=float)
        self.P = np.diag([measurement_noise, measurement_noise, 1e4, 1e4])
        self.F = np.array([[1, 0, 1, 0], [0, 1, 0, 1], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
        self.Hm = np.array([[1, 0, 0, 0], [0, 1, 0, 0]], dtype=float)
        self.Q = np.eye(4) * process_noise
        self.R = np.eye(2) * measurement_noise

    @property
    def position(self) -> np.ndarray:
        return self.x[:2].copy()

    def predict(self) -> np.ndarray:
        self.x = self.F @ self.x
        self.P = self.F @ self.P @ self.F.T + self.Q
        return self.position

    def update(self, z) -> np.ndarray:
        y = np.asarray(z, dtype=float) - self.Hm @ self.x
        s = self.Hm @ self.P @ self.Hm.T + self.R
        k = np.linalg.solve(s, self.Hm @ self.P).T
        self.x = self.x + k @ y
        self.P = (np.eye(4) - k @ self.Hm) @ self.P
        return self.position

    def set_prior(self, position, velocity) -> None:
        """Overwrite the mean with an externally predicted position and velocity."""
        self.x = np.array([position[0], position[1], velocity[0], velocity[1]], dtype=float)
        self.P = self.F @ self.P @ self.F.T + self.Q


def smooth_pixel_track(samples, params: Optional[MappingParams] = None):
    """Smooth a per-frame foot track.

    ``samples`` is a frame-ordered list of ``(frame, foot_or_None,
    fallback_velocity_or_None)``. Returns ``(frame, pixel_position, source)``
    triples; frames before the first measured foot are dropped because
    there is no position to extrapolate from.
    """
    params = params or MappingParams()
    out = []
    kf: Optional[PixelFilter] = None
    last_frame = None
    for frame, foot, velocity in samples:
        if kf is None:
            if foot is None:
                continue
            kf = PixelFilter(foot, params.process_noise, params.measurement_noise)
            out.append((frame, kf.position, MEASURED))
            last_frame = frame
            continue
        steps = frame - last_frame
        if foot is not None:
            for _ in range(steps):
                kf.predict()
            out.append((frame, kf.update(foot), MEASURED))
        elif velocity is not None:
            pos = out[-1][1]
            for _ in range(steps):
                pos = predict_missing_position(pos, velocity)
            kf.set_prior(pos, velocity)
            out.append((frame, pos, VELOCITY_FALLBACK))
        else:
            for _ in range(steps):
                kf.predict()
            out.append((frame, kf.position, ESTIMATOR_ONLY))
        last_frame = frame
    return out


def alpha_map(displacement: float, params: Optional[MappingParams] = None) -> float:
    params = params or MappingParams()
    return float(min(max(displacement / params.d_ref, params.alpha_min), params.alpha_max))


def smooth_map_position(m_t, m_prev_smooth, displacement: float, params: Optional[MappingParams] = None,
                        alpha: Optional[float] = None) -> np.ndarray:
    """Blend the new map point with the previous smoothed one."""
    a = alpha_map(displacement, params) if alpha is None else alpha
    return a * np.asarray(m_t, dtype=float) + (1.0 - a) * np.asarray(m_prev_smooth, dtype=float)


def _reference_velocity(track: Track, frame: int, lag: int, conf: float) -> Optional[np.ndarray]:
    det = track.observations.get(frame)
    if det is None:
        return None
    ok_t = valid_mask(det.keypoints, conf)[_NON_FOOT]
    for k in range(lag, 0, -1):
        prev = track.observations.get(frame - k)
        if prev is None:
            continue
        common = ok_t & valid_mask(prev.keypoints, conf)[_NON_FOOT]
        if common.any():
            idx = _NON_FOOT[common]
            s_t = det.keypoints[idx, :2].mean(axis=0)
            s_tk = prev.keypoints[idx, :2].mean(axis=0)
        else:
            s_t, s_tk = det.center, prev.center
        return fallback_velocity(s_t, s_tk, k)
    return None


def build_track_trajectory(track: Track, h: Homography, config: RoomConfig, fps: float) -> list[TrajectorySample]:
    p = config.mapping
    frames = track.frames
    if not frames:
        return []
    raw = []
    for f in range(frames[0], frames[-1] + 1):
        det = track.observations.get(f)
        foot = None if det is None else foot_position(det.keypoints, p.keypoint_conf)
        vel = None
        if det is not None and foot is None:
            vel = _reference_velocity(track, f, p.fallback_lag, p.keypoint_conf)
        raw.append((f, foot, vel))

    out: list[TrajectorySample] = []
    prev = None
    prev_frame = None
    for f, pix, source in smooth_pixel_track(raw, p):
        try:
            m = project(h, pix)
        except PointAtInfinity:
            continue
        if not np.all(np.isfinite(m)):
            continue
        if prev is None:
            smooth = m
        else:
            step = m - prev
            dist = float(np.linalg.norm(step))
            limit = p.v_max * (f - prev_frame) / fps
            if dist > limit:
                step = step * (limit / dist)
                dist = limit
            smooth = smooth_map_position(prev + step, prev, dist, p)
        out.append(TrajectorySample(
            track_id=track.id, frame_index=f, pixel_position=np.asarray(pix, dtype=float),
            map_position=smooth, source=source,
            in_room=geo.point_in_polygon(smooth, config.room_polygon),
        ))
        prev, prev_frame = smooth, f
    return out


def build_trajectories(tracks: list[Track], h: Homography, config: RoomConfig,
                       fps: Optional[float] = None) -> dict[int, list[TrajectorySample]]:
    fps = fps or config.fps or 30.0
    return {t.id: build_track_trajectory(t, h, config, fps) for t in tracks}


def classify_roles(trajectories: dict[int, list[TrajectorySample]], config: RoomConfig,
                   fps: float) -> dict[int, AgentRole]:
    """Team members enter through the entry zone; enemies start inside.

    A member's entry frame is the first frame whose smoothed position is in
    the room interior (inside the room, outside the entry zone) and stays
    there for the hysteresis window.
    """
    hold = max(1, math.ceil(config.mapping.entry_hysteresis * fps - 1e-9))
    roles: dict[int, AgentRole] = {}
    entries = []
    for tid in sorted(trajectories):
        samples = trajectories[tid]
        if not samples:
            roles[tid] = AgentRole(tid, UNKNOWN)
            continue
        pts = np.array([s.map_position for s in samples])
        in_entry = geo.points_in_polygon(pts, config.entry_zone)
        interior = geo.points_in_polygon(pts, config.room_polygon) & ~in_entry
        seen = np.flatnonzero(in_entry | interior)
        if len(seen) == 0:
            roles[tid] = AgentRole(tid, UNKNOWN)
            continue
        first = seen[0]
        if interior[first]:
            roles[tid] = AgentRole(tid, ENEMY if not in_entry.any() else UNKNOWN)
            continue
        entry_idx = None
        for i in np.flatnonzero(interior[first:]) + first:
            window = interior[i:i + hold]
            if window.all():
                entry_idx = int(i)
                break
        if entry_idx is None:
            roles[tid] = AgentRole(tid, UNKNOWN)
            continue
        frame = samples[entry_idx].frame_index
        entries.append((frame, tid))
        roles[tid] = AgentRole(tid, TEAM, entry_time=frame / fps, entry_frame=frame)
    for order, (_, tid) in enumerate(sorted(entries), start=1):
        roles[tid].entry_order = order
    return roles


def dump_trajectories(trajectories: dict[int, list[TrajectorySample]]) -> str:
    rows = []
    for tid in sorted(trajectories):
        for s in trajectories[tid]:
            rows.append((s.frame_index, tid, s))
    rows.sort(key=lambda r: (r[0], r[1]))
    return "".join(
        json.dumps({
            "frame": f, "track_id": tid,
            "x_m": float(s.map_position[0]), "y_m": float(s.map_position[1]),
            "source": s.source, "in_room": bool(s.in_room),
        }, separators=(",", ":")) + "\n"
        for f, tid, s in rows
    )


def load_trajectory_dump(text: str) -> dict[int, list[TrajectorySample]]:
    out: dict[int, list[TrajectorySample]] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        out.setdefault(d["track_id"], []).append(TrajectorySample(
            track_id=d["track_id"], frame_index=d["frame"], pixel_position=np.full(2, np.nan),
            map_position=np.array([d["x_m"], d["y_m"]]), source=d.get("source", MEASURED),
            in_room=d.get("in_room", True),
        ))
    for v in out.values():
        v.sort(key=lambda s: s.frame_index)
    return out
