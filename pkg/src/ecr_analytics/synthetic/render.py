"""Render scripted scenarios into detection streams plus ground truth.

The camera looks straight down at the floor, so every keypoint is a floor
point: a flat 26-point skeleton template (meters, forward/left offsets from
the feet) is rotated to the agent's facing, placed at its position and
pushed through the map-to-pixel homography.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import shapely

from ..config import FOOT_KEYPOINTS, NUM_KEYPOINTS
from ..gaze import build_gaze_batch
from ..homography import Homography, project_many
from ..ingest import Detection, FrameSequence
from ..mapping import ENEMY, TEAM, UNKNOWN, AgentRole, TrajectorySample
from ..metrics import MetricContext
from .scenario import ScenarioScript

# (forward, left) offsets in meters for a 1.75 m agent, Halpe26 order
_TEMPLATE = np.array([
    (0.13, 0.0),                                 # nose
    (0.09, 0.035), (0.09, -0.035),               # eyes
    (-0.03, 0.075), (-0.03, -0.075),             # ears
    (0.0, 0.20), (0.0, -0.20),                   # shoulders
    (0.12, 0.24), (0.12, -0.24),                 # elbows
    (0.35, 0.12), (0.35, -0.12),                 # wrists
    (0.0, 0.11), (0.0, -0.11),                   # hips
    (0.04, 0.12), (0.04, -0.12),                 # knees
    (0.0, 0.12), (0.0, -0.12),                   # ankles
    (0.02, 0.0), (-0.01, 0.0), (0.0, 0.0),       # head, neck, hip center
    (0.16, 0.11), (0.16, -0.11),                 # big toes
    (0.14, 0.16), (0.14, -0.16),                 # small toes
    (-0.05, 0.12), (-0.05, -0.12),               # heels
])
_FOOT = np.array(FOOT_KEYPOINTS)
_TEMPLATE = _TEMPLATE - _TEMPLATE[_FOOT].mean(axis=0)
HEAD_KEYPOINTS = (0, 1, 2, 3, 4, 17)
BODY_RADIUS = 0.28
VISIBLE_CONF = 0.9
_CIRCLE = np.array([(math.cos(a), math.sin(a)) for a in np.linspace(0, 2 * math.pi, 12, endpoint=False)])


def default_camera() -> np.ndarray:
    """Mildly projective map-to-pixel matrix, ~150 px per meter."""
    return np.array([[150.0, 10.0, 150.0], [4.0, -140.0, 900.0], [0.0015, 0.004, 1.0]])


def _unit(deg: float) -> np.ndarray:
    r = math.radians(deg)
    return np.array([math.cos(r), math.sin(r)])


def skeleton_map_points(position, heading, height: float = 1.75) -> np.ndarray:
    """Template keypoints in map meters, feet centered on ``position``."""
    h = np.asarray(heading, dtype=float)
    left = np.array([-h[1], h[0]])
    off = _TEMPLATE * (height / 1.75)
    return np.asarray(position, dtype=float) + off[:, :1] * h + off[:, 1:] * left


def body_box(camera: np.ndarray, kp_map: np.ndarray, position, heading, height: float = 1.75):
    """Pixel box enclosing the skeleton and a body-radius disc around the torso."""
    torso = np.asarray(position, dtype=float) + 0.06 * np.asarray(heading)
    disc = torso + _CIRCLE * BODY_RADIUS * (height / 1.75)
    px = project_many(Homography.from_matrix(camera), np.vstack([kp_map, disc]))
    lo, hi = px.min(axis=0), px.max(axis=0)
    return (float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1]))


@dataclass
class GroundTruth:
    fps: float
    num_frames: int
    camera: np.ndarray
    homography: Homography  # pixel -> map
    names: list[str]
    roles: list[str]  # scripted roles
    positions: dict[int, dict[int, np.ndarray]]
    headings: dict[int, dict[int, np.ndarray]]
    head_visible: dict[int, dict[int, bool]]
    keypoints: dict[int, dict[int, np.ndarray]]
    bboxes: dict[int, dict[int, tuple]]
    detection_agents: dict[int, list[int]] = field(default_factory=dict)
    entry_frames: dict[int, int] = field(default_factory=dict)
    assigned_roles: dict[int, str] = field(default_factory=dict)

    @staticmethod
    def track_id(agent: int) -> int:
        return agent + 1

    @property
    def entry_order(self) -> list[int]:
        return sorted(self.entry_frames, key=lambda a: (self.entry_frames[a], a))

    def agent_roles(self) -> dict[int, AgentRole]:
        """Roles keyed by track id (agent index + 1)."""
        out = {}
        order = {a: i for i, a in enumerate(self.entry_order, start=1)}
        for a, role in self.assigned_roles.items():
            tid = self.track_id(a)
            if role == TEAM:
                f = self.entry_frames[a]
                out[tid] = AgentRole(tid, TEAM, entry_order=order[a], entry_time=f / self.fps, entry_frame=f)
            else:
                out[tid] = AgentRole(tid, role)
        return out

    def to_dict(self) -> dict:
        agents = []
        for a, name in enumerate(self.names):
            frames = sorted(self.positions[a])
            agents.append({
                "agent": a, "track_id": self.track_id(a), "name": name, "scripted_role": self.roles[a],
                "role": self.assigned_roles[a], "entry_frame": self.entry_frames.get(a),
                "frames": frames,
                "positions": [self.positions[a][f].tolist() for f in frames],
                "headings": [self.headings[a][f].tolist() for f in frames],
                "head_visible": [bool(self.head_visible[a][f]) for f in frames],
            })
        return {"fps": self.fps, "num_frames": self.num_frames, "camera": self.camera.tolist(),
                "homography": self.homography.matrix.tolist(), "agents": agents,
                "detection_agents": {str(f): v for f, v in sorted(self.detection_agents.items())}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _travel_heading(agent, t: float) -> Optional[np.ndarray]:
    w = agent.waypoints
    if len(w) < 2:
        return None
    i = int(np.searchsorted(w[:, 0], t, side="right")) - 1
    i = min(max(i, 0), len(w) - 2)
    for j in range(i, -1, -1):
        d = w[j + 1, 1:] - w[j, 1:]
        n = float(np.hypot(*d))
        if n > 1e-9:
            return d / n
    return None


def _heading(script: ScenarioScript, idx: int, t: float, prev: Optional[np.ndarray]):
    """(unit heading, head visible) of agent ``idx`` at time ``t``."""
    agent = script.agents[idx]
    seg = None
    for g in agent.gaze:
        if g.t <= t + 1e-12:
            seg = g
    kind = "travel" if seg is None else seg.kind
    fallback = prev if prev is not None else script.room.entry_normal()
    if kind == "angle":
        return _unit(seg.deg), True
    if kind == "sweep":
        u = min(max((t - seg.t) / (seg.t_end - seg.t), 0.0), 1.0)
        return _unit(seg.deg + u * (seg.to_deg - seg.deg)), True
    if kind in ("point", "agent"):
        if kind == "agent":
            other = script.agents[seg.agent]
            target = other.position(t) if other.t_start <= t <= other.t_end else None
        else:
            target = np.asarray(seg.target, dtype=float)
        if target is not None:
            d = target - agent.position(t)
            n = float(np.hypot(*d))
            if n > 1e-9:
                return d / n, True
        return fallback, True
    travel = _travel_heading(agent, t)
    return (travel if travel is not None else fallback), kind != "none"


def _entry_frame(positions: dict[int, np.ndarray], room, entry_zone, hold: int):
    """Independent shapely evaluation of the entry rule; returns (kind, frame)."""
    frames = sorted(positions)
    pts = np.array([positions[f] for f in frames]).reshape(-1, 2)
    room_p, zone_p = shapely.Polygon(room), shapely.Polygon(entry_zone)
    in_zone = shapely.contains_xy(zone_p, pts[:, 0], pts[:, 1])
    interior = shapely.contains_xy(room_p, pts[:, 0], pts[:, 1]) & ~in_zone
    seen = [i for i in range(len(frames)) if in_zone[i] or interior[i]]
    if not seen:
        return UNKNOWN, None
    if interior[seen[0]]:
        return (UNKNOWN if in_zone.any() else ENEMY), None
    for i in range(seen[0], len(frames)):
        if interior[i:i + hold].all() and len(interior[i:i + hold]) > 0:
            return TEAM, frames[i]
    return UNKNOWN, None


def render_scenario(script: ScenarioScript) -> tuple[FrameSequence, GroundTruth]:
    script.validate()
    fps, n = script.fps, script.num_frames
    camera = np.asarray(script.camera, dtype=float)
    cam = Homography.from_matrix(camera)
    noise = script.noise
    rng = np.random.default_rng(script.seed)
    na = len(script.agents)

    positions = {a: {} for a in range(na)}
    headings = {a: {} for a in range(na)}
    visible = {a: {} for a in range(na)}
    keypoints = {a: {} for a in range(na)}
    bboxes = {a: {} for a in range(na)}
    prev = [None] * na
    for f in range(n):
        t = f / fps
        for a, agent in enumerate(script.agents):
            if not (agent.t_start - 1e-9 <= t <= agent.t_end + 1e-9):
                continue
            p = agent.position(t)
            h, vis = _heading(script, a, t, prev[a])
            prev[a] = h
            kp_map = skeleton_map_points(p, h, agent.height)
            kp = np.column_stack([project_many(cam, kp_map), np.full(NUM_KEYPOINTS, VISIBLE_CONF)])
            if not vis:
                kp[list(HEAD_KEYPOINTS), 2] = 0.0
            positions[a][f] = p
            headings[a][f] = h
            visible[a][f] = vis
            keypoints[a][f] = kp
            bboxes[a][f] = body_box(camera, kp_map, p, h, agent.height)

    frames = []
    det_agents = {}
    for f in range(n):
        t = f / fps
        dets, who = [], []
        for a in range(na):
            if f not in positions[a]:
                continue
            # draw every random number unconditionally so noise settings never shift the stream
            xy_noise = rng.normal(0.0, 1.0, size=(NUM_KEYPOINTS, 2))
            kp_drop = rng.random(NUM_KEYPOINTS)
            foot_drop = rng.random()
            det_drop = rng.random()
            box_noise = rng.normal(0.0, 1.0, size=4)
            occluded = any(o[0] == a and o[1] - 1e-9 <= t <= o[2] + 1e-9 for o in noise.occlusions)
            if occluded or det_drop < noise.detection_dropout:
                continue
            kp = keypoints[a][f].copy()
            kp[:, :2] += noise.keypoint_sigma * xy_noise
            kp[kp_drop < noise.keypoint_dropout, 2] = 0.0
            if foot_drop < noise.foot_dropout:
                kp[_FOOT, 2] = 0.0
            x1, y1, x2, y2 = np.asarray(bboxes[a][f]) + noise.bbox_sigma * box_noise
            box = (float(min(x1, x2 - 1)), float(min(y1, y2 - 1)), float(max(x2, x1 + 1)), float(max(y2, y1 + 1)))
            dets.append(Detection(frame_index=f, bbox=box, keypoints=kp))
            who.append(a)
        if dets:
            order = rng.permutation(len(dets))
            dets = [dets[i] for i in order]
            who = [who[i] for i in order]
        frames.append((f, dets))
        det_agents[f] = who

    room = script.room
    hold = max(1, math.ceil(room.mapping.entry_hysteresis * fps - 1e-9))
    roles, entries = {}, {}
    for a, agent in enumerate(script.agents):
        if not positions[a]:
            roles[a] = UNKNOWN
            continue
        kind, frame = _entry_frame(positions[a], room.room_polygon, room.entry_zone, hold)
        if agent.role == "team" and kind == TEAM:
            roles[a] = TEAM
            entries[a] = frame
        elif agent.role == "enemy" and kind == ENEMY:
            roles[a] = ENEMY
        else:
            roles[a] = UNKNOWN

    gt = GroundTruth(fps=fps, num_frames=n, camera=camera, homography=cam.inverse(),
                     names=[a.name for a in script.agents], roles=[a.role for a in script.agents],
                     positions=positions, headings=headings, head_visible=visible, keypoints=keypoints,
                     bboxes=bboxes, detection_agents=det_agents, entry_frames=entries, assigned_roles=roles)
    return FrameSequence(frames=frames, fps=fps), gt


def context_from_truth(script: ScenarioScript, gt: GroundTruth) -> MetricContext:
    """Metric context built from noise-free truth (engine gaze construction)."""
    h = gt.homography
    h_inv = h.inverse()
    trajectories, detections, gaze = {}, {}, {}
    for a in range(len(gt.names)):
        tid = gt.track_id(a)
        frames = sorted(gt.positions[a])
        trajectories[tid] = [TrajectorySample(tid, f, np.full(2, np.nan), gt.positions[a][f], "measured")
                             for f in frames]
        detections[tid] = {f: Detection(f, gt.bboxes[a][f], gt.keypoints[a][f]) for f in frames}
        gaze[tid] = build_gaze_batch(tid, frames, [gt.keypoints[a][f] for f in frames], h, h_inv, script.room)
    return MetricContext(fps=gt.fps, config=script.room, trajectories=trajectories,
                         roles=gt.agent_roles(), detections=detections, gaze=gaze)
