"""Brute-force reference implementations used to check the engine.

Geometry goes through shapely rather than the engine's own helpers and every
metric is evaluated by direct per-frame enumeration over the whole record,
so agreement with the streaming engine is meaningful.
"""
from __future__ import annotations

import math
from functools import cached_property
from typing import Optional

import numpy as np
import shapely

from ..config import MetricParams, TrackerParams
from ..ingest import FrameSequence, RoomConfig
from ..mapping import ENEMY, TEAM
from ..rollup import CtaHierarchy
from ..tracking import run_tracker
from .render import GroundTruth


def _pen(delay: float, rate: float) -> float:
    return 1.0 if delay <= 0 else math.exp(-rate * delay)


def _apply(m: np.ndarray, p) -> np.ndarray:
    v = m @ np.array([p[0], p[1], 1.0])
    return v[:2] / v[2]


def _box(b) -> shapely.Polygon:
    return shapely.box(b[0], b[1], b[2], b[3])


class OracleData:
    """Per-frame geometry for one ground-truth scenario."""

    def __init__(self, gt: GroundTruth, room: RoomConfig, params: Optional[MetricParams] = None):
        self.gt = gt
        self.room = room
        self.p = params or room.metric_params
        self.fps = gt.fps
        self.H = gt.homography.matrix
        self.Hinv = np.linalg.inv(self.H)
        self.room_poly = shapely.Polygon(room.room_polygon)
        lines = [list(map(tuple, s)) for s in room.wall_segments]
        self.boundary = shapely.union(self.room_poly.exterior, shapely.MultiLineString(lines)) if lines \
            else self.room_poly.exterior
        walls = [list(map(tuple, s)) for s in room.wall_segments]
        ring = list(map(tuple, room.room_polygon)) + [tuple(room.room_polygon[0])]
        self.wall_lines = shapely.MultiLineString(walls + [ring])

    # -- agents ------------------------------------------------------------

    @cached_property
    def members(self) -> list[int]:
        return sorted(self.gt.entry_frames, key=lambda a: (self.gt.entry_frames[a], a))

    @cached_property
    def enemies(self) -> list[int]:
        return sorted(a for a, r in self.gt.assigned_roles.items() if r == ENEMY)

    def present(self, a: int, f: int) -> bool:
        return f in self.gt.positions[a]

    def in_room(self, a: int, f: int) -> bool:
        return self.gt.assigned_roles[a] == TEAM and f >= self.gt.entry_frames[a] and self.present(a, f)

    @cached_property
    def all_frames(self) -> range:
        fs = [f for a in self.gt.positions for f in self.gt.positions[a]]
        return range(min(fs), max(fs) + 1) if fs else range(0)

    @cached_property
    def door_normal(self) -> np.ndarray:
        if self.room.door_normal is not None:
            n = np.asarray(self.room.door_normal, dtype=float)
        else:
            c_room = shapely.Polygon(self.room.room_polygon).centroid
            c_zone = shapely.Polygon(self.room.entry_zone).centroid
            n = np.array([c_room.x - c_zone.x, c_room.y - c_zone.y])
        return n / np.hypot(*n)

    # -- gaze --------------------------------------------------------------

    def _gaze(self, a: int, f: int):
        kp = self.gt.keypoints[a][f]
        thr = self.room.gaze.keypoint_conf
        ok = kp[:, 2] >= thr
        if ok[1] and ok[2]:
            o = (kp[1, :2] + kp[2, :2]) / 2
        elif ok[1] or ok[2]:
            o = kp[1 if ok[1] else 2, :2]
        elif ok[0]:
            o = kp[0, :2]
        else:
            return None
        if ok[3] and ok[4]:
            e = (kp[3, :2] + kp[4, :2]) / 2
        elif ok[3] or ok[4]:
            e = kp[3 if ok[3] else 4, :2]
        else:
            return None
        d = o - e
        if np.hypot(*d) < 1e-6:
            return None
        g = d / np.hypot(*d)
        om = _apply(self.H, o)
        dm = om - _apply(self.H, o - g)
        gm = dm / np.hypot(*dm)
        inside = bool(shapely.contains_xy(self.room_poly, om[0], om[1]))
        length = self.room.gaze.fallback_length_px
        if inside:
            ray = shapely.LineString([om, om + gm * 1e4])
            hits = shapely.get_coordinates(ray.intersection(self.boundary))
            dist = [float(np.hypot(*(q - om))) for q in hits]
            dist = [x for x in dist if x > 1e-9]
            if dist:
                end = _apply(self.Hinv, om + gm * min(dist))
                length = float(np.hypot(*(end - o)))
        half = math.radians(self.room.gaze.half_angle_deg)
        rot = lambda t: np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
        tri = np.array([o, o + rot(half) @ g * length, o + rot(-half) @ g * length])
        tri_poly = shapely.Polygon(tri)
        map_poly = None
        if inside:
            map_poly = shapely.Polygon([_apply(self.H, v) for v in tri]).intersection(self.room_poly)
        return tri_poly, map_poly

    @cached_property
    def gaze(self) -> dict[int, dict[int, tuple]]:
        out = {}
        for a in self.gt.positions:
            out[a] = {}
            for f in self.gt.positions[a]:
                r = self._gaze(a, f)
                if r is not None:
                    out[a][f] = r
        return out

    def sees(self, a: int, f: int, box) -> bool:
        r = self.gaze[a].get(f)
        return r is not None and r[0].intersects(_box(box))

    # -- derived quantities -------------------------------------------------

    @cached_property
    def directions(self) -> dict[int, str]:
        k = max(1, int(round(self.p.entry_direction_window * self.fps)))
        n = self.door_normal
        out = {}
        for a in self.members:
            f0 = self.gt.entry_frames[a]
            pos = self.gt.positions[a]
            later = [f for f in range(f0 + 1, f0 + k + 1) if f in pos]
            if not later:
                out[a] = "R"
                continue
            v = pos[later[-1]] - pos[f0]
            out[a] = "L" if n[0] * v[1] - n[1] * v[0] > 0 else "R"
        return out

    @cached_property
    def assignment(self) -> dict[int, str]:
        table = self.p.pod_assignment_table
        if not self.members or not table:
            return {}
        pods = table[self.directions[self.members[0]]]
        return {a: pods[i] for i, a in enumerate(self.members) if i < len(pods)}

    def _inside_pod(self, a: int) -> dict[int, bool]:
        poly = shapely.Polygon(self.room.pod_regions[self.assignment[a]])
        f0 = self.gt.entry_frames[a]
        return {f: bool(shapely.contains_xy(poly, *p)) for f, p in self.gt.positions[a].items() if f >= f0}

    @cached_property
    def pod_events(self) -> dict[int, tuple]:
        need = 1
        while need / self.fps < self.p.pod_hold_min - 1e-9:
            need += 1
        out = {}
        for a in self.assignment:
            ins = self._inside_pod(a)
            frames = sorted(ins)
            arrival = next((f for f in frames if ins[f]), None)
            capture = None
            for s in frames:
                if all(ins.get(s + i, False) for i in range(need)):
                    capture = s
                    break
            out[a] = (arrival, capture)
        return out

    @cached_property
    def clearance(self) -> dict[int, Optional[int]]:
        thr = self.p.keypoint_conf
        out = {}
        for e in self.enemies:
            best = None
            for m in self.members:
                common = sorted(set(self.gt.positions[e]) & set(self.gt.positions[m]))
                overl = {f for f in common
                         if _box(self.gt.bboxes[m][f]).intersection(_box(self.gt.bboxes[e][f])).area > 0}
                for b in sorted(overl):
                    a0 = b
                    while a0 - 1 in overl:
                        a0 -= 1
                    if (b - a0 + 1) / self.fps < self.p.threat_overlap_min - 1e-9:
                        continue
                    window = range(a0, b + 1)
                    ebox = {f: _box(self.gt.bboxes[e][f]) for f in window}
                    wrist = any(
                        self.gt.keypoints[m][f][w, 2] >= thr
                        and ebox[f].covers(shapely.Point(self.gt.keypoints[m][f][w, :2]))
                        for f in window for w in (9, 10))
                    gaze = any(self.sees(m, f, self.gt.bboxes[e][f]) for f in window)
                    if wrist and (gaze or not self.p.gaze_required):
                        best = b if best is None else min(best, b)
                        break
            out[e] = best
        return out

    @cached_property
    def coverage(self) -> tuple[int, int, Optional[int]]:
        """(covered, interior, first full frame)."""
        cell = self.p.floor_grid_cell
        x0, y0, x1, y1 = self.room_poly.bounds
        nx = max(1, math.ceil((x1 - x0) / cell - 1e-9))
        ny = max(1, math.ceil((y1 - y0) / cell - 1e-9))
        cx = x0 + (np.arange(nx) + 0.5) * cell
        cy = y0 + (np.arange(ny) + 0.5) * cell
        gx, gy = np.meshgrid(cx, cy)
        gx, gy = gx.ravel(), gy.ravel()
        interior = shapely.contains_xy(self.room_poly, gx, gy)
        gx, gy = gx[interior], gy[interior]
        covered = np.zeros(len(gx), dtype=bool)
        full = None
        for f in self.all_frames:
            for m in self.members:
                if not self.in_room(m, f):
                    continue
                r = self.gaze[m].get(f)
                if r is None or r[1] is None or r[1].is_empty or r[1].area <= 0:
                    continue
                covered |= shapely.contains_xy(r[1], gx, gy)
            if full is None and len(gx) and covered.all():
                full = f
        return int(covered.sum()), int(len(gx)), full


def oracle_metric(name: str, gt: GroundTruth, room: RoomConfig, params: Optional[MetricParams] = None,
                  data: Optional[OracleData] = None) -> Optional[float]:
    """Reference score for one metric, or None when it does not apply."""
    d = data or OracleData(gt, room, params)
    p = d.p
    members, enemies = d.members, d.enemies
    ef = gt.entry_frames

    if name == "entrance_vectors":
        if len(members) < 2:
            return None
        dirs = [d.directions[a] for a in members]
        return sum(x != y for x, y in zip(dirs, dirs[1:])) / (len(dirs) - 1)

    if name == "entrance_hesitation":
        if len(members) < 2:
            return None
        pens = []
        for i in range(1, len(members)):
            gap = (ef[members[i]] - ef[members[i - 1]]) / d.fps
            thr = p.entry_gap_second_third if i == 2 else p.entry_gap_general
            pens.append(_pen(gap - thr, p.penalty_rate))
        return sum(pens) / len(pens)

    if name in ("identify_capture_pod", "pod_capture_time"):
        if not members or not d.assignment:
            return None
        vals = []
        for a in d.assignment:
            _, cap = d.pod_events[a]
            if name == "identify_capture_pod":
                vals.append(0.0 if cap is None else 1.0)
            else:
                vals.append(0.0 if cap is None else _pen((cap - ef[a]) / d.fps - p.pod_time_limit, p.penalty_rate))
        return sum(vals) / len(vals)

    if name == "move_along_wall":
        fracs = []
        for a in members:
            arrival = d.pod_events[a][0] if a in d.assignment else None
            frames = [f for f in sorted(gt.positions[a]) if f >= ef[a] and (arrival is None or f < arrival)]
            if not frames:
                continue
            near = [d.wall_lines.distance(shapely.Point(gt.positions[a][f])) <= p.wall_buffer for f in frames]
            fracs.append(sum(near) / len(near))
        return sum(fracs) / len(fracs) if fracs else None

    if name == "threat_clearance":
        if not enemies:
            return None
        return sum(d.clearance[e] is not None for e in enemies) / len(enemies)

    if name == "threat_coverage":
        if not enemies:
            return None
        seen = total = 0
        for f in d.all_frames:
            inside = [m for m in members if d.in_room(m, f)]
            if not inside:
                continue
            for e in enemies:
                c = d.clearance[e]
                if not d.present(e, f) or (c is not None and f >= c):
                    continue
                total += 1
                seen += any(d.sees(m, f, gt.bboxes[e][f]) for m in inside)
        return seen / total if total else None

    if name == "teammate_coverage":
        if len(members) < 2:
            return None
        team_time = unseen = 0
        for f in d.all_frames:
            inside = [m for m in members if d.in_room(m, f)]
            team_time += len(inside)
            for m in inside:
                others = [o for o in inside if o != m]
                if others and not any(d.sees(o, f, gt.bboxes[m][f]) for o in others):
                    unseen += 1
        return 1.0 - unseen / team_time if team_time else None

    if name == "floor_coverage":
        covered, interior, _ = d.coverage
        return covered / interior if interior else None

    if name == "total_floor_coverage_time":
        covered, interior, full = d.coverage
        if not interior:
            return None
        if full is None or not members:
            return 0.0
        t_full = full / d.fps - ef[members[0]] / d.fps
        return _pen(t_full - p.floor_time_limit, p.penalty_rate)

    raise KeyError(f"unknown metric {name!r}")


def oracle_all(gt: GroundTruth, room: RoomConfig, params: Optional[MetricParams] = None) -> dict[str, Optional[float]]:
    from ..config import METRIC_NAMES

    d = OracleData(gt, room, params)
    return {name: oracle_metric(name, gt, room, data=d) for name in METRIC_NAMES}


def oracle_track_assignment(frames: FrameSequence, gt: GroundTruth,
                            params: Optional[TrackerParams] = None) -> int:
    """Identity switches of the tracker against the true agent behind each detection.

    Each true agent's sequence of assigned track ids is walked in frame
    order; every change of id counts as one switch.
    """
    tracks = run_tracker(frames, params)
    by_agent: dict[int, list[tuple[int, int]]] = {}
    for t in tracks:
        for f, idx in t.detection_index.items():
            agent = gt.detection_agents[f][idx]
            by_agent.setdefault(agent, []).append((f, t.id))
    switches = 0
    for seq in by_agent.values():
        seq.sort()
        switches += sum(1 for (_, a), (_, b) in zip(seq, seq[1:]) if a != b)
    return switches


def oracle_rollup(h: CtaHierarchy, trials: list[dict[str, Optional[float]]]) -> list[dict[str, dict]]:
    """Literal recursive evaluation of the weighted roll-up and trial smoothing.

    Returns one ``{node: {"raw", "smoothed", "alpha"}}`` dict per trial.
    """
    def value(nid: str, leaves: dict) -> Optional[float]:
        node = h.nodes[nid]
        if node.metric is not None:
            return leaves.get(node.metric)
        vals = [(w, value(c, leaves)) for c, w in node.children]
        vals = [(w, v) for w, v in vals if v is not None]
        if not vals:
            return None
        return sum(w * v for w, v in vals) / sum(w for w, _ in vals)

    sm = h.smoothing
    out = []
    prev: dict[str, Optional[float]] = {}
    for t, leaves in enumerate(trials, start=1):
        alpha = sm.alpha_ceil * (1 - math.exp(-math.log(2) * (t - 1) / sm.half_life))
        sheet = {}
        for nid, node in h.nodes.items():
            raw = value(nid, leaves)
            before = prev.get(nid)
            if node.metric is not None and not sm.smooth_leaves:
                s = raw
            elif raw is None:
                s = before
            elif before is None:
                s = raw
            else:
                s = alpha * before + (1 - alpha) * raw
            sheet[nid] = {"raw": raw, "smoothed": s, "alpha": alpha}
        prev = {nid: v["smoothed"] for nid, v in sheet.items()}
        out.append(sheet)
    return out
