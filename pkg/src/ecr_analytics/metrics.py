"""The ten drill metrics.

Every metric reads the same immutable :class:`MetricContext` and returns a
:class:`MetricResult` whose score lies in [0, 1], or ``None`` when the
metric does not apply to the run (solo team, no enemies, ...).

Timing penalties all use ``penalty(delay) = exp(-rate * max(0, delay))``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from . import geometry as geo
from .config import METRIC_NAMES, WRIST_KEYPOINTS, MetricParams
from .errors import MissingAssignment
from .gaze import GazeRecord, triangle_intersects_box
from .ingest import Detection, RoomConfig, valid_mask
from .mapping import AgentRole, TrajectorySample

LEFT, RIGHT = "L", "R"


def penalty(delay: float, rate: float) -> float:
    """1 for no delay, decaying exponentially with the delay past threshold."""
    if delay <= 0:
        return 1.0
    if math.isinf(delay):
        return 0.0
    return math.exp(-rate * delay)


@dataclass
class MetricResult:
    metric_name: str
    score: Optional[float]
    per_agent: dict[int, Optional[float]] = field(default_factory=dict)
    evidence: list[tuple[tuple[int, int], str]] = field(default_factory=list)

    @property
    def applicable(self) -> bool:
        return self.score is not None

    def to_dict(self) -> dict:
        return {
            "metric": self.metric_name,
            "score": self.score,
            "applicable": self.applicable,
            "per_agent": {str(k): v for k, v in sorted(self.per_agent.items())},
            "evidence": [{"frames": [int(a), int(b)], "description": d} for (a, b), d in self.evidence],
        }


def not_applicable(name: str, why: str) -> MetricResult:
    return MetricResult(name, None, evidence=[((0, 0), why)])


class CoverageGrid:
    """Floor raster whose interior cells get marked as gaze triangles sweep over them."""

    def __init__(self, room_polygon, cell: float):
        room = geo.as_points(room_polygon)
        lo, hi = room.min(axis=0), room.max(axis=0)
        nx = max(1, int(math.ceil((hi[0] - lo[0]) / cell - 1e-9)))
        ny = max(1, int(math.ceil((hi[1] - lo[1]) / cell - 1e-9)))
        xs = lo[0] + (np.arange(nx) + 0.5) * cell
        ys = lo[1] + (np.arange(ny) + 0.5) * cell
        gx, gy = np.meshgrid(xs, ys)
        centers = np.column_stack([gx.ravel(), gy.ravel()])
        self.cell = cell
        self.shape = (ny, nx)
        self.origin = lo
        self.interior = geo.points_in_polygon(centers, room)
        self.centers = centers[self.interior]
        self.covered = np.zeros(len(self.centers), dtype=bool)
        self.first_full_frame: Optional[int] = None

    @property
    def interior_count(self) -> int:
        return int(len(self.centers))

    @property
    def covered_count(self) -> int:
        return int(self.covered.sum())

    @property
    def full(self) -> bool:
        return self.covered_count == self.interior_count

    def mark(self, polygon, frame: int) -> None:
        poly = geo.as_points(polygon)
        if len(poly) < 3 or geo.polygon_area(poly) <= 0:
            return
        todo = np.flatnonzero(~self.covered)
        if len(todo) == 0:
            return
        lo, hi = poly.min(axis=0), poly.max(axis=0)
        c = self.centers[todo]
        near = np.all((c >= lo) & (c <= hi), axis=1)
        todo = todo[near]
        if len(todo):
            self.covered[todo[geo.points_in_polygon(self.centers[todo], poly)]] = True
        if self.first_full_frame is None and self.full:
            self.first_full_frame = frame


@dataclass
class MetricContext:
    fps: float
    config: RoomConfig
    trajectories: dict[int, list[TrajectorySample]]
    roles: dict[int, AgentRole]
    detections: dict[int, dict[int, Detection]]
    gaze: dict[int, dict[int, GazeRecord]]
    params: Optional[MetricParams] = None

    def __post_init__(self):
        if self.params is None:
            self.params = self.config.metric_params

    @cached_property
    def members(self) -> list[int]:
        team = [r for r in self.roles.values() if r.is_team]
        return [r.track_id for r in sorted(team, key=lambda r: r.entry_order)]

    @cached_property
    def enemies(self) -> list[int]:
        return sorted(tid for tid, r in self.roles.items() if r.role == "enemy")

    @cached_property
    def positions(self) -> dict[int, dict[int, np.ndarray]]:
        return {tid: {s.frame_index: s.map_position for s in samples}
                for tid, samples in self.trajectories.items()}

    @cached_property
    def frames(self) -> range:
        fs = [f for d in self.detections.values() for f in d]
        fs += [s.frame_index for ss in self.trajectories.values() for s in ss]
        if not fs:
            return range(0)
        return range(min(fs), max(fs) + 1)

    def entry_frame(self, tid: int) -> int:
        return self.roles[tid].entry_frame

    def in_room(self, tid: int, frame: int) -> bool:
        """A team member counts as present once entered and while detected."""
        return frame >= self.roles[tid].entry_frame and frame in self.detections.get(tid, {})

    def members_in_room(self, frame: int) -> list[int]:
        return [m for m in self.members if self.in_room(m, frame)]

    def looks_at(self, gazer: int, frame: int, bbox) -> bool:
        rec = self.gaze.get(gazer, {}).get(frame)
        return rec is not None and triangle_intersects_box(rec.image_triangle, bbox)

    # -- derived quantities shared between metrics ---------------------------

    @cached_property
    def entry_directions(self) -> dict[int, str]:
        """Left/right classification of each entrant's post-door movement."""
        n = self.config.entry_normal()
        k = max(1, int(round(self.params.entry_direction_window * self.fps)))
        out = {}
        for tid in self.members:
            pos = self.positions[tid]
            f0 = self.entry_frame(tid)
            later = [f for f in range(f0 + 1, f0 + k + 1) if f in pos]
            if f0 not in pos or not later:
                out[tid] = RIGHT
                continue
            v = pos[later[-1]] - pos[f0]
            cross = n[0] * v[1] - n[1] * v[0]
            out[tid] = LEFT if cross > 0 else RIGHT
        return out

    @cached_property
    def pod_assignment(self) -> dict[int, str]:
        table = self.params.pod_assignment_table
        if not self.members or not table:
            return {}
        first_dir = self.entry_directions[self.members[0]]
        if first_dir not in table:
            raise MissingAssignment(f"pod_assignment_table has no entry for direction {first_dir!r}")
        pods = table[first_dir]
        return {tid: pods[i] for i, tid in enumerate(self.members) if i < len(pods)}

    @cached_property
    def pod_events(self) -> dict[int, tuple[Optional[int], Optional[int]]]:
        """Per assigned member: (first frame inside the POD, start frame of the first qualifying hold)."""
        out = {}
        need = self.params.pod_hold_min
        for tid, pod in self.pod_assignment.items():
            poly = self.config.pod_regions[pod]
            f0 = self.entry_frame(tid)
            frames = sorted(f for f in self.positions[tid] if f >= f0)
            if not frames:
                out[tid] = (None, None)
                continue
            inside = geo.points_in_polygon(np.array([self.positions[tid][f] for f in frames]), poly)
            arrival = None
            capture = None
            run_start = None
            prev = None
            for f, ins in zip(frames, inside):
                if ins and arrival is None:
                    arrival = f
                if ins:
                    if run_start is None or prev is None or f != prev + 1:
                        run_start = f
                    if capture is None and (f - run_start + 1) / self.fps >= need - 1e-9:
                        capture = run_start
                else:
                    run_start = None
                prev = f
            out[tid] = (arrival, capture)
        return out

    @cached_property
    def clearance(self) -> dict[int, tuple[Optional[int], Optional[int], Optional[int]]]:
        """Per enemy: (clearance frame, clearing member, overlap run start)."""
        p = self.params
        out = {}
        for e in self.enemies:
            edets = self.detections.get(e, {})
            best = (None, None, None)
            for m in self.members:
                mdets = self.detections.get(m, {})
                run_start = None
                wrist = gaze = False
                prev = None
                for f in sorted(set(edets) & set(mdets)):
                    ebox = edets[f].bbox
                    mdet = mdets[f]
                    if geo.box_iou(mdet.bbox, ebox) <= 0:
                        run_start = None
                        prev = f
                        continue
                    if run_start is None or f != prev + 1:
                        run_start = f
                        wrist = gaze = False
                    prev = f
                    kp = mdet.keypoints
                    ok = valid_mask(kp, p.keypoint_conf)
                    if not wrist:
                        wrist = any(ok[i] and geo.point_in_box(kp[i, :2], ebox) for i in WRIST_KEYPOINTS)
                    if not gaze:
                        gaze = self.looks_at(m, f, ebox)
                    long_enough = (f - run_start + 1) / self.fps >= p.threat_overlap_min - 1e-9
                    if long_enough and wrist and (gaze or not p.gaze_required):
                        if best[0] is None or f < best[0]:
                            best = (f, m, run_start)
                        break
            out[e] = best
        return out


# -- the ten metrics ----------------------------------------------------------

def entrance_vectors(ctx: MetricContext) -> MetricResult:
    name = "entrance_vectors"
    if len(ctx.members) < 2:
        return not_applicable(name, "fewer than two entrants")
    dirs = [ctx.entry_directions[m] for m in ctx.members]
    per_agent = {ctx.members[0]: None}
    alternating = 0
    for i in range(1, len(dirs)):
        ok = dirs[i] != dirs[i - 1]
        alternating += ok
        per_agent[ctx.members[i]] = 1.0 if ok else 0.0
    evidence = [((ctx.entry_frame(m), ctx.entry_frame(m)), f"entrant {i} (track {m}) went {d}")
                for i, (m, d) in enumerate(zip(ctx.members, dirs), start=1)]
    return MetricResult(name, alternating / (len(dirs) - 1), per_agent, evidence)


def entrance_hesitation(ctx: MetricContext) -> MetricResult:
    name = "entrance_hesitation"
    if len(ctx.members) < 2:
        return not_applicable(name, "fewer than two entrants")
    p = ctx.params
    times = [ctx.roles[m].entry_time for m in ctx.members]
    pens = []
    per_agent = {}
    evidence = []
    for i in range(1, len(times)):
        gap = times[i] - times[i - 1]
        threshold = p.entry_gap_second_third if i == 2 else p.entry_gap_general
        pen = penalty(gap - threshold, p.penalty_rate)
        pens.append(pen)
        per_agent[ctx.members[i]] = pen
        evidence.append(((ctx.entry_frame(ctx.members[i - 1]), ctx.entry_frame(ctx.members[i])),
                         f"gap {gap:.3f}s between entrants {i} and {i + 1} (limit {threshold}s)"))
    return MetricResult(name, float(np.mean(pens)), per_agent, evidence)


def identify_capture_pod(ctx: MetricContext) -> MetricResult:
    name = "identify_capture_pod"
    if not ctx.members:
        return not_applicable(name, "no entrants")
    assigned = ctx.pod_assignment
    if not assigned:
        return not_applicable(name, "no POD assignments configured")
    per_agent = {}
    evidence = []
    for tid, pod in assigned.items():
        arrival, capture = ctx.pod_events[tid]
        per_agent[tid] = 1.0 if capture is not None else 0.0
        if capture is not None:
            evidence.append(((capture, capture), f"track {tid} captured {pod}"))
    return MetricResult(name, sum(per_agent.values()) / len(assigned), per_agent, evidence)


def pod_capture_time(ctx: MetricContext) -> MetricResult:
    name = "pod_capture_time"
    if not ctx.members:
        return not_applicable(name, "no entrants")
    assigned = ctx.pod_assignment
    if not assigned:
        return not_applicable(name, "no POD assignments configured")
    p = ctx.params
    per_agent = {}
    evidence = []
    for tid, pod in assigned.items():
        _, capture = ctx.pod_events[tid]
        if capture is None:
            per_agent[tid] = 0.0
            continue
        delay = (capture - ctx.entry_frame(tid)) / ctx.fps
        per_agent[tid] = penalty(delay - p.pod_time_limit, p.penalty_rate)
        evidence.append(((ctx.entry_frame(tid), capture), f"track {tid} reached {pod} after {delay:.3f}s"))
    return MetricResult(name, float(np.mean(list(per_agent.values()))), per_agent, evidence)


def move_along_wall(ctx: MetricContext) -> MetricResult:
    name = "move_along_wall"
    if not ctx.members:
        return not_applicable(name, "no entrants")
    walls = ctx.config.all_walls()
    buffer = ctx.params.wall_buffer
    per_agent = {}
    evidence = []
    for tid in ctx.members:
        f0 = ctx.entry_frame(tid)
        arrival = ctx.pod_events.get(tid, (None, None))[0] if tid in ctx.pod_assignment else None
        frames = [f for f in sorted(ctx.positions[tid]) if f >= f0 and (arrival is None or f < arrival)]
        if not frames:
            continue
        pts = np.array([ctx.positions[tid][f] for f in frames])
        near = geo.point_segment_distance(pts, walls) <= buffer
        per_agent[tid] = float(near.mean())
        evidence.append(((frames[0], frames[-1]), f"track {tid}: {int(near.sum())}/{len(frames)} frames in wall buffer"))
    if not per_agent:
        return not_applicable(name, "no pre-POD frames")
    return MetricResult(name, float(np.mean(list(per_agent.values()))), per_agent, evidence)


def threat_clearance(ctx: MetricContext) -> MetricResult:
    name = "threat_clearance"
    if not ctx.enemies:
        return not_applicable(name, "no enemies detected")
    per_agent = {}
    evidence = []
    for e in ctx.enemies:
        frame, member, start = ctx.clearance[e]
        per_agent[e] = 0.0 if frame is None else 1.0
        if frame is not None:
            evidence.append(((start, frame), f"enemy {e} cleared by track {member} at {frame / ctx.fps:.3f}s"))
    return MetricResult(name, sum(per_agent.values()) / len(ctx.enemies), per_agent, evidence)


def threat_coverage(ctx: MetricContext) -> MetricResult:
    name = "threat_coverage"
    if not ctx.enemies:
        return not_applicable(name, "no enemies detected")
    watched = total = 0
    per_enemy = {e: [0, 0] for e in ctx.enemies}
    for f in ctx.frames:
        present = ctx.members_in_room(f)
        if not present:
            continue
        for e in ctx.enemies:
            det = ctx.detections.get(e, {}).get(f)
            cleared_at = ctx.clearance[e][0]
            if det is None or (cleared_at is not None and f >= cleared_at):
                continue
            seen = any(ctx.looks_at(m, f, det.bbox) for m in present)
            total += 1
            watched += seen
            per_enemy[e][0] += seen
            per_enemy[e][1] += 1
    if total == 0:
        return not_applicable(name, "no frames with a team member and an uncleared enemy")
    per_agent = {e: (w / n if n else None) for e, (w, n) in per_enemy.items()}
    return MetricResult(name, watched / total, per_agent,
                        [((ctx.frames.start, ctx.frames.stop - 1), f"{watched}/{total} enemy-frames watched")])


def teammate_coverage(ctx: MetricContext) -> MetricResult:
    name = "teammate_coverage"
    if len(ctx.members) < 2:
        return not_applicable(name, "solo team")
    team_time = unseen = 0
    per = {m: [0, 0] for m in ctx.members}
    for f in ctx.frames:
        present = ctx.members_in_room(f)
        for m in present:
            team_time += 1
            per[m][1] += 1
            others = [o for o in present if o != m]
            if not others:
                continue
            box = ctx.detections[m][f].bbox
            if not any(ctx.looks_at(o, f, box) for o in others):
                unseen += 1
                per[m][0] += 1
    if team_time == 0:
        return not_applicable(name, "no team time in room")
    per_agent = {m: (1.0 - u / n if n else None) for m, (u, n) in per.items()}
    return MetricResult(name, 1.0 - unseen / team_time, per_agent,
                        [((ctx.frames.start, ctx.frames.stop - 1),
                          f"unseen {unseen / ctx.fps:.3f}s of {team_time / ctx.fps:.3f}s team time")])


def coverage_grid(ctx: MetricContext) -> CoverageGrid:
    grid = CoverageGrid(ctx.config.room_polygon, ctx.params.floor_grid_cell)
    for f in ctx.frames:
        for m in ctx.members_in_room(f):
            rec = ctx.gaze.get(m, {}).get(f)
            if rec is not None and rec.map_triangle is not None:
                grid.mark(rec.map_triangle, f)
    return grid


def floor_coverage(ctx: MetricContext, grid: Optional[CoverageGrid] = None) -> MetricResult:
    name = "floor_coverage"
    grid = grid or coverage_grid(ctx)
    if grid.interior_count == 0:
        return not_applicable(name, "room has no interior cells at this grid size")
    ev = [((ctx.frames.start, max(ctx.frames.start, ctx.frames.stop - 1)),
           f"{grid.covered_count}/{grid.interior_count} cells covered")]
    return MetricResult(name, grid.covered_count / grid.interior_count, {}, ev)


def total_floor_coverage_time(ctx: MetricContext, grid: Optional[CoverageGrid] = None) -> MetricResult:
    name = "total_floor_coverage_time"
    grid = grid or coverage_grid(ctx)
    if grid.interior_count == 0:
        return not_applicable(name, "room has no interior cells at this grid size")
    if grid.first_full_frame is None or not ctx.members:
        return MetricResult(name, 0.0, {}, [((0, 0), "floor never fully covered")])
    start = ctx.roles[ctx.members[0]].entry_time
    t_full = grid.first_full_frame / ctx.fps - start
    score = penalty(t_full - ctx.params.floor_time_limit, ctx.params.penalty_rate)
    return MetricResult(name, score, {}, [((ctx.entry_frame(ctx.members[0]), grid.first_full_frame),
                                           f"full coverage {t_full:.3f}s after first entry")])


METRICS: dict[str, Callable[[MetricContext], MetricResult]] = {
    "entrance_vectors": entrance_vectors,
    "entrance_hesitation": entrance_hesitation,
    "identify_capture_pod": identify_capture_pod,
    "pod_capture_time": pod_capture_time,
    "move_along_wall": move_along_wall,
    "threat_clearance": threat_clearance,
    "threat_coverage": threat_coverage,
    "teammate_coverage": teammate_coverage,
    "floor_coverage": floor_coverage,
    "total_floor_coverage_time": total_floor_coverage_time,
}
assert tuple(METRICS) == METRIC_NAMES


def compute_all(ctx: MetricContext) -> dict[str, MetricResult]:
    grid = coverage_grid(ctx)
    out = {}
    for name, fn in METRICS.items():
        if name in ("floor_coverage", "total_floor_coverage_time"):
            out[name] = fn(ctx, grid)
        else:
            out[name] = fn(ctx)
    return out


def scores(results: dict[str, MetricResult]) -> dict[str, Optional[float]]:
    return {k: v.score for k, v in results.items()}
