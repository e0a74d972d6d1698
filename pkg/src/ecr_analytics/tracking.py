"""Motion-only multi-person tracker.

Constant-velocity Kalman filter over (center x, center y, area, aspect),
Hungarian association on IoU plus a direction-consistency term, a second
association pass on last observations, and observation-centric re-update:
when a lost track is found again the filter is rolled back to its last real
observation and replayed through interpolated virtual observations.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import linear_sum_assignment

from .config import TrackerParams
from .geometry import iou_matrix
from .ingest import Detection, FrameSequence

# state: cx, cy, area, aspect, vcx, vcy, varea
_F = np.eye(7)
_F[0, 4] = _F[1, 5] = _F[2, 6] = 1.0
_H = np.zeros((4, 7))
_H[:4, :4] = np.eye(4)
_R = np.diag([1.0, 1.0, 10.0, 10.0])
_Q = np.diag([1.0, 1.0, 1.0, 1.0, 0.01, 0.01, 0.0001])
_P0 = np.diag([10.0, 10.0, 10.0, 10.0, 1e4, 1e4, 1e4])


def bbox_to_z(bbox) -> np.ndarray:
    x1, y1, x2, y2 = bbox
    w, h = x2 - x1, y2 - y1
    return np.array([x1 + w / 2.0, y1 + h / 2.0, w * h, w / h])


def z_to_bbox(z) -> tuple[float, float, float, float]:
    cx, cy, s, r = z[:4]
    w = np.sqrt(s * r)
    h = s / w
    return (float(cx - w / 2), float(cy - h / 2), float(cx + w / 2), float(cy + h / 2))


def _center(bbox) -> np.ndarray:
    return np.array([(bbox[0] + bbox[2]) / 2.0, (bbox[1] + bbox[3]) / 2.0])


@dataclass
class TrackState:
    x: np.ndarray
    P: np.ndarray
    age: int = 0
    time_since_update: int = 0
    hit_streak: int = 0
    area_floor: float = 1.0

    @classmethod
    def from_bbox(cls, bbox, area_floor: float = 1.0) -> "TrackState":
        x = np.zeros(7)
        x[:4] = bbox_to_z(bbox)
        return cls(x=x, P=_P0.copy(), area_floor=area_floor)

    def copy(self) -> "TrackState":
        return TrackState(self.x.copy(), self.P.copy(), self.age, self.time_since_update,
                          self.hit_streak, self.area_floor)

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return z_to_bbox(self.x)

    @property
    def velocity(self) -> np.ndarray:
        return self.x[4:6].copy()

    def propagate(self) -> None:
        """Constant-velocity time update (no bookkeeping)."""
        if self.x[2] + self.x[6] <= 0:
            self.x[6] = 0.0
        self.x = _F @ self.x
        self.x[2] = max(self.x[2], self.area_floor)
        self.P = _F @ self.P @ _F.T + _Q

    def correct(self, bbox) -> None:
        """Measurement update (no bookkeeping)."""
        z = bbox_to_z(bbox)
        y = z - _H @ self.x
        s = _H @ self.P @ _H.T + _R
        k = np.linalg.solve(s, _H @ self.P).T
        self.x = self.x + k @ y
        i_kh = np.eye(7) - k @ _H
        # Joseph form keeps P symmetric positive semidefinite
        self.P = i_kh @ self.P @ i_kh.T + k @ _R @ k.T
        self.x[2] = max(self.x[2], self.area_floor)


def predict(state: TrackState) -> tuple[float, float, float, float]:
    """Advance ``state`` one frame in place and return the predicted box."""
    state.propagate()
    state.age += 1
    if state.time_since_update > 0:
        state.hit_streak = 0
    state.time_since_update += 1
    return state.bbox


@dataclass
class Track:
    state: TrackState
    id: Optional[int] = None
    observations: dict[int, Detection] = field(default_factory=dict)
    detection_index: dict[int, int] = field(default_factory=dict)
    last_observation: Optional[tuple[int, tuple]] = None
    direction_estimate: Optional[np.ndarray] = None
    hits: int = 0
    hint: Optional[int] = None
    # filter state right after the most recent real observation
    snapshot: Optional[TrackState] = None
    delta_t: int = 3

    @property
    def confirmed(self) -> bool:
        return self.id is not None

    @property
    def frames(self) -> list[int]:
        return sorted(self.observations)

    def _reference_observation(self, frame: int):
        for dt in range(self.delta_t, 0, -1):
            det = self.observations.get(frame - dt)
            if det is not None:
                return det.bbox
        return self.last_observation[1] if self.last_observation else None

    def _record(self, detection: Detection, frame: int, index: Optional[int]) -> None:
        ref = self._reference_observation(frame)
        if ref is not None:
            d = _center(detection.bbox) - _center(ref)
            n = np.linalg.norm(d)
            if n > 1e-6:
                self.direction_estimate = d / n
        self.observations[frame] = detection
        if index is not None:
            self.detection_index[frame] = index
        self.last_observation = (frame, tuple(detection.bbox))
        self.hits += 1
        self.state.hit_streak += 1
        self.state.time_since_update = 0
        self.snapshot = self.state.copy()


def new_track(detection: Detection, frame: int, params: TrackerParams, index: Optional[int] = None) -> Track:
    t = Track(state=TrackState.from_bbox(detection.bbox, params.area_floor), delta_t=params.delta_t)
    t.hint = detection.track_hint
    t._record(detection, frame, index)
    return t


def update(track: Track, detection: Detection, frame: int, index: Optional[int] = None) -> Track:
    """Measurement update for a detection matched at ``frame``.

    Assumes the state was already predicted to ``frame``.
    """
    track.state.correct(detection.bbox)
    track._record(detection, frame, index)
    return track


def reupdate_after_gap(track: Track, redetection: Detection, frame: int,
                       index: Optional[int] = None) -> Track:
    """Re-find a track after missed frames, replacing drift with interpolation.

    The filter is restored to its state at the last real observation, then
    stepped through linearly interpolated virtual boxes for the missed frames
    before the real update is applied.
    """
    last_frame, last_box = track.last_observation
    gap = frame - last_frame - 1
    if track.snapshot is None or gap < 0:
        return update(track, redetection, frame, index)
    age, streak = track.state.age, track.state.hit_streak
    state = track.snapshot.copy()
    a = np.asarray(last_box, dtype=float)
    b = np.asarray(redetection.bbox, dtype=float)
    for i in range(1, gap + 1):
        state.propagate()
        state.correct(a + (b - a) * i / (gap + 1))
    state.propagate()
    state.age, state.hit_streak = age, streak
    track.state = state
    return update(track, redetection, frame, index)


def _direction_cost(tracks: list[Track], dets: list[Detection]) -> np.ndarray:
    cost = np.zeros((len(tracks), len(dets)))
    centers = np.array([_center(d.bbox) for d in dets]).reshape(-1, 2)
    for i, t in enumerate(tracks):
        if t.direction_estimate is None or t.last_observation is None:
            continue
        d = centers - _center(t.last_observation[1])
        norm = np.linalg.norm(d, axis=1)
        cosang = np.where(norm > 1e-6, (d @ t.direction_estimate) / np.maximum(norm, 1e-12), 1.0)
        cost[i] = np.arccos(np.clip(cosang, -1.0, 1.0)) / np.pi
    return cost


def associate(predicted_boxes, tracks: list[Track], dets: list[Detection], params: TrackerParams):
    """Optimal one-to-one matching of predicted boxes to detections.

    Returns ``(matches, unmatched_track_idx, unmatched_det_idx)`` where matches
    are ``(track_idx, det_idx)`` pairs. Pairs below the IoU floor never match.
    """
    n_t, n_d = len(tracks), len(dets)
    if n_t == 0 or n_d == 0:
        return [], list(range(n_t)), list(range(n_d))
    iou = iou_matrix(predicted_boxes, [d.bbox for d in dets])
    cost = (1.0 - iou) + params.direction_weight * _direction_cost(tracks, dets)
    allowed = iou >= params.iou_floor
    big = 1e6
    rows, cols = linear_sum_assignment(np.where(allowed, cost, big))
    matches = [(int(r), int(c)) for r, c in zip(rows, cols) if allowed[r, c]]
    mt = {r for r, _ in matches}
    md = {c for _, c in matches}
    return matches, [i for i in range(n_t) if i not in mt], [j for j in range(n_d) if j not in md]


def _associate_last_observation(tracks: list[Track], dets: list[Detection], params: TrackerParams):
    boxes = [t.last_observation[1] for t in tracks]
    iou = iou_matrix(boxes, [d.bbox for d in dets])
    allowed = iou >= params.iou_floor
    if not allowed.any():
        return []
    rows, cols = linear_sum_assignment(np.where(allowed, 1.0 - iou, 1e6))
    return [(int(r), int(c)) for r, c in zip(rows, cols) if allowed[r, c]]


class Tracker:
    """Frame-by-frame tracker; ``step`` must be called for every frame index."""

    def __init__(self, params: Optional[TrackerParams] = None):
        self.params = params or TrackerParams()
        self.active: list[Track] = []
        self.finished: list[Track] = []
        self._next_id = 1

    def _confirm(self, track: Track) -> None:
        if track.id is None:
            track.id = self._next_id
            self._next_id += 1

    def step(self, frame: int, dets: list[Detection]) -> None:
        p = self.params
        predicted = [predict(t.state) for t in self.active]
        matches, um_t, um_d = associate(predicted, self.active, dets, p)
        if um_t and um_d:
            sub_t = [self.active[i] for i in um_t]
            sub_d = [dets[j] for j in um_d]
            extra = _associate_last_observation(sub_t, sub_d, p)
            matches += [(um_t[a], um_d[b]) for a, b in extra]
            got_t = {um_t[a] for a, _ in extra}
            got_d = {um_d[b] for _, b in extra}
            um_t = [i for i in um_t if i not in got_t]
            um_d = [j for j in um_d if j not in got_d]

        for ti, di in matches:
            t = self.active[ti]
            if frame - t.last_observation[0] > 1:
                reupdate_after_gap(t, dets[di], frame, di)
            else:
                update(t, dets[di], frame, di)
            if t.state.hit_streak >= p.min_hits:
                self._confirm(t)

        for di in um_d:
            t = new_track(dets[di], frame, p, di)
            if (p.use_track_hints and dets[di].track_hint is not None) or p.min_hits <= 1:
                self._confirm(t)
            self.active.append(t)

        keep = []
        for t in self.active:
            if t.state.time_since_update > p.max_age:
                self.finished.append(t)
            else:
                keep.append(t)
        self.active = keep

    def tracks(self) -> list[Track]:
        """Confirmed tracks, ordered by id."""
        out = [t for t in self.finished + self.active if t.confirmed]
        return sorted(out, key=lambda t: t.id)


def run_tracker(frames: FrameSequence, params: Optional[TrackerParams] = None) -> list[Track]:
    tracker = Tracker(params)
    by_frame = frames.by_frame()
    for f in frames.frame_range:
        tracker.step(f, by_frame.get(f, []))
    return tracker.tracks()


def dump_tracks(tracks: list[Track]) -> str:
    rows = []
    for t in tracks:
        for f, det in t.observations.items():
            rows.append((f, t.id, det.bbox))
    rows.sort(key=lambda r: (r[0], r[1]))
    return "".join(
        json.dumps({"frame": f, "track_id": tid, "bbox": [float(v) for v in box]}, separators=(",", ":")) + "\n"
        for f, tid, box in rows
    )
