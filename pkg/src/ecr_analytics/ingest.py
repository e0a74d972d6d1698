"""Detection-stream parsing and room configuration loading.

Detection stream: UTF-8 JSON lines, one detection per line::

    {"frame": 12, "bbox": [x1, y1, x2, y2], "keypoints": [[x, y, conf], ...26], "track_hint": 3}

Frame indices must be nondecreasing; lines of one frame are grouped and keep
their order.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Union

import numpy as np

from . import geometry as geo
from .config import NUM_KEYPOINTS, GazeParams, MappingParams, MetricParams, TrackerParams, from_dict
from .errors import (
    ConfigError,
    DegenerateRoomPolygon,
    MalformedRecord,
    MissingCalibration,
    NonMonotonicFrameIndex,
    WrongKeypointCount,
)
from .rollup import CtaHierarchy, default_hierarchy, parse_hierarchy


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    confidence: float


def validate_keypoint(k: Keypoint, threshold: float) -> bool:
    return (k.confidence >= threshold
            and math.isfinite(k.x) and math.isfinite(k.y))


def valid_mask(keypoints: np.ndarray, threshold: float) -> np.ndarray:
    """Vectorised ``validate_keypoint`` over a ``(26, 3)`` array."""
    kp = np.asarray(keypoints, dtype=float)
    return (kp[:, 2] >= threshold) & np.isfinite(kp[:, 0]) & np.isfinite(kp[:, 1])


@dataclass
class Detection:
    frame_index: int
    bbox: tuple[float, float, float, float]
    keypoints: np.ndarray  # (26, 3): x, y, confidence
    track_hint: Optional[int] = None

    @property
    def center(self) -> np.ndarray:
        x1, y1, x2, y2 = self.bbox
        return np.array([(x1 + x2) / 2.0, (y1 + y2) / 2.0])

    def to_dict(self) -> dict:
        d = {
            "frame": self.frame_index,
            "bbox": [float(v) for v in self.bbox],
            "keypoints": [[float(x), float(y), float(c)] for x, y, c in self.keypoints],
        }
        if self.track_hint is not None:
            d["track_hint"] = self.track_hint
        return d


@dataclass
class FrameSequence:
    frames: list[tuple[int, list[Detection]]]
    fps: float = 30.0

    def __post_init__(self):
        if not self.fps > 0:
            raise ConfigError("fps must be positive")

    @property
    def frame_range(self) -> range:
        if not self.frames:
            return range(0)
        return range(self.frames[0][0], self.frames[-1][0] + 1)

    def by_frame(self) -> dict[int, list[Detection]]:
        return dict(self.frames)

    def num_detections(self) -> int:
        return sum(len(d) for _, d in self.frames)


def _parse_detection(obj, line_no: int) -> Detection:
    if not isinstance(obj, dict):
        raise MalformedRecord(line_no, "record is not an object")
    try:
        frame = obj["frame"]
        bbox = obj["bbox"]
        kps = obj["keypoints"]
    except KeyError as exc:
        raise MalformedRecord(line_no, f"missing field {exc.args[0]!r}") from None
    if isinstance(frame, bool) or not isinstance(frame, int) or frame < 0:
        raise MalformedRecord(line_no, "frame must be a nonnegative integer")
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise MalformedRecord(line_no, "bbox must have 4 numbers")
    try:
        box = tuple(float(v) for v in bbox)
    except (TypeError, ValueError):
        raise MalformedRecord(line_no, "bbox must have 4 numbers") from None
    if not all(math.isfinite(v) for v in box) or not (box[0] < box[2] and box[1] < box[3]):
        raise MalformedRecord(line_no, "bbox must satisfy x1 < x2 and y1 < y2")
    if not isinstance(kps, list):
        raise MalformedRecord(line_no, "keypoints must be a list")
    if len(kps) != NUM_KEYPOINTS:
        raise WrongKeypointCount(line_no, len(kps))
    try:
        arr = np.array(kps, dtype=float)
    except (TypeError, ValueError):
        raise MalformedRecord(line_no, "keypoints must be [x, y, conf] triples") from None
    if arr.shape != (NUM_KEYPOINTS, 3):
        raise MalformedRecord(line_no, "keypoints must be [x, y, conf] triples")
    conf = arr[:, 2]
    if np.any(~np.isfinite(conf)) or np.any((conf < 0) | (conf > 1)):
        raise MalformedRecord(line_no, "keypoint confidence outside [0, 1]")
    hint = obj.get("track_hint")
    if hint is not None and (isinstance(hint, bool) or not isinstance(hint, int)):
        raise MalformedRecord(line_no, "track_hint must be an integer")
    return Detection(frame_index=frame, bbox=box, keypoints=arr, track_hint=hint)


def parse_frames(stream: Union[bytes, str, IO], fps: float = 30.0) -> FrameSequence:
    """Parse a detection stream (bytes, text or file object)."""
    if isinstance(stream, bytes):
        stream = io.StringIO(stream.decode("utf-8"))
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    frames: list[tuple[int, list[Detection]]] = []
    prev = -1
    for line_no, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise MalformedRecord(line_no, f"invalid JSON ({exc.msg})") from None
        det = _parse_detection(obj, line_no)
        if det.frame_index < prev:
            raise NonMonotonicFrameIndex(line_no, det.frame_index, prev)
        if det.frame_index == prev:
            frames[-1][1].append(det)
        else:
            frames.append((det.frame_index, [det]))
        prev = det.frame_index
    return FrameSequence(frames=frames, fps=fps)


def dump_frames(seq: FrameSequence) -> str:
    out = []
    for _, dets in seq.frames:
        for d in dets:
            out.append(json.dumps(d.to_dict(), separators=(",", ":")))
    return "".join(line + "\n" for line in out)


def read_frames(path, fps: float = 30.0) -> FrameSequence:
    with open(path, "rb") as fh:
        return parse_frames(fh.read(), fps=fps)


@dataclass
class RoomConfig:
    room_polygon: np.ndarray
    wall_segments: np.ndarray
    entry_zone: np.ndarray
    pod_regions: dict[str, np.ndarray]
    calibration_pixels: np.ndarray
    calibration_map: np.ndarray
    metric_params: MetricParams = field(default_factory=MetricParams)
    hierarchy: CtaHierarchy = field(default_factory=default_hierarchy)
    tracker: TrackerParams = field(default_factory=TrackerParams)
    mapping: MappingParams = field(default_factory=MappingParams)
    gaze: GazeParams = field(default_factory=GazeParams)
    door_normal: Optional[np.ndarray] = None
    fps: Optional[float] = None
    units: str = "meters"

    @property
    def calibration_pairs(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.calibration_pixels, self.calibration_map))

    def all_walls(self) -> np.ndarray:
        """Explicit wall segments plus the room boundary."""
        boundary = geo.edges(self.room_polygon)
        if len(self.wall_segments) == 0:
            return boundary
        return np.concatenate([self.wall_segments, boundary], axis=0)

    def entry_normal(self) -> np.ndarray:
        """Unit vector pointing from the doorway into the room."""
        if self.door_normal is not None:
            n = np.asarray(self.door_normal, dtype=float)
        else:
            n = geo.polygon_centroid(self.room_polygon) - geo.polygon_centroid(self.entry_zone)
        return n / np.linalg.norm(n)

    def check_invariants(self) -> None:
        if not geo.is_simple_polygon(self.room_polygon):
            raise DegenerateRoomPolygon("room polygon must be simple with nonzero area")
        if not geo.is_simple_polygon(self.entry_zone):
            raise DegenerateRoomPolygon("entry zone must be a simple polygon")
        if not geo.polygons_intersect(self.entry_zone, self.room_polygon):
            raise ConfigError("entry zone does not intersect the room")
        for name, poly in self.pod_regions.items():
            if not geo.is_simple_polygon(poly):
                raise DegenerateRoomPolygon(f"POD {name!r} is not a simple polygon")
        if len(self.calibration_pixels) < 4:
            raise MissingCalibration("need at least 4 calibration pairs")
        if self.door_normal is not None and not np.linalg.norm(self.door_normal) > 0:
            raise ConfigError("door_normal must be nonzero")
        for table_pods in self.metric_params.pod_assignment_table.values():
            for pod in table_pods:
                if pod not in self.pod_regions:
                    raise ConfigError(f"pod_assignment_table names unknown POD {pod!r}")

    def to_dict(self) -> dict:
        """JSON form; loading it back yields an equivalent config."""
        from dataclasses import asdict

        d = {
            "units": self.units,
            "room": self.room_polygon.tolist(),
            "walls": self.wall_segments.tolist(),
            "entry_zone": self.entry_zone.tolist(),
            "pods": {k: v.tolist() for k, v in sorted(self.pod_regions.items())},
            "calibration": {
                "pairs": [{"pixel": p.tolist(), "map": m.tolist()}
                          for p, m in zip(self.calibration_pixels, self.calibration_map)],
            },
            "metric_params": asdict(self.metric_params),
            "hierarchy": self.hierarchy.to_dict(),
            "tracker": asdict(self.tracker),
            "mapping": asdict(self.mapping),
            "gaze": asdict(self.gaze),
        }
        if self.door_normal is not None:
            d["door_normal"] = np.asarray(self.door_normal, dtype=float).tolist()
        if self.fps is not None:
            d["fps"] = self.fps
        return d


def _poly(data, what: str) -> np.ndarray:
    try:
        arr = np.asarray(data, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{what} must be a list of [x, y] points") from None
    if arr.ndim != 2 or arr.shape[1] != 2 or not np.all(np.isfinite(arr)):
        raise ConfigError(f"{what} must be a list of [x, y] points")
    return arr


def room_config_from_dict(data: dict) -> RoomConfig:
    if not isinstance(data, dict):
        raise ConfigError("room config must be a JSON object")
    units = data.get("units", "meters")
    if units not in ("meters", "m"):
        raise ConfigError(f"map units must be meters, got {units!r}")
    for key in ("room", "entry_zone", "calibration"):
        if key not in data:
            raise ConfigError(f"room config lacks section {key!r}")
    room = _poly(data["room"], "room")
    if len(room) < 3 or not geo.is_simple_polygon(room):
        raise DegenerateRoomPolygon("room polygon must be simple with nonzero area")
    walls_raw = data.get("walls", [])
    walls = np.asarray(walls_raw, dtype=float).reshape(-1, 2, 2) if walls_raw else np.zeros((0, 2, 2))
    entry = _poly(data["entry_zone"], "entry_zone")
    pods = {str(k): _poly(v, f"pod {k}") for k, v in data.get("pods", {}).items()}

    cal = data["calibration"]
    pairs = cal.get("pairs", []) if isinstance(cal, dict) else cal
    try:
        pix = np.array([p["pixel"] for p in pairs], dtype=float).reshape(-1, 2)
        mp = np.array([p["map"] for p in pairs], dtype=float).reshape(-1, 2)
    except (KeyError, TypeError, ValueError):
        raise ConfigError("calibration pairs need 'pixel' and 'map' points") from None
    if len(pix) < 4:
        raise MissingCalibration(f"need at least 4 calibration pairs, got {len(pix)}")

    mapping_data = dict(data.get("mapping", {}))
    if isinstance(cal, dict) and "tolerance" in cal:
        mapping_data.setdefault("calibration_tolerance", float(cal["tolerance"]))

    metric_data = dict(data.get("metric_params", {}))
    hierarchy = parse_hierarchy(data["hierarchy"]) if "hierarchy" in data else default_hierarchy()
    normal = data.get("door_normal")
    fps = data.get("fps")
    cfg = RoomConfig(
        room_polygon=room,
        wall_segments=walls,
        entry_zone=entry,
        pod_regions=pods,
        calibration_pixels=pix,
        calibration_map=mp,
        metric_params=from_dict(MetricParams, metric_data),
        hierarchy=hierarchy,
        tracker=from_dict(TrackerParams, data.get("tracker")),
        mapping=from_dict(MappingParams, mapping_data),
        gaze=from_dict(GazeParams, data.get("gaze")),
        door_normal=None if normal is None else np.asarray(normal, dtype=float),
        fps=None if fps is None else float(fps),
        units="meters",
    )
    cfg.check_invariants()
    return cfg


def load_room_config(file) -> RoomConfig:
    """Load a room config from a path or an open text file."""
    if isinstance(file, (str, Path)):
        with open(file, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = file.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"room config is not valid JSON: {exc.msg}") from None
    return room_config_from_dict(data)


def iter_detections(seq: FrameSequence) -> Iterable[Detection]:
    for _, dets in seq.frames:
        yield from dets
