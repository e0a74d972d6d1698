"""Tunable parameters for every pipeline stage.

None of the defaults come from published data; they are engineering choices
and all of them can be overridden from the room config or ``--params``.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError

# Halpe26 keypoint indices
NOSE, LEYE, REYE, LEAR, REAR = 0, 1, 2, 3, 4
LSHOULDER, RSHOULDER, LELBOW, RELBOW, LWRIST, RWRIST = 5, 6, 7, 8, 9, 10
LHIP, RHIP, LKNEE, RKNEE, LANKLE, RANKLE = 11, 12, 13, 14, 15, 16
HEAD, NECK, HIP = 17, 18, 19
LBIGTOE, RBIGTOE, LSMALLTOE, RSMALLTOE, LHEEL, RHEEL = 20, 21, 22, 23, 24, 25
NUM_KEYPOINTS = 26

FOOT_KEYPOINTS = (LANKLE, RANKLE, LBIGTOE, RBIGTOE, LSMALLTOE, RSMALLTOE, LHEEL, RHEEL)
WRIST_KEYPOINTS = (LWRIST, RWRIST)

METRIC_NAMES = (
    "entrance_vectors",
    "entrance_hesitation",
    "identify_capture_pod",
    "pod_capture_time",
    "move_along_wall",
    "threat_clearance",
    "threat_coverage",
    "teammate_coverage",
    "floor_coverage",
    "total_floor_coverage_time",
)


@dataclass
class MetricParams:
    entry_gap_general: float = 1.0
    entry_gap_second_third: float = 2.0
    penalty_rate: float = 0.5
    pod_assignment_table: dict[str, list[str]] = field(default_factory=dict)
    pod_hold_min: float = 1.0
    pod_time_limit: float = 5.0
    wall_buffer: float = 0.75
    threat_overlap_min: float = 2.0
    gaze_required: bool = True
    floor_grid_cell: float = 0.25
    floor_time_limit: float = 30.0
    keypoint_conf: float = 0.3
    entry_direction_window: float = 0.5

    def validate(self) -> None:
        for name in ("entry_gap_general", "entry_gap_second_third", "penalty_rate",
                     "pod_hold_min", "pod_time_limit", "threat_overlap_min",
                     "floor_time_limit", "entry_direction_window"):
            if getattr(self, name) < 0:
                raise ConfigError(f"metric_params.{name} must be >= 0")
        if self.wall_buffer <= 0:
            raise ConfigError("metric_params.wall_buffer must be > 0")
        if self.floor_grid_cell <= 0:
            raise ConfigError("metric_params.floor_grid_cell must be > 0")
        if not 0.0 <= self.keypoint_conf <= 1.0:
            raise ConfigError("metric_params.keypoint_conf must be in [0, 1]")


@dataclass
class TrackerParams:
    iou_floor: float = 0.1
    direction_weight: float = 0.2
    delta_t: int = 3
    max_age: int = 30
    min_hits: int = 3
    area_floor: float = 1.0
    use_track_hints: bool = True


@dataclass
class MappingParams:
    keypoint_conf: float = 0.3
    process_noise: float = 1.0
    measurement_noise: float = 4.0
    fallback_lag: int = 3
    d_ref: float = 0.15
    alpha_min: float = 0.2
    alpha_max: float = 0.9
    v_max: float = 6.0
    entry_hysteresis: float = 0.25
    calibration_tolerance: float = 0.05


@dataclass
class GazeParams:
    keypoint_conf: float = 0.3
    half_angle_deg: float = 10.0
    # image-space length used when the gaze origin is not inside the room
    fallback_length_px: float = 400.0


SECTIONS = {
    "metric_params": MetricParams,
    "tracker": TrackerParams,
    "mapping": MappingParams,
    "gaze": GazeParams,
}


def from_dict(cls, data: dict[str, Any] | None):
    data = dict(data or {})
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} fields: {sorted(unknown)}")
    obj = cls(**data)
    if hasattr(obj, "validate"):
        obj.validate()
    return obj


def _coerce(value: str, current: Any) -> Any:
    if isinstance(current, bool):
        if value.lower() in ("1", "true", "yes", "on"):
            return True
        if value.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {value!r}")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    # dicts and lists come in as JSON
    return json.loads(value)


def apply_override(obj, key: str, value: str) -> None:
    if not hasattr(obj, key) or key.startswith("_"):
        raise ConfigError(f"unknown parameter {key!r} for {type(obj).__name__}")
    try:
        setattr(obj, key, _coerce(value, getattr(obj, key)))
    except (ValueError, json.JSONDecodeError) as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc
