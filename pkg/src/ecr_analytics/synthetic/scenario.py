"""Scripted drill scenarios: agents, waypoint paths, gaze schedules, noise."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import geometry as geo
from ..errors import InputError, WaypointOutsideRoom
from ..ingest import RoomConfig, room_config_from_dict

GAZE_KINDS = ("travel", "angle", "sweep", "point", "agent", "none")


@dataclass
class GazeSegment:
    """Active from ``t`` until the next segment starts.

    kinds: ``travel`` (face the walking direction), ``angle`` (fixed heading,
    degrees CCW from +x), ``sweep`` (linear from ``deg`` to ``to_deg`` over
    [t, t_end], then hold), ``point`` (look at a map point), ``agent`` (look
    at another agent by index), ``none`` (head not visible).
    """
    t: float
    kind: str = "travel"
    deg: float = 0.0
    to_deg: Optional[float] = None
    t_end: Optional[float] = None
    target: Optional[list] = None
    agent: Optional[int] = None

    def to_dict(self) -> dict:
        d = {"t": self.t, "kind": self.kind}
        if self.kind in ("angle", "sweep"):
            d["deg"] = self.deg
        if self.kind == "sweep":
            d["to_deg"] = self.to_deg
            d["t_end"] = self.t_end
        if self.kind == "point":
            d["target"] = list(self.target)
        if self.kind == "agent":
            d["agent"] = self.agent
        return d


@dataclass
class AgentScript:
    name: str
    role: str  # "team" or "enemy"
    waypoints: np.ndarray  # (n, 3): t, x, y
    gaze: list[GazeSegment] = field(default_factory=list)
    height: float = 1.75

    @property
    def t_start(self) -> float:
        return float(self.waypoints[0, 0])

    @property
    def t_end(self) -> float:
        return float(self.waypoints[-1, 0])

    def position(self, t: float) -> np.ndarray:
        w = self.waypoints
        return np.array([np.interp(t, w[:, 0], w[:, 1]), np.interp(t, w[:, 0], w[:, 2])])

    def to_dict(self) -> dict:
        return {"name": self.name, "role": self.role, "height": self.height,
                "waypoints": self.waypoints.tolist(), "gaze": [g.to_dict() for g in self.gaze]}


@dataclass
class NoiseModel:
    keypoint_sigma: float = 0.5  # pixels
    keypoint_dropout: float = 0.01
    foot_dropout: float = 0.0
    detection_dropout: float = 0.0
    bbox_sigma: float = 0.5
    occlusions: list = field(default_factory=list)  # [agent index, t0, t1]

    @classmethod
    def zero(cls) -> "NoiseModel":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, [])

    def to_dict(self) -> dict:
        return {"keypoint_sigma": self.keypoint_sigma, "keypoint_dropout": self.keypoint_dropout,
                "foot_dropout": self.foot_dropout, "detection_dropout": self.detection_dropout,
                "bbox_sigma": self.bbox_sigma, "occlusions": [list(o) for o in self.occlusions]}


@dataclass
class ScenarioScript:
    room: RoomConfig
    agents: list[AgentScript]
    camera: np.ndarray  # map -> pixel homography
    noise: NoiseModel = field(default_factory=NoiseModel)
    fps: float = 15.0
    seed: int = 0
    duration: Optional[float] = None
    name: str = "scenario"

    @property
    def num_frames(self) -> int:
        end = self.duration if self.duration is not None else max((a.t_end for a in self.agents), default=0.0)
        return int(round(end * self.fps)) + 1

    def validate(self) -> None:
        room = self.room.room_polygon
        for i, a in enumerate(self.agents):
            if a.role not in ("team", "enemy"):
                raise InputError(f"agent {a.name}: role must be 'team' or 'enemy'")
            w = a.waypoints
            if w.ndim != 2 or w.shape[1] != 3 or len(w) == 0:
                raise InputError(f"agent {a.name}: waypoints must be rows of (t, x, y)")
            if len(w) > 1 and np.any(np.diff(w[:, 0]) <= 0):
                raise InputError(f"agent {a.name}: waypoint times must be strictly increasing")
            for t, x, y in w:
                p = (x, y)
                if not (geo.point_in_polygon(p, room) or geo.point_in_polygon(p, self.room.entry_zone)):
                    raise WaypointOutsideRoom(f"agent {a.name}: waypoint ({x}, {y}) at t={t} is outside the room")
            for g in a.gaze:
                if g.kind not in GAZE_KINDS:
                    raise InputError(f"agent {a.name}: unknown gaze kind {g.kind!r}")
                if g.kind == "agent" and not (g.agent is not None and 0 <= g.agent < len(self.agents) and g.agent != i):
                    raise InputError(f"agent {a.name}: gaze target agent {g.agent} is invalid")
                if g.kind == "point" and (g.target is None or len(g.target) != 2):
                    raise InputError(f"agent {a.name}: point gaze needs a 2-d target")
                if g.kind == "sweep" and (g.to_deg is None or g.t_end is None or g.t_end <= g.t):
                    raise InputError(f"agent {a.name}: sweep needs to_deg and t_end > t")
            if any(b.t <= a_.t for a_, b in zip(a.gaze, a.gaze[1:])):
                raise InputError(f"agent {a.name}: gaze segment times must be strictly increasing")
        if np.asarray(self.camera).shape != (3, 3):
            raise InputError("camera must be a 3x3 matrix")

    def to_dict(self) -> dict:
        return {"name": self.name, "fps": self.fps, "seed": self.seed, "duration": self.duration,
                "camera": np.asarray(self.camera).tolist(), "room": self.room.to_dict(),
                "noise": self.noise.to_dict(), "agents": [a.to_dict() for a in self.agents]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)


def _gaze_from_dict(d: dict) -> GazeSegment:
    return GazeSegment(t=float(d["t"]), kind=d.get("kind", "travel"), deg=float(d.get("deg", 0.0)),
                       to_deg=d.get("to_deg"), t_end=d.get("t_end"), target=d.get("target"),
                       agent=d.get("agent"))


def scenario_from_dict(d: dict) -> ScenarioScript:
    try:
        agents = [AgentScript(name=a.get("name", f"agent{i}"), role=a["role"],
                              waypoints=np.asarray(a["waypoints"], dtype=float).reshape(-1, 3),
                              gaze=[_gaze_from_dict(g) for g in a.get("gaze", [])],
                              height=float(a.get("height", 1.75)))
                  for i, a in enumerate(d["agents"])]
        nd = d.get("noise", {})
        noise = NoiseModel(**{k: nd[k] for k in nd}) if nd else NoiseModel()
        script = ScenarioScript(room=room_config_from_dict(d["room"]), agents=agents,
                                camera=np.asarray(d["camera"], dtype=float), noise=noise,
                                fps=float(d.get("fps", 15.0)), seed=int(d.get("seed", 0)),
                                duration=d.get("duration"), name=d.get("name", "scenario"))
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"invalid scenario script: {exc}") from exc
    script.validate()
    return script


def load_scenario(path) -> ScenarioScript:
    with open(path) as fh:
        return scenario_from_dict(json.load(fh))
