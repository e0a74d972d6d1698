"""Gaze focus triangles from head keypoints.

The gaze origin is the eye midpoint (one eye, or the nose, as fallbacks) and
the direction points from the ear midpoint through it.  The triangle opens
``half_angle_deg`` either side of that direction.  Its length runs to the
nearest wall: the ray is cast on the floor map and the hit point is mapped
back into the image.

Box intersections (threats, teammates) are tested in image space, where the
boxes live.  Floor coverage uses the triangle projected onto the map and
clipped to the room.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import geometry as geo
from .config import LEAR, LEYE, NOSE, REAR, REYE, GazeParams
from .errors import CoincidentPoints, NoEars, OriginOutsideRoom
from .homography import Homography, project_many
from .ingest import RoomConfig, valid_mask
from .tracking import Track

EYES_MIDPOINT = "eyes-midpoint"
SINGLE_EYE = "single-eye"
NOSE_FALLBACK = "nose-fallback"


@dataclass
class GazeRecord:
    track_id: int
    frame_index: int
    origin: np.ndarray
    direction: np.ndarray
    source: str
    image_triangle: np.ndarray  # (3, 2) apex first
    map_triangle: Optional[np.ndarray] = None
    map_origin: Optional[np.ndarray] = None
    map_direction: Optional[np.ndarray] = None


def gaze_origin(keypoints, conf_threshold: float):
    """``(point, source)`` or None when neither eyes nor nose are usable."""
    kp = np.asarray(keypoints, dtype=float)
    ok = valid_mask(kp, conf_threshold)
    if ok[LEYE] and ok[REYE]:
        return (kp[LEYE, :2] + kp[REYE, :2]) / 2.0, EYES_MIDPOINT
    if ok[LEYE]:
        return kp[LEYE, :2].copy(), SINGLE_EYE
    if ok[REYE]:
        return kp[REYE, :2].copy(), SINGLE_EYE
    if ok[NOSE]:
        return kp[NOSE, :2].copy(), NOSE_FALLBACK
    return None


def ear_point(keypoints, conf_threshold: float) -> Optional[np.ndarray]:
    """Ear midpoint, or the single valid ear."""
    kp = np.asarray(keypoints, dtype=float)
    ok = valid_mask(kp, conf_threshold)
    if ok[LEAR] and ok[REAR]:
        return (kp[LEAR, :2] + kp[REAR, :2]) / 2.0
    if ok[LEAR]:
        return kp[LEAR, :2].copy()
    if ok[REAR]:
        return kp[REAR, :2].copy()
    return None


def gaze_direction(origin, ear) -> np.ndarray:
    if ear is None:
        raise NoEars("no valid ear keypoint")
    d = np.asarray(origin, dtype=float) - np.asarray(ear, dtype=float)
    n = float(np.hypot(d[0], d[1]))
    if n < 1e-6:
        raise CoincidentPoints("gaze origin coincides with the ear point")
    return d / n


def gaze_triangle(origin, g, half_angle_deg: float, length: float) -> np.ndarray:
    o = np.asarray(origin, dtype=float)
    v1 = o + geo.rotate(g, +half_angle_deg) * length
    v2 = o + geo.rotate(g, -half_angle_deg) * length
    return np.array([o, v1, v2])


def clip_length_to_walls(origin_map, g_map, room_polygon, walls=None) -> float:
    """Distance from ``origin_map`` along ``g_map`` to the first wall or boundary."""
    room = geo.as_points(room_polygon)
    if not geo.point_in_polygon(origin_map, room):
        raise OriginOutsideRoom(f"gaze origin {tuple(origin_map)} is outside the room")
    segs = geo.edges(room)
    if walls is not None and len(walls):
        segs = np.concatenate([np.asarray(walls, dtype=float).reshape(-1, 2, 2), segs])
    return geo.ray_segments_distance(origin_map, g_map, segs)


def triangle_intersects_box(triangle, bbox) -> bool:
    t = np.asarray(triangle, dtype=float)
    lo, hi = t.min(axis=0), t.max(axis=0)
    # axis-aligned separation settles most pairs without the full test
    if hi[0] < bbox[0] - 1e-9 or bbox[2] < lo[0] - 1e-9 or hi[1] < bbox[1] - 1e-9 or bbox[3] < lo[1] - 1e-9:
        return False
    return geo.convex_polygons_overlap(t, geo.box_corners(bbox))


def project_triangle_to_floor(h: Homography, triangle, room_polygon) -> np.ndarray:
    """Map-space polygon: projected triangle clipped to the room."""
    tri_map = project_many(h, triangle)
    return geo.clip_polygon(room_polygon, tri_map)


def _pick(kp: np.ndarray, ok: np.ndarray, pair: tuple[int, int], single: tuple[int, ...]):
    """Per-row midpoint of ``pair`` when both are valid, else the first valid
    of ``single``; returns ``(points, source_code)`` with code -1 for none."""
    n = len(kp)
    pts = np.full((n, 2), np.nan)
    code = np.full(n, -1)
    a, b = pair
    both = ok[:, a] & ok[:, b]
    pts[both] = (kp[both, a, :2] + kp[both, b, :2]) / 2.0
    code[both] = 0
    for rank, k in enumerate(single, start=1):
        use = (code < 0) & ok[:, k]
        pts[use] = kp[use, k, :2]
        code[use] = rank
    return pts, code


def _project_rows(h: Homography, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project ``(n, 2)`` points; rows mapping to infinity come back flagged."""
    m = h.matrix
    w = m[2, 0] * pts[:, 0] + m[2, 1] * pts[:, 1] + m[2, 2]
    finite = np.abs(w) >= 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.column_stack([(m[0, 0] * pts[:, 0] + m[0, 1] * pts[:, 1] + m[0, 2]) / w,
                               (m[1, 0] * pts[:, 0] + m[1, 1] * pts[:, 1] + m[1, 2]) / w])
    return out, finite & np.isfinite(out).all(axis=1)


def _ray_distances(origins: np.ndarray, dirs: np.ndarray, segs: np.ndarray) -> np.ndarray:
    """Row-wise ``geometry.ray_segments_distance``."""
    a = segs[None, :, 0]
    e = (segs[:, 1] - segs[:, 0])[None]
    g = dirs[:, None]
    rel = a - origins[:, None]
    denom = g[..., 0] * e[..., 1] - g[..., 1] * e[..., 0]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = (rel[..., 0] * e[..., 1] - rel[..., 1] * e[..., 0]) / denom
        u = (rel[..., 0] * g[..., 1] - rel[..., 1] * g[..., 0]) / denom
    ok = (np.abs(denom) > geo.EPS) & (t > 1e-9) & (u >= -1e-12) & (u <= 1 + 1e-12)
    return np.where(ok, t, np.inf).min(axis=1)


def build_gaze_batch(track_id: int, frames, keypoints, h: Homography, h_inv: Homography,
                     config: RoomConfig, params: Optional[GazeParams] = None) -> dict[int, GazeRecord]:
    """Gaze records for one track over many frames; ``keypoints`` is ``(n, 26, 3)``.

    Frames whose head keypoints do not define a gaze are left out.
    """
    params = params or config.gaze
    frames = list(frames)
    if not frames:
        return {}
    kp = np.asarray(keypoints, dtype=float).reshape(len(frames), -1, 3)
    ok = (kp[..., 2] >= params.keypoint_conf) & np.isfinite(kp[..., 0]) & np.isfinite(kp[..., 1])
    o, src = _pick(kp, ok, (LEYE, REYE), (LEYE, REYE, NOSE))
    ear, ear_code = _pick(kp, ok, (LEAR, REAR), (LEAR, REAR))
    valid = (src >= 0) & (ear_code >= 0)
    d = o - ear
    dn = np.hypot(d[:, 0], d[:, 1])
    valid &= dn >= 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        g = d / dn[:, None]
    o_map, fin_o = _project_rows(h, o)
    e_map, fin_e = _project_rows(h, o - g)
    valid &= fin_o & fin_e
    d_map = o_map - e_map
    nm = np.hypot(d_map[:, 0], d_map[:, 1])
    valid &= nm >= 1e-12
    idx = np.flatnonzero(valid)
    if len(idx) == 0:
        return {}
    o, g, o_map = o[idx], g[idx], o_map[idx]
    g_map = d_map[idx] / nm[idx, None]
    room = config.room_polygon
    inside = geo.points_in_polygon(o_map, room)

    length = np.full(len(idx), float(params.fallback_length_px))
    if inside.any():
        segs = geo.edges(room)
        if config.wall_segments is not None and len(config.wall_segments):
            segs = np.concatenate([np.asarray(config.wall_segments, dtype=float).reshape(-1, 2, 2), segs])
        l_map = _ray_distances(o_map[inside], g_map[inside], segs)
        end, fin = _project_rows(h_inv, o_map[inside] + g_map[inside] * l_map[:, None])
        hit = np.isfinite(l_map) & fin
        rows = np.flatnonzero(inside)[hit]
        length[rows] = np.hypot(*(end[hit] - o[rows]).T)

    r = np.deg2rad(params.half_angle_deg)
    c, s = np.cos(r), np.sin(r)
    v1 = o + np.column_stack([c * g[:, 0] - s * g[:, 1], s * g[:, 0] + c * g[:, 1]]) * length[:, None]
    v2 = o + np.column_stack([c * g[:, 0] + s * g[:, 1], -s * g[:, 0] + c * g[:, 1]]) * length[:, None]
    tris = np.stack([o, v1, v2], axis=1)
    tri_map, fin = _project_rows(h, tris.reshape(-1, 2))
    tri_map = tri_map.reshape(-1, 3, 2)
    fin = fin.reshape(-1, 3).all(axis=1)

    names = (EYES_MIDPOINT, SINGLE_EYE, SINGLE_EYE, NOSE_FALLBACK)
    out = {}
    for j, i in enumerate(idx):
        map_tri = geo.clip_polygon(room, tri_map[j]) if inside[j] and fin[j] else None
        out[frames[i]] = GazeRecord(track_id=track_id, frame_index=frames[i], origin=o[j], direction=g[j],
                                    source=names[src[i]], image_triangle=tris[j], map_triangle=map_tri,
                                    map_origin=o_map[j], map_direction=g_map[j])
    return out


def build_gaze_record(track_id: int, frame: int, keypoints, h: Homography, h_inv: Homography,
                      config: RoomConfig, params: Optional[GazeParams] = None) -> Optional[GazeRecord]:
    """One record, or None when the head keypoints do not define a gaze."""
    return build_gaze_batch(track_id, [frame], [keypoints], h, h_inv, config, params).get(frame)


def build_gaze_records(tracks: list[Track], h: Homography, config: RoomConfig) -> dict[int, dict[int, GazeRecord]]:
    h_inv = h.inverse()
    return {t.id: build_gaze_batch(t.id, t.frames, [t.observations[f].keypoints for f in t.frames],
                                   h, h_inv, config) for t in tracks}


def dump_gaze(records: dict[int, dict[int, GazeRecord]]) -> str:
    rows = []
    for tid in sorted(records):
        for f in sorted(records[tid]):
            r = records[tid][f]
            rows.append((f, tid, {
                "frame": f, "track_id": tid,
                "origin": r.origin.tolist(), "direction": r.direction.tolist(),
                "triangle": r.image_triangle.tolist(), "source": r.source,
                "map_triangle": None if r.map_triangle is None else r.map_triangle.tolist(),
            }))
    rows.sort(key=lambda x: (x[0], x[1]))
    return "".join(json.dumps(d, separators=(",", ":")) + "\n" for _, _, d in rows)


def load_gaze_dump(text: str) -> dict[int, dict[int, GazeRecord]]:
    out: dict[int, dict[int, GazeRecord]] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        d = json.loads(line)
        mt = d.get("map_triangle")
        out.setdefault(d["track_id"], {})[d["frame"]] = GazeRecord(
            track_id=d["track_id"], frame_index=d["frame"], origin=np.array(d["origin"]),
            direction=np.array(d["direction"]), source=d["source"],
            image_triangle=np.array(d["triangle"]),
            map_triangle=None if mt is None else np.array(mt).reshape(-1, 2),
        )
    return out
