"""Planar geometry primitives shared by mapping, gaze and metrics.

Polygons are ``(n, 2)`` float arrays without a repeated closing vertex.
Segments are ``(m, 2, 2)`` arrays of endpoint pairs.
"""
from __future__ import annotations

import numpy as np

EPS = 1e-12


def as_points(pts) -> np.ndarray:
    arr = np.asarray(pts, dtype=float)
    return arr.reshape(-1, 2)


def signed_area(poly) -> float:
    p = as_points(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x[:-1], y[1:]) + x[-1] * y[0] - np.dot(y[:-1], x[1:]) - y[-1] * x[0])


def polygon_area(poly) -> float:
    return abs(signed_area(poly))


def polygon_centroid(poly) -> np.ndarray:
    p = as_points(poly)
    a = signed_area(p)
    if abs(a) < EPS:
        return p.mean(axis=0)
    q = np.roll(p, -1, axis=0)
    cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    cx = np.sum((p[:, 0] + q[:, 0]) * cross) / (6.0 * a)
    cy = np.sum((p[:, 1] + q[:, 1]) * cross) / (6.0 * a)
    return np.array([cx, cy])


def edges(poly) -> np.ndarray:
    """Closed edge list of a polygon as an ``(n, 2, 2)`` segment array."""
    p = as_points(poly)
    return np.stack([p, np.concatenate([p[1:], p[:1]])], axis=1)


def points_in_polygon(points, poly) -> np.ndarray:
    """Even-odd crossing test, vectorised over ``points``.

    Points exactly on the boundary may land on either side.
    """
    pts = as_points(points)
    p = as_points(poly)
    q = np.concatenate([p[1:], p[:1]])
    x, y = pts[:, 0:1], pts[:, 1:2]
    x1, y1, x2, y2 = p[:, 0], p[:, 1], q[:, 0], q[:, 1]
    straddles = (y1 > y) != (y2 > y)
    with np.errstate(divide="ignore", invalid="ignore"):
        x_cross = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
    hits = straddles & (x < x_cross)
    return (np.count_nonzero(hits, axis=1) % 2) == 1


def point_in_polygon(point, poly) -> bool:
    # scalar loop: cheaper than array setup for one point
    x, y = (float(v) for v in np.asarray(point, dtype=float).reshape(2))
    inside = False
    pts = as_points(poly).tolist()
    x1, y1 = pts[-1]
    for x2, y2 in pts:
        if (y1 > y) != (y2 > y) and x < x1 + (y - y1) * (x2 - x1) / (y2 - y1):
            inside = not inside
        x1, y1 = x2, y2
    return inside


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _on_segment(a, b, c) -> bool:
    return (min(a[0], b[0]) - EPS <= c[0] <= max(a[0], b[0]) + EPS
            and min(a[1], b[1]) - EPS <= c[1] <= max(a[1], b[1]) + EPS)


def segments_intersect(p1, p2, q1, q2) -> bool:
    """True if closed segments p1p2 and q1q2 share at least one point."""
    d1 = _orient(q1, q2, p1)
    d2 = _orient(q1, q2, p2)
    d3 = _orient(p1, p2, q1)
    d4 = _orient(p1, p2, q2)
    if ((d1 > EPS and d2 < -EPS) or (d1 < -EPS and d2 > EPS)) and \
            ((d3 > EPS and d4 < -EPS) or (d3 < -EPS and d4 > EPS)):
        return True
    if abs(d1) <= EPS and _on_segment(q1, q2, p1):
        return True
    if abs(d2) <= EPS and _on_segment(q1, q2, p2):
        return True
    if abs(d3) <= EPS and _on_segment(p1, p2, q1):
        return True
    if abs(d4) <= EPS and _on_segment(p1, p2, q2):
        return True
    return False


def is_simple_polygon(poly) -> bool:
    """Non-self-intersecting with nonzero area and at least 3 vertices."""
    p = as_points(poly)
    n = len(p)
    if n < 3 or polygon_area(p) <= EPS:
        return False
    if np.any(np.linalg.norm(p - np.roll(p, -1, axis=0), axis=1) <= EPS):
        return False
    for i in range(n):
        a1, a2 = p[i], p[(i + 1) % n]
        for j in range(i + 1, n):
            # adjacent edges share a vertex by construction
            if j == i + 1 or (i == 0 and j == n - 1):
                continue
            if segments_intersect(a1, a2, p[j], p[(j + 1) % n]):
                return False
    return True


def polygons_intersect(a, b) -> bool:
    """True if two simple polygons overlap or touch."""
    a, b = as_points(a), as_points(b)
    if points_in_polygon(a[:1], b)[0] or points_in_polygon(b[:1], a)[0]:
        return True
    for s in edges(a):
        for t in edges(b):
            if segments_intersect(s[0], s[1], t[0], t[1]):
                return True
    return False


def point_segment_distance(points, segments) -> np.ndarray:
    """Distance from each point to the nearest of ``segments``."""
    pts = as_points(points)
    seg = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
    a = seg[:, 0][None, :, :]
    d = (seg[:, 1] - seg[:, 0])[None, :, :]
    rel = pts[:, None, :] - a
    len2 = np.sum(d * d, axis=2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(len2 > 0, np.sum(rel * d, axis=2) / len2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[:, :, None] * d
    dist = np.linalg.norm(pts[:, None, :] - closest, axis=2)
    return dist.min(axis=1)


def ray_segments_distance(origin, direction, segments) -> float:
    """Distance along a unit ray to the first segment it hits (inf if none)."""
    o = np.asarray(origin, dtype=float)
    g = np.asarray(direction, dtype=float)
    seg = np.asarray(segments, dtype=float).reshape(-1, 2, 2)
    a = seg[:, 0]
    e = seg[:, 1] - seg[:, 0]
    # solve o + t g = a + u e
    denom = g[0] * e[:, 1] - g[1] * e[:, 0]
    rel = a - o
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = (rel[:, 0] * e[:, 1] - rel[:, 1] * e[:, 0]) / denom
        u = (rel[:, 0] * g[1] - rel[:, 1] * g[0]) / denom
    ok = (np.abs(denom) > EPS) & (t > 1e-9) & (u >= -1e-12) & (u <= 1 + 1e-12)
    if not np.any(ok):
        return float("inf")
    return float(t[ok].min())


def clip_polygon(subject, clip) -> np.ndarray:
    """Sutherland-Hodgman clip of ``subject`` by the convex polygon ``clip``.

    ``subject`` may be non-convex; the result then can contain zero-width
    bridges, which do not change its area or interior.
    """
    out = as_points(subject)
    c = as_points(clip)
    if signed_area(c) < 0:
        c = c[::-1]
    nc = len(c)
    for i in range(nc):
        if len(out) == 0:
            break
        a, b = c[i], c[(i + 1) % nc]
        side = (b[0] - a[0]) * (out[:, 1] - a[1]) - (b[1] - a[1]) * (out[:, 0] - a[0]) >= 0
        if side.all():
            continue
        out_list = []
        for j in range(len(out)):
            cur, prev = out[j], out[j - 1]
            cur_in, prev_in = side[j], side[j - 1]
            if cur_in:
                if not prev_in:
                    out_list.append(_line_intersection(prev, cur, a, b))
                out_list.append(cur)
            elif prev_in:
                out_list.append(_line_intersection(prev, cur, a, b))
        out = np.array(out_list, dtype=float).reshape(-1, 2)
    return out


def _line_intersection(p1, p2, a, b) -> np.ndarray:
    d = p2 - p1
    e = b - a
    denom = d[0] * e[1] - d[1] * e[0]
    if abs(denom) < EPS:
        return p2.copy()
    t = ((a[0] - p1[0]) * e[1] - (a[1] - p1[1]) * e[0]) / denom
    return p1 + t * d


def convex_polygons_overlap(a, b) -> bool:
    """Separating-axis test for two convex polygons; touching counts."""
    a, b = as_points(a), as_points(b)
    d = np.concatenate([np.concatenate([a[1:], a[:1]]) - a, np.concatenate([b[1:], b[:1]]) - b])
    axes = np.stack([-d[:, 1], d[:, 0]], axis=1)
    norm = np.hypot(axes[:, 0], axes[:, 1])
    keep = norm > EPS
    # degenerate inputs (segments) may lack one edge direction
    axes = np.concatenate([axes[keep] / norm[keep, None], np.eye(2)])
    pa, pb = a @ axes.T, b @ axes.T
    sep = (pa.max(axis=0) < pb.min(axis=0) - 1e-9) | (pb.max(axis=0) < pa.min(axis=0) - 1e-9)
    return not bool(sep.any())


def rotate(vec, degrees: float) -> np.ndarray:
    r = np.deg2rad(degrees)
    c, s = np.cos(r), np.sin(r)
    v = np.asarray(vec, dtype=float)
    return np.array([c * v[0] - s * v[1], s * v[0] + c * v[1]])


def box_corners(bbox) -> np.ndarray:
    x1, y1, x2, y2 = bbox
    return np.array([[x1, y1], [x2, y1], [x2, y2], [x1, y2]], dtype=float)


def box_iou(a, b) -> float:
    ix = min(a[2], b[2]) - max(a[0], b[0])
    iy = min(a[3], b[3]) - max(a[1], b[1])
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union)


def iou_matrix(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    if len(a) == 0 or len(b) == 0:
        return np.zeros((len(a), len(b)))
    ix = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    iy = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(ix, 0, None) * np.clip(iy, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return inter / union


def point_in_box(point, bbox) -> bool:
    x, y = point
    return bbox[0] <= x <= bbox[2] and bbox[1] <= y <= bbox[3]
