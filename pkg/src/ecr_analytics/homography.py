"""Image-to-floor planar homography (normalised DLT)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CalibrationToleranceExceeded, DegenerateConfiguration, PointAtInfinity, RankDeficient

_W_EPS = 1e-12


@dataclass(frozen=True)
class Homography:
    matrix: np.ndarray  # 3x3, matrix[2, 2] == 1

    @classmethod
    def from_matrix(cls, m) -> "Homography":
        m = np.asarray(m, dtype=float).reshape(3, 3)
        if abs(m[2, 2]) < _W_EPS:
            raise RankDeficient("homography has a zero (3,3) entry and cannot be normalised")
        m = m / m[2, 2]
        if abs(np.linalg.det(m)) <= 1e-12:
            raise RankDeficient("homography is singular")
        return cls(matrix=m)

    def inverse(self) -> "Homography":
        return Homography.from_matrix(np.linalg.inv(self.matrix))

    def project(self, p) -> np.ndarray:
        return project(self, p)

    def project_many(self, pts) -> np.ndarray:
        return project_many(self, pts)


def _normalizer(pts: np.ndarray) -> np.ndarray:
    """Similarity moving the centroid to the origin, mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.linalg.norm(pts - c, axis=1).mean()
    s = np.sqrt(2.0) / d
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def _has_collinear_triple(pts: np.ndarray, tol: float) -> bool:
    n = len(pts)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, c = pts[i], pts[j], pts[k]
                area2 = abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
                if area2 <= tol:
                    return True
    return False


def _in_general_position(pts: np.ndarray, tol: float) -> bool:
    """Some 4 points with no 3 collinear exist (checked exhaustively for 4)."""
    if len(pts) == 4:
        return not _has_collinear_triple(pts, tol)
    # more pairs: rank of the DLT system decides; only reject all-collinear sets
    centered = pts - pts.mean(axis=0)
    return np.linalg.matrix_rank(centered, tol=np.sqrt(tol)) == 2


def estimate_homography(pixel_points, map_points) -> Homography:
    """Least-squares DLT mapping pixel points onto map points."""
    src = np.asarray(pixel_points, dtype=float).reshape(-1, 2)
    dst = np.asarray(map_points, dtype=float).reshape(-1, 2)
    if len(src) != len(dst):
        raise DegenerateConfiguration("pixel and map point counts differ")
    if len(src) < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {len(src)}")
    if not (np.all(np.isfinite(src)) and np.all(np.isfinite(dst))):
        raise DegenerateConfiguration("non-finite calibration point")
    for pts, what in ((src, "pixel"), (dst, "map")):
        diffs = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=2)
        np.fill_diagonal(diffs, np.inf)
        if diffs.min() <= 1e-9:
            raise DegenerateConfiguration(f"duplicated {what} calibration points")

    t_src = _normalizer(src)
    t_dst = _normalizer(dst)
    s = (t_src @ np.column_stack([src, np.ones(len(src))]).T).T
    d = (t_dst @ np.column_stack([dst, np.ones(len(dst))]).T).T
    for pts, what in ((s[:, :2], "pixel"), (d[:, :2], "map")):
        if not _in_general_position(pts, 1e-9):
            raise DegenerateConfiguration(f"{what} calibration points are collinear")

    rows = []
    for (x, y, _), (u, v, _) in zip(s, d):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    a = np.asarray(rows)
    _, sv, vt = np.linalg.svd(a)
    if sv[-2] <= 1e-10 * sv[0]:
        raise RankDeficient("calibration system is rank deficient")
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(t_dst) @ hn @ t_src
    return Homography.from_matrix(h)


def project(h: Homography, p) -> np.ndarray:
    x, y = np.asarray(p, dtype=float)
    w = h.matrix[2, 0] * x + h.matrix[2, 1] * y + h.matrix[2, 2]
    if abs(w) < _W_EPS:
        raise PointAtInfinity(f"point ({x}, {y}) maps to infinity")
    return np.array([
        (h.matrix[0, 0] * x + h.matrix[0, 1] * y + h.matrix[0, 2]) / w,
        (h.matrix[1, 0] * x + h.matrix[1, 1] * y + h.matrix[1, 2]) / w,
    ])


def project_many(h: Homography, pts) -> np.ndarray:
    p = np.asarray(pts, dtype=float).reshape(-1, 2)
    hom = np.column_stack([p, np.ones(len(p))]) @ h.matrix.T
    if np.any(np.abs(hom[:, 2]) < _W_EPS):
        raise PointAtInfinity("a point maps to infinity")
    return hom[:, :2] / hom[:, 2:3]


def reprojection_errors(h: Homography, pixel_points, map_points) -> np.ndarray:
    proj = project_many(h, pixel_points)
    return np.linalg.norm(proj - np.asarray(map_points, dtype=float).reshape(-1, 2), axis=1)


def calibrate(pixel_points, map_points, tolerance: float) -> tuple[Homography, np.ndarray]:
    """Estimate and check reprojection error against ``tolerance`` (meters)."""
    h = estimate_homography(pixel_points, map_points)
    err = reprojection_errors(h, pixel_points, map_points)
    if err.max() > tolerance:
        raise CalibrationToleranceExceeded(
            f"calibration tolerance exceeded: max reprojection error {err.max():.4f} m > {tolerance} m"
        )
    return h, err
