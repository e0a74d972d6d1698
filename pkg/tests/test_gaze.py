import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecr_analytics import geometry as geo
from ecr_analytics.errors import CoincidentPoints, NoEars, OriginOutsideRoom
from ecr_analytics.gaze import (
    EYES_MIDPOINT,
    NOSE_FALLBACK,
    SINGLE_EYE,
    build_gaze_record,
    clip_length_to_walls,
    dump_gaze,
    gaze_direction,
    gaze_origin,
    gaze_triangle,
    load_gaze_dump,
    project_triangle_to_floor,
    triangle_intersects_box,
)
from ecr_analytics.homography import Homography
from ecr_analytics.ingest import room_config_from_dict

from conftest import SCALE, head_keypoints, keypoints_at, toy_room_dict

ROOM4 = np.array([[0, 0], [4, 0], [4, 4], [0, 4]], dtype=float)
H_TOY = Homography.from_matrix(np.diag([1 / SCALE, 1 / SCALE, 1.0]))
TOY_ROOM = room_config_from_dict(toy_room_dict())


def head(valid=(1, 2, 3, 4, 0)):
    kp = keypoints_at(0, 0, conf=0.0)
    kp[0] = (11, 12, 0)
    kp[1] = (10, 10, 0)
    kp[2] = (14, 10, 0)
    kp[3] = (9, 9, 0)
    for i in valid:
        kp[i, 2] = 0.9
    return kp


def test_origin_rules():
    o, src = gaze_origin(head(), 0.3)
    assert (tuple(o), src) == ((12, 10), EYES_MIDPOINT)
    kp = head(valid=(1,))
    kp[1, :2] = (9, 9)
    o, src = gaze_origin(kp, 0.3)
    assert (tuple(o), src) == ((9, 9), SINGLE_EYE)
    o, src = gaze_origin(head(valid=(0,)), 0.3)
    assert (tuple(o), src) == ((11, 12), NOSE_FALLBACK)
    assert gaze_origin(head(valid=()), 0.3) is None


def test_direction_examples():
    assert gaze_direction((10, 10), (8, 10)) == pytest.approx([1, 0])
    assert gaze_direction((0, 1), (0, 0)) == pytest.approx([0, 1])
    assert gaze_direction((3, 4), (0, 0)) == pytest.approx([0.6, 0.8])
    with pytest.raises(CoincidentPoints):
        gaze_direction((1, 1), (1, 1 + 1e-8))
    with pytest.raises(NoEars):
        gaze_direction((1, 1), None)


def test_triangle_example():
    tri = gaze_triangle((0, 0), (1, 0), 10.0, 2.0)
    assert tri[1] == pytest.approx([1.9696, 0.3472], abs=1e-4)
    assert tri[2] == pytest.approx([1.9696, -0.3472], abs=1e-4)


def test_zero_half_angle_is_segment():
    tri = gaze_triangle((1, 1), (0, 1), 0.0, 3.0)
    assert tri[1] == pytest.approx([1, 4]) and tri[2] == pytest.approx([1, 4])


angles = st.floats(0, 2 * math.pi, allow_nan=False)


@given(st.floats(-100, 100), st.floats(-100, 100), angles, st.floats(0.1, 80), st.floats(0.1, 1000))
def test_triangle_isosceles_with_requested_span(x, y, phi, half, length):
    g = np.array([math.cos(phi), math.sin(phi)])
    tri = gaze_triangle((x, y), g, half, length)
    a, b = tri[1] - tri[0], tri[2] - tri[0]
    assert np.linalg.norm(a) == pytest.approx(np.linalg.norm(b), abs=1e-6)
    cos = a @ b / (np.linalg.norm(a) * np.linalg.norm(b))
    assert math.degrees(math.acos(np.clip(cos, -1, 1))) == pytest.approx(2 * half, abs=1e-6)


def test_clip_length_examples():
    assert clip_length_to_walls((1, 1), (1, 0), ROOM4) == pytest.approx(3)
    assert clip_length_to_walls((1, 1), (-1, 0), ROOM4) == pytest.approx(1)
    s = math.sqrt(2) / 2
    assert clip_length_to_walls((1, 1), (s, s), ROOM4) == pytest.approx(3 * math.sqrt(2))
    with pytest.raises(OriginOutsideRoom):
        clip_length_to_walls((5, 5), (1, 0), ROOM4)


def test_clip_length_stops_at_interior_wall():
    wall = np.array([[[2.5, 0.0], [2.5, 2.0]]])
    assert clip_length_to_walls((1, 1), (1, 0), ROOM4, wall) == pytest.approx(1.5)


@given(st.floats(0.01, 3.99), st.floats(0.01, 3.99), angles)
def test_clip_length_bounded_by_diameter(x, y, phi):
    L = clip_length_to_walls((x, y), (math.cos(phi), math.sin(phi)), ROOM4)
    assert 0 < L <= 4 * math.sqrt(2) + 1e-9


# -- triangle vs box ------------------------------------------------------------

def raster_overlap(tri, box, n=100):
    xs = np.linspace(box[0], box[2], n)
    ys = np.linspace(box[1], box[3], n)
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    return bool(geo.points_in_polygon(pts, tri).any())


def test_box_cases():
    tri = np.array([[0, 0], [10, -3], [10, 3]], dtype=float)
    assert triangle_intersects_box(tri, (6, -0.5, 7, 0.5))
    assert not triangle_intersects_box(tri, (50, 50, 60, 60))
    straddle = (4, 0.5, 6, 3)
    assert triangle_intersects_box(tri, straddle)
    assert raster_overlap(tri, straddle)


def test_box_containing_triangle():
    tri = np.array([[1, 1], [2, 1], [1, 2]], dtype=float)
    assert triangle_intersects_box(tri, (0, 0, 5, 5))


pt = st.tuples(st.floats(-20, 20), st.floats(-20, 20))


@settings(max_examples=300)
@given(pt, pt, pt, st.floats(-20, 20), st.floats(-20, 20), st.floats(0.5, 10), st.floats(0.5, 10))
def test_box_test_matches_raster_when_clear(a, b, c, x, y, w, h):
    tri = np.array([a, b, c], dtype=float)
    if geo.polygon_area(tri) < 1.0:
        return
    box = (x, y, x + w, y + h)
    got = triangle_intersects_box(tri, box)
    if raster_overlap(tri, box):
        assert got
    # the raster can miss thin slivers; only check the negative side when the
    # shapes are clearly apart
    poly = geo.box_corners(box)
    gap = min(geo.point_segment_distance(tri, geo.edges(poly)).min(),
              geo.point_segment_distance(poly, geo.edges(tri)).min())
    if not got:
        assert not raster_overlap(tri, box)
    elif gap > 0.5 and not raster_overlap(tri, box):
        pytest.fail("reported overlap for separated shapes")


@given(pt, pt, pt, st.floats(-20, 20), st.floats(-20, 20), st.floats(0.5, 10), st.floats(-30, 30), st.floats(-30, 30))
def test_box_test_symmetries(a, b, c, x, y, w, dx, dy):
    tri = np.array([a, b, c], dtype=float)
    box = (x, y, x + w, y + w)
    base = triangle_intersects_box(tri, box)
    assert triangle_intersects_box(tri[[0, 2, 1]], box) == base
    shift = np.array([dx, dy])
    moved = (x + dx, y + dy, x + w + dx, y + w + dy)
    # translation is exact only up to rounding; skip knife-edge contacts
    if not _touching(tri, box):
        assert triangle_intersects_box(tri + shift, moved) == base


def _touching(tri, box) -> bool:
    poly = geo.box_corners(box)
    d = min(geo.point_segment_distance(tri, geo.edges(poly)).min(),
            geo.point_segment_distance(poly, geo.edges(tri)).min())
    return d < 1e-6


# -- floor projection ---------------------------------------------------------------

def test_floor_projection_identity_inside():
    tri = np.array([[1, 1], [3, 1], [2, 3]], dtype=float)
    out = project_triangle_to_floor(Homography(np.eye(3)), tri, ROOM4)
    assert geo.polygon_area(out) == pytest.approx(geo.polygon_area(tri))


def test_floor_projection_clips():
    tri = np.array([[2, 2], [6, 1], [6, 3]], dtype=float)
    out = project_triangle_to_floor(Homography(np.eye(3)), tri, ROOM4)
    assert geo.polygon_area(out) < geo.polygon_area(tri)
    assert (out >= -1e-9).all() and (out <= 4 + 1e-9).all()


def test_floor_projection_scaling():
    tri = np.array([[0.2, 0.2], [1.0, 0.3], [0.5, 1.5]], dtype=float)
    out = project_triangle_to_floor(Homography(np.diag([2.0, 2.0, 1.0])), tri, np.array([[0, 0], [10, 0], [10, 10], [0, 10.0]]))
    assert geo.polygon_area(out) == pytest.approx(4 * geo.polygon_area(tri))


# -- full records ----------------------------------------------------------------

def test_record_length_reaches_wall(toy_room):
    kp = head_keypoints((100, 200), (1, 0))
    rec = build_gaze_record(1, 0, kp, H_TOY, H_TOY.inverse(), toy_room)
    assert rec.source == EYES_MIDPOINT
    assert rec.direction == pytest.approx([1, 0])
    # eye at map (1, 2), wall x = 4 is 3 m = 300 px away
    assert np.linalg.norm(rec.image_triangle[1] - rec.image_triangle[0]) == pytest.approx(300)
    assert geo.polygon_area(rec.map_triangle) > 0


def test_record_without_ears_is_absent(toy_room):
    kp = head_keypoints((100, 200), (1, 0))
    kp[[3, 4], 2] = 0.0
    assert build_gaze_record(1, 0, kp, H_TOY, H_TOY.inverse(), toy_room) is None


def test_record_outside_room_uses_fallback_length(toy_room):
    kp = head_keypoints((200, -50), (0, 1))
    rec = build_gaze_record(1, 0, kp, H_TOY, H_TOY.inverse(), toy_room)
    assert rec.map_triangle is None
    assert np.linalg.norm(rec.image_triangle[1] - rec.image_triangle[0]) == pytest.approx(
        toy_room.gaze.fallback_length_px)


@settings(max_examples=200, deadline=None)
@given(st.floats(10, 390), st.floats(10, 390), angles)
def test_random_poses_are_finite(x, y, phi):
    room = TOY_ROOM
    kp = head_keypoints((x, y), (math.cos(phi), math.sin(phi)))
    rec = build_gaze_record(1, 0, kp, H_TOY, H_TOY.inverse(), room)
    assert rec is not None
    assert np.isfinite(rec.image_triangle).all()
    assert np.linalg.norm(rec.direction) == pytest.approx(1, abs=1e-9)
    tri = rec.image_triangle
    assert np.linalg.norm(tri[1] - tri[0]) == pytest.approx(np.linalg.norm(tri[2] - tri[0]), abs=1e-6)
    if rec.map_triangle is not None and len(rec.map_triangle):
        assert np.isfinite(rec.map_triangle).all()
        assert (rec.map_triangle >= -1e-9).all() and (rec.map_triangle <= 4 + 1e-9).all()


def test_gaze_dump_round_trip(toy_room):
    recs = {1: {0: build_gaze_record(1, 0, head_keypoints((100, 200), (1, 0)), H_TOY, H_TOY.inverse(), toy_room)}}
    text = dump_gaze(recs)
    assert dump_gaze(load_gaze_dump(text)) == text
