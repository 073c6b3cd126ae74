import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arckdrone.geometry import (EPS_RECT, EmptyInput, FrameTransform, Mask, Point2, Rect, aabb, aspect_ratio,
                                centroid, convex_hull, enclosing_area_at, image_to_world, min_area_rotated_rect,
                                pad_to_aspect, world_to_image)


def sweep_min_area(points, step_deg=0.01):
    """Brute-force rectangle area over angles in [0, 90) degrees."""
    pts = np.asarray(points, dtype=float)
    ang = np.deg2rad(np.arange(0.0, 90.0, step_deg))
    c, s = np.cos(ang), np.sin(ang)
    pu = pts[:, :1] * c + pts[:, 1:] * s
    pv = -pts[:, :1] * s + pts[:, 1:] * c
    return float(((pu.max(0) - pu.min(0)) * (pv.max(0) - pv.min(0))).min())


# --- centroid / aabb / aspect ------------------------------------------------------

def test_centroid_single_cell():
    assert centroid(Mask("a", [(3, 7)])) == Point2(3.5, 7.5)


def test_centroid_block():
    assert centroid(Mask.from_rect_cells("a", 0, 0, 2, 2)) == Point2(1.0, 1.0)


def test_centroid_l_shape():
    c = centroid(Mask("l", [(0, 0), (1, 0), (0, 1)]))
    # cell centers (0.5,0.5), (1.5,0.5), (0.5,1.5)
    assert c.x == pytest.approx(2.5 / 3, abs=1e-12)
    assert c.y == pytest.approx(2.5 / 3, abs=1e-12)
    assert round(c.x, 4) == 0.8333


def test_empty_mask_rejected():
    with pytest.raises(EmptyInput):
        Mask("e", np.zeros((0, 2)))


def test_aabb_examples():
    assert aabb([Mask.from_rect_cells("a", 0, 0, 2, 2)]) == Rect.from_bounds(0, 0, 2, 2)
    two = [Mask("a", [(0, 0)]), Mask("b", [(9, 4)])]
    assert aabb(two) == Rect.from_bounds(0, 0, 10, 5)
    with pytest.raises(EmptyInput):
        aabb([])


def test_aabb_matches_cell_scan():
    rng = np.random.default_rng(3)
    masks = [Mask(f"m{i}", rng.integers(-20, 40, size=(rng.integers(1, 30), 2))) for i in range(5)]
    cells = np.vstack([m.cells for m in masks])
    lo, hi = cells.min(axis=0), cells.max(axis=0) + 1
    assert aabb(masks) == Rect.from_bounds(lo[0], lo[1], hi[0], hi[1])


def test_aspect_ratio_examples():
    assert aspect_ratio(Rect.from_bounds(0, 0, 4, 2)) == 2.0
    assert aspect_ratio(Rect.from_bounds(0, 0, 3, 3)) == 1.0
    assert round(aspect_ratio(Rect.from_bounds(0, 0, 2, 3)), 4) == 0.6667


def test_degenerate_rect_rejected():
    with pytest.raises(ValueError):
        Rect.from_bounds(0, 0, 0, 1)
    with pytest.raises(ValueError):
        Rect.from_bounds(0, 0, math.inf, 1)


def test_rle_round_trip():
    m = Mask("m", [(0, 0), (1, 0), (2, 0), (5, 0), (1, 3)])
    runs = m.to_rle()
    assert runs == [(0, 0, 3), (0, 5, 1), (3, 1, 1)]
    back = Mask.from_rle("m", runs)
    assert np.array_equal(back.cells, m.cells)


cells_strategy = st.lists(st.tuples(st.integers(-50, 50), st.integers(-50, 50)), min_size=1, max_size=40)


@given(cells_strategy)
def test_centroid_inside_aabb(cells):
    m = Mask("p", cells)
    assert m.bbox.contains_point(centroid(m))


# --- min-area rectangle --------------------------------------------------------------

def test_min_rect_unit_square():
    r = min_area_rotated_rect([(0, 0), (1, 0), (1, 1), (0, 1)])
    assert r.area == pytest.approx(1.0, abs=1e-12)
    assert r.angle == 0.0


def test_min_rect_rotated_square():
    h = math.sqrt(0.5)
    pts = [(0, -h), (h, 0), (0, h), (-h, 0)]
    r = min_area_rotated_rect(pts)
    assert r.area == pytest.approx(1.0, abs=1e-9)
    assert sweep_min_area(pts) == pytest.approx(1.0, rel=1e-4)


def test_min_rect_collinear_uses_eps():
    r = min_area_rotated_rect([(0, 0), (1, 1), (3, 3)])
    assert min(r.half_extents) * 2 == EPS_RECT
    assert max(r.half_extents) * 2 == pytest.approx(3 * math.sqrt(2))


def test_min_rect_single_point():
    r = min_area_rotated_rect([(2, 2)], eps=0.5)
    assert r.area == pytest.approx(0.25)


def test_min_rect_corners_enclose_points():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(20, 2)) * [3, 1]
    r = min_area_rotated_rect(pts)
    c, s = math.cos(r.angle), math.sin(r.angle)
    rel = pts - np.array(r.center)
    u = rel @ np.array([c, s])
    v = rel @ np.array([-s, c])
    assert np.all(np.abs(u) <= r.half_extents[0] + 1e-9)
    assert np.all(np.abs(v) <= r.half_extents[1] + 1e-9)
    assert r.corners().shape == (4, 2)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(-100, 100), st.floats(-100, 100)), min_size=3, max_size=30))
def test_min_rect_not_larger_than_aabb(pts):
    P = np.array(pts)
    hull = convex_hull(P)
    if len(hull) < 3:
        return
    r = min_area_rotated_rect(P)
    box = (P[:, 0].max() - P[:, 0].min()) * (P[:, 1].max() - P[:, 1].min())
    assert r.area <= box * (1 + 1e-9) + 1e-9
    assert r.area == pytest.approx(enclosing_area_at(P, r.angle), rel=1e-9, abs=1e-9)


def test_convex_hull_drops_interior():
    pts = [(0, 0), (2, 0), (2, 2), (0, 2), (1, 1), (1, 0)]
    hull = convex_hull(pts)
    assert len(hull) == 4


# --- pad_to_aspect ----------------------------------------------------------------------

def test_pad_wide_rect():
    out = pad_to_aspect(Rect.from_bounds(0, 0, 4, 2), 0.67, 1.5, Rect.from_bounds(-100, -100, 100, 100))
    assert not out.bounds_limited
    assert out.rect.width == pytest.approx(4.0)
    assert out.rect.height == pytest.approx(4 / 1.5, abs=1e-9)
    assert round(out.rect.height, 4) == 2.6667
    assert aspect_ratio(out.rect) == pytest.approx(1.5, abs=1e-9)


def test_pad_noop_when_in_range():
    r = Rect.from_bounds(0, 0, 3, 3)
    assert pad_to_aspect(r, 0.67, 1.5).rect == r


def test_pad_tall_rect_flush_to_bounds():
    bounds = Rect.from_bounds(0, 0, 20, 20)
    r = Rect.from_bounds(19, 10, 20, 20)  # 1 x 10 against the top right corner
    out = pad_to_aspect(r, 0.67, 1.5, bounds)
    assert not out.bounds_limited
    assert bounds.contains_rect(out.rect)
    assert out.rect.contains_rect(r)
    assert out.rect.width > r.width
    assert out.rect.max.x == 20.0
    assert 0.67 - 1e-9 <= aspect_ratio(out.rect) <= 1.5 + 1e-9


def test_pad_flags_when_bounds_too_small():
    bounds = Rect.from_bounds(0, 0, 2, 20)
    out = pad_to_aspect(Rect.from_bounds(0, 0, 1, 10), 0.67, 1.5, bounds)
    assert out.bounds_limited
    assert bounds.contains_rect(out.rect)


def test_pad_rejects_bad_range():
    with pytest.raises(ValueError):
        pad_to_aspect(Rect.from_bounds(0, 0, 1, 1), 0.0, 1.5)
    with pytest.raises(ValueError):
        pad_to_aspect(Rect.from_bounds(0, 0, 1, 1), 2.0, 1.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 50), st.floats(0, 50), st.floats(0.01, 60), st.floats(0.01, 60))
def test_pad_contains_input_and_respects_ratio(x, y, w, h):
    bounds = Rect.from_bounds(0, 0, 100, 100)
    r = Rect.from_bounds(x, y, min(x + w, 100), min(y + h, 100))
    out = pad_to_aspect(r, 0.67, 1.5, bounds)
    assert out.rect.contains_rect(r, tol=0.0)
    assert bounds.contains_rect(out.rect, tol=0.0)
    if not out.bounds_limited:
        assert 0.67 - 1e-9 <= aspect_ratio(out.rect) <= 1.5 + 1e-9


# --- frame transform ----------------------------------------------------------------------

def test_transform_examples():
    t = FrameTransform(1.0)
    p = Point2(1.25, -3.0)
    assert world_to_image(p, t) == p
    t = FrameTransform(100.0, Point2(7.0, -2.0))
    assert world_to_image(Point2(1.5, 2.0), t) == Point2(157.0, 198.0)
    with pytest.raises(ValueError):
        FrameTransform(0.0)


def test_transform_round_trip():
    rng = np.random.default_rng(0)
    t = FrameTransform(37.5, Point2(12.0, -4.5))
    for x, y in rng.uniform(-50, 50, size=(100, 2)):
        q = image_to_world(world_to_image(Point2(x, y), t), t)
        assert abs(q.x - x) < 1e-9 and abs(q.y - y) < 1e-9
