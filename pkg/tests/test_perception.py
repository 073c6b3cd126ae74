import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from arckdrone.environment import SceneObject, ScalarField, World
from arckdrone.geometry import Point2, Rect
from arckdrone.perception import (FALSE_POSITIVE, TRUE_POSITIVE, OracleParams, SplitModel, close_up_confirm, detect,
                                  detection_probability, image_bounds, rect_to_image, segment)


def room(objects, W=8.0, H=6.0):
    return World(Rect.from_bounds(0, 0, W, H), {"temperature": ScalarField.uniform("temperature", 20, W, H)},
                 tuple(objects))


PHONE = SceneObject("phone/0", "phone", Rect.from_bounds(3.0, 2.0, 3.15, 2.08))


# --- closed form -----------------------------------------------------------------------

def test_probability_floor_and_plateau():
    p = OracleParams(p_max=0.95)
    assert detection_probability(0.0, p) == p.p_floor
    assert detection_probability(1.0, p) >= 0.9
    assert detection_probability(1.0, p) <= 0.95


def test_probability_midpoint_region():
    p = OracleParams(p_floor=0.0, p_max=1.0)
    # with a zero floor the midpoint shifts only by the rescaling term
    s0 = 1 / (1 + math.exp(p.slope * p.r_half))
    expect = (0.5 - s0) / (1 - s0)
    assert detection_probability(p.r_half, p) == pytest.approx(expect, rel=1e-12)


def test_specificity_boost_caps_at_one():
    p = OracleParams(p_max=0.8, prompt_specificity_boost=2.0)
    assert detection_probability(1.0, p, specific=True) <= 1.0
    assert detection_probability(1.0, p, specific=False) <= 0.8


@given(st.floats(0, 1), st.floats(0, 1))
def test_probability_monotone(a, b):
    p = OracleParams()
    lo, hi = sorted((a, b))
    assert detection_probability(lo, p) <= detection_probability(hi, p) + 1e-15


def test_oracle_param_validation():
    with pytest.raises(ValueError):
        OracleParams(p_floor=0.5, p_max=0.4)
    with pytest.raises(ValueError):
        OracleParams(fp_rate_per_crop=-1)


def test_probability_empirical_at_plateau():
    """Detected fraction over 10^4 draws sits within 2 sigma of the closed form."""
    w = room([SceneObject("box/0", "box", Rect.from_bounds(0, 0, 4, 3))])
    params = OracleParams(fp_rate_per_crop=0.0, p_max=0.9)
    crop = rect_to_image(Rect.from_bounds(0, 0, 4, 3), w)
    rng = np.random.default_rng(0)
    n = 10_000
    hits = sum(bool(detect(crop, "box", w, params, rng)) for _ in range(n))
    p = detection_probability(1.0, params)
    assert abs(hits / n - p) <= 2 * math.sqrt(p * (1 - p) / n)


# --- segmentation -------------------------------------------------------------------------

def test_segment_one_mask_per_object_without_splits():
    objs = [SceneObject(f"o{i}", "box", Rect.from_bounds(i, 1, i + 0.6, 1.8)) for i in range(5)]
    masks = segment(room(objs), SplitModel(split_prob=0.0))
    assert len(masks) == 5
    assert {m.source_object for m in masks} == {o.id for o in objs}


def test_segment_split_partitions_footprint():
    objs = [SceneObject(f"o{i}", "box", Rect.from_bounds(i, 1, i + 0.6, 1.8)) for i in range(5)]
    w = room(objs)
    masks = segment(w, SplitModel(split_prob=1.0, max_splits=2))
    assert len(masks) == 10
    for o in objs:
        mine = [m for m in masks if m.source_object == o.id]
        assert len(mine) == 2
        cells = [set(map(tuple, m.cells.tolist())) for m in mine]
        assert not cells[0] & cells[1]
        r = rect_to_image(o.footprint, w)
        full = {(x, y) for x in range(int(r.min.x), int(math.ceil(r.max.x)))
                for y in range(int(r.min.y), int(math.ceil(r.max.y)))}
        assert cells[0] | cells[1] == full


def test_segment_deterministic_and_skips_hidden():
    hidden = SceneObject("h", "phone", Rect.from_bounds(1, 1, 1.2, 1.1), under_furniture=True)
    objs = [SceneObject("a", "box", Rect.from_bounds(2, 2, 3, 3)), hidden]
    w = room(objs)
    sm = SplitModel(split_prob=0.5, max_splits=3, clutter_masks=3)
    a = segment(w, sm, rng=np.random.default_rng(4))
    b = segment(w, sm, rng=np.random.default_rng(4))
    assert [m.id for m in a] == [m.id for m in b]
    assert all(np.array_equal(x.cells, y.cells) for x, y in zip(a, b))
    assert all(m.source_object != "h" for m in a)
    assert sum(m.id.startswith("clutter/") for m in a) == 3


# --- detect / close-up -----------------------------------------------------------------------

def test_detect_absent_no_fp_is_empty():
    w = room([PHONE])
    empty = rect_to_image(Rect.from_bounds(6, 4, 7, 5), w)
    dets = detect(empty, "phone", w, OracleParams(fp_rate_per_crop=0.0), np.random.default_rng(0))
    assert dets == []


def test_detect_labels_truth():
    w = room([PHONE])
    crop = rect_to_image(Rect.from_bounds(2.8, 1.8, 3.4, 2.3), w)
    params = OracleParams(fp_rate_per_crop=2.0)
    rng = np.random.default_rng(1)
    kinds = set()
    for _ in range(50):
        for d in detect(crop, "phone", w, params, rng):
            kinds.add(d.truth)
            assert Rect.from_bounds(2.8, 1.8, 3.4, 2.3).contains_rect(d.bbox)
    assert kinds == {TRUE_POSITIVE, FALSE_POSITIVE}


def test_hidden_object_never_detected():
    hidden = SceneObject("phone/0", "phone", Rect.from_bounds(3, 2, 3.15, 2.08), under_furniture=True)
    w = room([hidden])
    rng = np.random.default_rng(2)
    params = OracleParams(fp_rate_per_crop=0.0, p_floor=0.0)
    assert all(close_up_confirm(Point2(3.07, 2.04), "phone", w, params, rng) is None for _ in range(200))


def test_close_up_true_object_rate():
    w = room([PHONE])
    params = OracleParams(fp_rate_per_crop=0.0)
    rng = np.random.default_rng(3)
    n = 4000
    hits = sum(close_up_confirm(PHONE.footprint.center, "phone", w, params, rng) is not None for _ in range(n))
    p = detection_probability(PHONE.footprint.area / params.close_up_size ** 2, params)
    assert p >= params.p_max * 0.95
    assert abs(hits / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_close_up_empty_location_fp_rate():
    w = room([])
    params = OracleParams(fp_rate_per_crop=0.5, close_up_discount=0.1)
    rng = np.random.default_rng(4)
    n = 20_000
    hits = sum(close_up_confirm(Point2(4, 3), "phone", w, params, rng) is not None for _ in range(n))
    expect = 1 - math.exp(-0.05)
    assert abs(hits / n - expect) <= 3 * math.sqrt(expect * (1 - expect) / n)


def test_close_up_deterministic():
    w = room([PHONE])
    params = OracleParams()
    a = [close_up_confirm(Point2(3, 2), "phone", w, params, np.random.default_rng(9)) for _ in range(3)]
    b = [close_up_confirm(Point2(3, 2), "phone", w, params, np.random.default_rng(9)) for _ in range(3)]
    assert a == b


def test_whole_image_recall_below_cropped():
    """A small target is found less often in the whole scene than in a tight crop."""
    w = room([PHONE])
    params = OracleParams(fp_rate_per_crop=0.0)
    whole = image_bounds(w)
    tight = rect_to_image(Rect.from_bounds(2.5, 1.6, 3.7, 2.5), w)
    assert PHONE.footprint.area / w.floorplan.area < params.r_half < PHONE.footprint.area / 1.08
    n = 10_000
    rng = np.random.default_rng(5)
    a = sum(bool(detect(whole, "phone", w, params, rng)) for _ in range(n))
    b = sum(bool(detect(tight, "phone", w, params, rng)) for _ in range(n))
    # one-sided two-proportion test at alpha = 0.01
    table = [[b, n - b], [a, n - a]]
    assert stats.fisher_exact(table, alternative="greater").pvalue < 0.01
