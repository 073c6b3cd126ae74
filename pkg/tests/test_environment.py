import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from arckdrone.environment import (OutOfBounds, ScalarField, SceneObject, TimedEvent, World, apply_events,
                                   dense_grid_estimate, field_from_function, grid_positions, objects_of,
                                   sample_field)
from arckdrone.geometry import Point2, Rect

FLOOR = Rect.from_bounds(0, 0, 4, 4)


def world_with(field, events=(), objects=()):
    return World(FLOOR, {field.kind: field}, tuple(objects), tuple(events))


def test_uniform_field():
    w = world_with(ScalarField.uniform("temperature", 20.0, 4, 4))
    for p in [(0, 0), (1.3, 2.7), (4, 4)]:
        assert sample_field(w, Point2(*p), "temperature") == 20.0


def test_grid_node_and_midpoint():
    g = np.array([[10.0, 30.0], [10.0, 30.0]])
    f = ScalarField("temperature", g, 4.0)
    w = world_with(f)
    assert sample_field(w, Point2(0, 0), "temperature") == 10.0
    assert sample_field(w, Point2(4, 0), "temperature") == 30.0
    assert sample_field(w, Point2(2, 1), "temperature") == pytest.approx(20.0)


def test_out_of_bounds_and_missing_field():
    w = world_with(ScalarField.uniform("temperature", 20.0, 4, 4))
    with pytest.raises(OutOfBounds):
        sample_field(w, Point2(5, 1), "temperature")
    with pytest.raises(KeyError):
        sample_field(w, Point2(1, 1), "light")


def test_field_validation():
    with pytest.raises(ValueError):
        ScalarField("humidity", np.full((2, 2), 120.0), 1.0)
    with pytest.raises(ValueError):
        ScalarField("smell", np.zeros((2, 2)), 1.0)
    with pytest.raises(ValueError):
        ScalarField("temperature", np.zeros((2, 2)), 0.0)


def test_noise_needs_rng():
    w = world_with(ScalarField.uniform("temperature", 20.0, 4, 4))
    with pytest.raises(ValueError):
        sample_field(w, Point2(1, 1), "temperature", noise_sd=1.0)
    v = sample_field(w, Point2(1, 1), "temperature", noise_sd=1.0, rng=np.random.default_rng(0))
    assert v != 20.0


@given(st.floats(0.01, 3.99), st.floats(0.0, 4.0))
def test_continuous_across_cell_boundaries(frac, y):
    f = field_from_function("temperature", lambda x, y: np.sin(x) * 5 + y ** 2, 4, 4, 0.5)
    w = world_with(f)
    xb = round(frac * 2) / 2  # a node column
    a = sample_field(w, Point2(max(xb - 1e-12, 0), y), "temperature")
    b = sample_field(w, Point2(min(xb + 1e-12, 4), y), "temperature")
    assert abs(a - b) < 1e-9


def test_keyframes_linear_in_time():
    g0, g1 = np.zeros((3, 3)), np.full((3, 3), 10.0)
    f = ScalarField("temperature", g0, 2.0, keyframes=((0.0, g0), (10.0, g1)))
    w = world_with(f)
    assert sample_field(w, Point2(1, 1), "temperature", 5.0) == pytest.approx(5.0)
    assert sample_field(w, Point2(1, 1), "temperature", 99.0) == pytest.approx(10.0)


# --- events ---------------------------------------------------------------------------

EV = TimedEvent(5.0, Point2(2, 2), "temperature", 8.0, 0.5)


def test_event_before_and_after_onset():
    w = world_with(ScalarField.uniform("temperature", 20.0, 4, 4), [EV])
    assert sample_field(w, Point2(2, 2), "temperature", 4.9) == 20.0
    assert sample_field(w, Point2(2, 2), "temperature", 5.0) == pytest.approx(28.0)


def test_apply_events_superposition():
    f = ScalarField.uniform("temperature", 20.0, 4, 4)
    e2 = TimedEvent(0.0, Point2(1, 1), "temperature", -3.0, 1.0)
    both = apply_events({"temperature": f}, [EV, e2], 6.0)["temperature"].grid
    a = apply_events({"temperature": f}, [EV], 6.0)["temperature"].grid
    b = apply_events({"temperature": f}, [e2], 6.0)["temperature"].grid
    assert np.allclose(both - 20.0, (a - 20.0) + (b - 20.0))
    assert np.array_equal(apply_events({"temperature": f}, [EV], 1.0)["temperature"].grid, f.grid)


def test_event_decay_and_validation():
    e = TimedEvent(0.0, Point2(2, 2), "temperature", 10.0, 0.5, decay=10.0)
    assert float(e.bump(2.0, 2.0, 10.0)) == pytest.approx(10.0 / math.e)
    with pytest.raises(ValueError):
        TimedEvent(-1.0, Point2(0, 0), "temperature", 1.0, 1.0)
    with pytest.raises(ValueError):
        TimedEvent(0.0, Point2(0, 0), "temperature", 1.0, 0.0)


def test_humidity_clamped():
    f = ScalarField.uniform("humidity", 95.0, 4, 4)
    w = world_with(f, [TimedEvent(0.0, Point2(2, 2), "humidity", 30.0, 0.5)])
    assert sample_field(w, Point2(2, 2), "humidity") == 100.0


# --- dense grid baseline --------------------------------------------------------------------

def bump_world(center, amp=5.0, radius=0.3, W=6.0):
    floor = Rect.from_bounds(0, 0, W, W)
    return World(floor, {"temperature": ScalarField.uniform("temperature", 20.0, W, W)}, (),
                 (TimedEvent(0.0, center, "temperature", amp, radius),))


def test_dense_grid_source_on_sensor():
    P = grid_positions(Point2(3, 3), 1.0)
    src = Point2(*P[0, 2])
    est = dense_grid_estimate(bump_world(src), "temperature", P)
    assert est.argmax == src


def test_dense_grid_between_sensors_misses():
    P = grid_positions(Point2(3, 3), 1.0)
    src = Point2(2.5, 2.5)  # midway between four sensors
    est = dense_grid_estimate(bump_world(src, radius=0.2), "temperature", P)
    assert est.argmax.dist(src) > 0


def test_dense_grid_flat_tie_rule():
    P = grid_positions(Point2(3, 3), 1.0)
    w = World(Rect.from_bounds(0, 0, 6, 6), {"temperature": ScalarField.uniform("temperature", 20, 6, 6)})
    est = dense_grid_estimate(w, "temperature", P)
    assert est.argmax == Point2(*P[0, 0])


def test_dense_grid_error_grows_with_spacing():
    src = Point2(3.37, 2.81)
    errs = []
    for spacing in (0.5, 1.0, 2.0):
        P = grid_positions(Point2(3, 3), spacing)
        errs.append(dense_grid_estimate(bump_world(src, radius=0.4), "temperature", P).argmax.dist(src))
    assert errs[0] <= errs[1] <= errs[2]


def test_dense_grid_shape_check():
    with pytest.raises(ValueError):
        dense_grid_estimate(bump_world(Point2(3, 3)), "temperature", np.zeros((3, 2)))


# --- world -------------------------------------------------------------------------------

def test_world_rejects_outside_objects_and_sorts():
    f = ScalarField.uniform("temperature", 20.0, 4, 4)
    with pytest.raises(ValueError):
        World(FLOOR, {"temperature": f}, (SceneObject("x", "box", Rect.from_bounds(3, 3, 5, 5)),))
    objs = (SceneObject("b", "box", Rect.from_bounds(1, 1, 2, 2)), SceneObject("a", "cup", Rect.from_bounds(0, 0, 1, 1)))
    w = World(FLOOR, {"temperature": f}, objs)
    assert [o.id for o in w.objects] == ["a", "b"]
    assert [o.id for o in objects_of(w, "cup")] == ["a"]


def test_visibility_window():
    o = SceneObject("s", "spill", Rect.from_bounds(1, 1, 2, 2), visible_from=10.0)
    w = World(FLOOR, {"temperature": ScalarField.uniform("temperature", 20.0, 4, 4)}, (o,))
    assert w.visible_objects(5.0) == []
    assert w.visible_objects(10.0) == [o]


def test_digest_stable_and_sensitive():
    f = ScalarField.uniform("temperature", 20.0, 4, 4)
    a = World(FLOOR, {"temperature": f}, (), (EV,))
    b = World(FLOOR, {"temperature": f}, (), (EV,))
    c = World(FLOOR, {"temperature": f}, (), ())
    assert a.digest() == b.digest() != c.digest()
