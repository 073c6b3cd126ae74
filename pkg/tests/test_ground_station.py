import itertools

import numpy as np
import pytest

from arckdrone.drone import Drone, Pose, get_module
from arckdrone.geometry import Point2
from arckdrone.ground_station import (PLATFORMS, AlreadyLoaded, ModuleUnavailable, ModuleUnit, NotActuator,
                                      NotAligned, PlatformModel, Station, SwapRequest, TouchdownDistribution,
                                      TouchdownSample, is_aligned, land, landing_success_rate, load_payload,
                                      swap_module)

HOME = Point2(1.0, 1.0)


def docked(st):
    return Drone(Pose(st.location, 0.0))


def test_perfect_touchdown_aligns_everywhere():
    for p in PLATFORMS.values():
        assert is_aligned(p, TouchdownSample(0.0, 0.0))


def test_offset_beyond_tolerance_misaligns():
    p = PLATFORMS["funnel"]
    assert not is_aligned(p, TouchdownSample(p.max_offset_tolerance + 1e-6, 0.0))
    assert not is_aligned(p, TouchdownSample(0.0, -(p.max_yaw_tolerance + 1e-6)))


def test_land_records_outcome():
    st = Station(HOME, touchdown=TouchdownDistribution(0.0, 0.0))
    d = Drone(Pose(HOME))
    rng = np.random.default_rng(0)
    d.takeoff(rng)
    out = land(d, st, rng)
    assert out.aligned and st.drone_aligned and not d.airborne
    assert out.duration == pytest.approx(7.8)


def test_land_misaligned_blocks_swap():
    st = Station.stocked(HOME, {"PM2.5": 1}, platform=PLATFORMS["flat"],
                         touchdown=TouchdownDistribution(0.5, 0.0))
    d = Drone(Pose(HOME))
    rng = np.random.default_rng(0)
    d.takeoff(rng)
    assert not land(d, st, rng).aligned
    with pytest.raises(NotAligned):
        swap_module(st, d, SwapRequest(attach="PM2.5"))


def test_swap_success_lattice():
    """Swap succeeds exactly when aligned, magnetic and the module is available."""
    for aligned, connector, available in itertools.product([True, False], ["magnetic", "mechanical"], [True, False]):
        st = Station.stocked(HOME, {"PM2.5": 1} if available else {}, connector=connector)
        st.drone_aligned = aligned
        d = docked(st)
        try:
            ok = swap_module(st, d, SwapRequest(attach="PM2.5")).success
        except (NotAligned, ModuleUnavailable):
            ok = False
        assert ok == (aligned and connector == "magnetic" and available)
        if ok:
            assert d.attached.name == "PM2.5"


def test_swap_returns_old_module_to_magazine():
    st = Station.stocked(HOME, {"PM2.5": 1, "CO2": 1})
    d = docked(st)
    swap_module(st, d, SwapRequest(attach="PM2.5"))
    swap_module(st, d, SwapRequest(detach="PM2.5", attach="CO2"))
    assert d.attached.name == "CO2"
    assert [u.name for u in st.magazine] == ["PM2.5"]
    with pytest.raises(ModuleUnavailable):
        swap_module(st, d, SwapRequest(detach="Alcohol"))


def test_swap_ground_time_in_log():
    st = Station.stocked(HOME, {"PM2.5": 1}, touchdown=TouchdownDistribution(0.0, 0.0))
    d = Drone(Pose(HOME))
    rng = np.random.default_rng(0)
    d.takeoff(rng)
    t0 = d.clock
    land(d, st, rng)
    swap_module(st, d, SwapRequest(attach="PM2.5"))
    assert d.clock - t0 == pytest.approx(st.platform.landing_time_mean + st.swap_time)
    assert sum(dur for _, dur, _ in st.log) == pytest.approx(d.clock - t0)


def test_payload_loading_rules():
    st = Station.stocked(HOME, {"Actuator": 1, "PM2.5": 1})
    act = next(u for u in st.magazine if u.name == "Actuator")
    load_payload(st, act, "vitamins")
    assert act.payload == "vitamins"
    with pytest.raises(AlreadyLoaded):
        load_payload(st, act, "snack")
    with pytest.raises(NotActuator):
        load_payload(st, next(u for u in st.magazine if u.name == "PM2.5"), "vitamins")
    d = docked(st)
    swap_module(st, d, SwapRequest(attach="Actuator", payload="vitamins"))
    assert d.payload == "vitamins"


def test_unit_for_loads_empty_actuator():
    st = Station.stocked(HOME, {"Actuator": 2})
    u = st.unit_for("Actuator", "snack")
    assert u.payload == "snack"
    assert isinstance(u, ModuleUnit) and u.spec == get_module("Actuator")


def test_validation():
    with pytest.raises(ValueError):
        PlatformModel("pad", 0.1, 1.0)
    with pytest.raises(ValueError):
        Station(HOME, connector="velcro")
    with pytest.raises(ValueError):
        SwapRequest()


def test_grooved_beats_funnel_beats_flat():
    td = TouchdownDistribution()
    rates = {k: landing_success_rate(p, td, 10_000, np.random.default_rng(0)) for k, p in PLATFORMS.items()}
    assert rates["flat"] < rates["funnel"] <= rates["grooved_funnel"]


@pytest.mark.parametrize("which", ["offset", "yaw"])
def test_tolerance_monotonicity(which):
    td = TouchdownDistribution()
    prev = -1.0
    for tol in np.linspace(0.01, 0.1, 6) if which == "offset" else np.linspace(2, 40, 6):
        p = PlatformModel("funnel", tol if which == "offset" else 0.04, tol if which == "yaw" else 25.0)
        r = landing_success_rate(p, td, 5000, np.random.default_rng(7))
        assert r >= prev
        prev = r
