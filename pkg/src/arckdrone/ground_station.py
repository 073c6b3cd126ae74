"""Ground station: passive landing alignment and magnetic module swaps.

A landing samples a touchdown error (Rayleigh offset, Gaussian yaw) caused
by ground effect.  The platform realigns the drone when both errors are
within its tolerances; otherwise the drone sits misaligned and no swap can
happen until a human intervenes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .drone import ACTUATOR, Drone, get_module
from .geometry import Point2

PLATFORM_KINDS = ("flat", "funnel", "grooved_funnel")
CONNECTORS = ("magnetic", "mechanical")
LANDING_TIME = 7.8


class NotAligned(RuntimeError):
    pass


class ModuleUnavailable(RuntimeError):
    pass


class NotActuator(ValueError):
    pass


class AlreadyLoaded(ValueError):
    pass


@dataclass(frozen=True)
class PlatformModel:
    kind: str
    max_offset_tolerance: float  # m
    max_yaw_tolerance: float  # degrees
    landing_time_mean: float = LANDING_TIME

    def __post_init__(self):
        if self.kind not in PLATFORM_KINDS:
            raise ValueError(f"unknown platform {self.kind!r}")
        if self.max_offset_tolerance <= 0 or self.max_yaw_tolerance <= 0:
            raise ValueError("tolerances must be positive")


PLATFORMS = {
    "flat": PlatformModel("flat", 0.01, 5.0),
    "funnel": PlatformModel("funnel", 0.04, 25.0),
    "grooved_funnel": PlatformModel("grooved_funnel", 0.06, 40.0),
}


@dataclass(frozen=True)
class TouchdownSample:
    offset: float
    yaw_error: float

    def __post_init__(self):
        if self.offset < 0:
            raise ValueError("offset must be >= 0")


@dataclass(frozen=True)
class TouchdownDistribution:
    offset_sigma: float = 0.02
    yaw_sd: float = 10.0

    def sample(self, rng: np.random.Generator) -> TouchdownSample:
        return TouchdownSample(float(rng.rayleigh(self.offset_sigma)) if self.offset_sigma > 0 else 0.0,
                               float(rng.normal(0.0, self.yaw_sd)) if self.yaw_sd > 0 else 0.0)


def is_aligned(platform: PlatformModel, s: TouchdownSample) -> bool:
    return s.offset <= platform.max_offset_tolerance and abs(s.yaw_error) <= platform.max_yaw_tolerance


@dataclass(frozen=True)
class LandingOutcome:
    aligned: bool
    sample: TouchdownSample
    duration: float


@dataclass
class ModuleUnit:
    """One physical module in the magazine (payload only for actuators)."""

    name: str
    payload: str | None = None
    unit_id: int = 0

    @property
    def spec(self):
        return get_module(self.name)


@dataclass(frozen=True)
class SwapRequest:
    detach: str | None = None
    attach: str | None = None
    payload: str | None = None

    def __post_init__(self):
        if self.detach is None and self.attach is None:
            raise ValueError("swap request needs detach or attach")


@dataclass(frozen=True)
class SwapOutcome:
    success: bool
    duration: float
    reason: str = ""


def load_payload(station: "Station", unit: ModuleUnit, item: str) -> None:
    if unit.spec.modality != ACTUATOR:
        raise NotActuator(f"{unit.name} cannot carry a payload")
    if unit.payload is not None:
        raise AlreadyLoaded(f"{unit.name}#{unit.unit_id} already holds {unit.payload}")
    unit.payload = item
    station.log.append(("load_payload", 0.0, f"{unit.name}#{unit.unit_id}:{item}"))


@dataclass
class Station:
    location: Point2
    platform: PlatformModel = field(default_factory=lambda: PLATFORMS["grooved_funnel"])
    touchdown: TouchdownDistribution = field(default_factory=TouchdownDistribution)
    connector: str = "magnetic"
    swap_time: float = 10.0
    magazine: list[ModuleUnit] = field(default_factory=list)
    drone_aligned: bool = True
    attached_unit: ModuleUnit | None = None
    log: list[tuple[str, float, str]] = field(default_factory=list)

    def __post_init__(self):
        if self.connector not in CONNECTORS:
            raise ValueError(f"unknown connector {self.connector!r}")

    @classmethod
    def stocked(cls, location: Point2, modules: dict[str, int], **kw) -> "Station":
        units = [ModuleUnit(name, unit_id=i) for name, n in sorted(modules.items()) for i in range(n)]
        return cls(location, magazine=units, **kw)

    def unit_for(self, name: str, payload: str | None = None) -> ModuleUnit:
        for u in self.magazine:
            if u.name == name and (payload is None or u.payload == payload):
                return u
        if payload is not None:
            for u in self.magazine:
                if u.name == name and u.payload is None:
                    load_payload(self, u, payload)
                    return u
        raise ModuleUnavailable(f"no {name} module{' with ' + payload if payload else ''} in magazine")


def land(drone: Drone, station: Station, rng: np.random.Generator,
         approach_radius: float = 0.3) -> LandingOutcome:
    """Descend onto the platform; returns whether it realigned the drone."""
    if not drone.airborne:
        raise RuntimeError("land needs an airborne drone")
    if drone.est_pose.xy.dist(station.location) > approach_radius:
        raise RuntimeError("drone is not above the station")
    platform = station.platform
    duration = platform.landing_time_mean
    drone._spend(duration)
    drone.clock += duration
    s = station.touchdown.sample(rng)
    aligned = is_aligned(platform, s)
    ang = float(rng.uniform(0, 2 * math.pi))
    loc = station.location
    rest = Point2(loc.x, loc.y) if aligned else Point2(loc.x + s.offset * math.cos(ang),
                                                        loc.y + s.offset * math.sin(ang))
    drone.true_pose = replace(drone.true_pose, xy=rest, z=0.0, yaw=math.radians(0 if aligned else s.yaw_error))
    drone.est_pose = drone.true_pose
    drone.airborne = False
    drone._record()
    station.drone_aligned = aligned
    station.log.append(("land", duration, "aligned" if aligned else
                        f"misaligned offset={s.offset:.4f} yaw={s.yaw_error:.2f}"))
    return LandingOutcome(aligned, s, duration)


def swap_module(station: Station, drone: Drone, req: SwapRequest) -> SwapOutcome:
    """Gripper + conveyor exchange of the drone's module.

    A magnetic connector always succeeds on an aligned drone; the mechanical
    connector never does (the gripper cannot apply the insertion force).
    """
    if drone.airborne or not station.drone_aligned:
        raise NotAligned("drone is not docked and aligned")
    if req.detach is not None and (drone.attached is None or drone.attached.name != req.detach):
        raise ModuleUnavailable(f"drone does not carry {req.detach}")
    unit = station.unit_for(req.attach, req.payload) if req.attach is not None else None
    t = station.swap_time
    drone.clock += t
    if station.connector != "magnetic":
        station.log.append(("swap", t, "failed: mechanical connector"))
        return SwapOutcome(False, t, "mechanical connector")
    if drone.attached is not None:
        if station.attached_unit is not None:
            station.magazine.append(station.attached_unit)
        station.attached_unit = None
        drone.attach(None)
    if unit is not None:
        station.magazine.remove(unit)
        station.attached_unit = unit
        drone.attach(unit.spec, unit.payload)
    station.log.append(("swap", t, f"{req.detach} -> {req.attach}"))
    return SwapOutcome(True, t)


def landing_success_rate(platform: PlatformModel, touchdown: TouchdownDistribution,
                         n: int, rng: np.random.Generator) -> float:
    """Monte-Carlo aligned-landing fraction (vectorised)."""
    off = rng.rayleigh(touchdown.offset_sigma, n) if touchdown.offset_sigma > 0 else np.zeros(n)
    yaw = rng.normal(0.0, touchdown.yaw_sd, n) if touchdown.yaw_sd > 0 else np.zeros(n)
    ok = (off <= platform.max_offset_tolerance) & (np.abs(yaw) <= platform.max_yaw_tolerance)
    return float(ok.mean())
