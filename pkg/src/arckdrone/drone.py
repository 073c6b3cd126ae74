"""Drone kinematics, camera-network localization, flight-time budget and
in-flight sensing.

Battery is tracked in seconds of remaining flight for the attached module,
taken from the module catalog's fly-time column; watts are informational.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .environment import FIELD_KINDS, World, sample_field
from .geometry import Point2

CAMERA = "camera"
ACTUATOR = "actuator"

# median of a Rayleigh(sigma) variable is sigma * sqrt(2 ln 2)
RAYLEIGH_MEDIAN = math.sqrt(2 * math.log(2))
MEDIAN_LOCALIZATION_ERROR = 0.0329


class BatteryExhausted(RuntimeError):
    pass


class Unreachable(RuntimeError):
    pass


class NoModuleAttached(RuntimeError):
    pass


class ModalityMismatch(RuntimeError):
    pass


class UnknownModule(KeyError):
    pass


@dataclass(frozen=True)
class SensorModuleSpec:
    name: str
    modalities: tuple[str, ...]
    module_mass: float  # g
    total_mass: float  # g
    module_power: float  # W
    drone_power: float  # W
    fly_time_with_module: float  # s
    cost: float  # $

    def __post_init__(self):
        if self.module_mass < 0:
            raise ValueError("module mass must be >= 0")
        if self.fly_time_with_module <= 0:
            raise ValueError("fly time must be positive")

    @property
    def modality(self) -> str:
        return self.modalities[0]

    def senses(self, kind: str) -> bool:
        return kind in self.modalities


def _mmss(m: int, s: int) -> float:
    return 60.0 * m + s


DRONE_ONLY = SensorModuleSpec("Drone Only", (CAMERA,), 0.0, 344.7, 0.0, 195.4, _mmss(3, 47), 344)

CATALOG: dict[str, SensorModuleSpec] = {
    m.name: m
    for m in (
        SensorModuleSpec("PM2.5", ("pm",), 67.2, 411.9, 0.29, 226.0, _mmss(3, 16), 40),
        SensorModuleSpec("Temp&Moisture", ("temperature", "humidity"), 27.6, 372.3, 3.3e-6, 198.8,
                         _mmss(3, 43), 12),
        SensorModuleSpec("Light Sensor", ("light",), 28.1, 372.8, 10e-3, 199.3, _mmss(3, 43), 10),
        SensorModuleSpec("CO2", ("co2",), 28.1, 372.8, 86e-3, 199.8, _mmss(3, 42), 16),
        SensorModuleSpec("Alcohol", ("gas",), 31.5, 376.2, 0.75, 201.7, _mmss(3, 39), 8),
        SensorModuleSpec("Actuator", (ACTUATOR,), 50.1, 394.8, 1.22, 235.1, _mmss(3, 8), 7),
        # on-board camera; flies on the bare-drone budget
        SensorModuleSpec("Drone Cam", (CAMERA,), 0.0, 344.7, 0.0, 195.4, _mmss(3, 47), 0),
    )
}


def get_module(name: str) -> SensorModuleSpec:
    if name == DRONE_ONLY.name:
        return DRONE_ONLY
    try:
        return CATALOG[name]
    except KeyError:
        raise UnknownModule(name) from None


def flight_budget(module: SensorModuleSpec | str | None) -> float:
    """Seconds of flight on a full battery with ``module`` attached."""
    if module is None:
        return DRONE_ONLY.fly_time_with_module
    if isinstance(module, str):
        return get_module(module).fly_time_with_module
    if module.name not in CATALOG and module != DRONE_ONLY:
        raise UnknownModule(module.name)
    return module.fly_time_with_module


@dataclass(frozen=True)
class Pose:
    xy: Point2
    z: float = 1.0
    yaw: float = 0.0


@dataclass(frozen=True)
class LocalizationModel:
    xy_noise_sd: float = MEDIAN_LOCALIZATION_ERROR / RAYLEIGH_MEDIAN
    z_noise_sd: float = 0.02
    update_rate: float = 20.0

    def __post_init__(self):
        if self.xy_noise_sd < 0 or self.z_noise_sd < 0:
            raise ValueError("noise sds must be >= 0")
        if self.update_rate <= 0:
            raise ValueError("update_rate must be positive")


def localize(true_pose: Pose, model: LocalizationModel, rng: np.random.Generator) -> Pose:
    """One i.i.d. position fix: isotropic xy noise plus independent z noise."""
    dx, dy = rng.normal(0.0, 1.0, 2) * model.xy_noise_sd
    dz = rng.normal(0.0, 1.0) * model.z_noise_sd
    return Pose(Point2(true_pose.xy.x + dx, true_pose.xy.y + dy), true_pose.z + dz, true_pose.yaw)


@dataclass(frozen=True)
class FlightParams:
    speed: float = 0.5
    arrival_radius: float = 0.10
    dt: float = 0.05
    timeout: float = 120.0
    takeoff_time: float = 2.0
    cruise_altitude: float = 1.0

    def __post_init__(self):
        if self.speed <= 0 or self.dt <= 0 or self.arrival_radius < 0:
            raise ValueError("bad flight parameters")


@dataclass(frozen=True)
class TrajectoryPoint:
    t: float
    true_x: float
    true_y: float
    est_x: float
    est_y: float
    battery_s: float


@dataclass
class Drone:
    """Single sequential drone state machine.

    ``clock`` is mission time in seconds; ``battery_remaining`` is seconds
    of flight left on the attached module's budget.
    """

    true_pose: Pose
    localization: LocalizationModel = field(default_factory=LocalizationModel)
    flight: FlightParams = field(default_factory=FlightParams)
    attached: SensorModuleSpec | None = None
    battery_remaining: float = field(default=-1.0)
    airborne: bool = False
    clock: float = 0.0
    payload: str | None = None
    trajectory: list[TrajectoryPoint] = field(default_factory=list)
    est_pose: Pose | None = None
    airborne_time: float = 0.0

    def __post_init__(self):
        if self.battery_remaining < 0:
            self.battery_remaining = flight_budget(self.attached)
        if self.est_pose is None:
            self.est_pose = self.true_pose

    @property
    def speed(self) -> float:
        return self.flight.speed

    def recharge(self):
        self.battery_remaining = flight_budget(self.attached)

    def attach(self, module: SensorModuleSpec | None, payload: str | None = None):
        """Swap the attached module; the new budget scales the charge left."""
        frac = self.battery_remaining / flight_budget(self.attached)
        self.attached = module
        self.payload = payload
        self.battery_remaining = frac * flight_budget(module)

    def _spend(self, seconds: float):
        if seconds > self.battery_remaining + 1e-9:
            raise BatteryExhausted(
                f"need {seconds:.2f}s, {self.battery_remaining:.2f}s left")
        self.battery_remaining = max(0.0, self.battery_remaining - seconds)
        self.airborne_time += seconds

    def _record(self):
        self.trajectory.append(TrajectoryPoint(
            round(self.clock, 9), self.true_pose.xy.x, self.true_pose.xy.y,
            self.est_pose.xy.x, self.est_pose.xy.y, self.battery_remaining))

    def takeoff(self, rng: np.random.Generator):
        if self.airborne:
            return
        self._spend(self.flight.takeoff_time)
        self.clock += self.flight.takeoff_time
        self.airborne = True
        self.true_pose = replace(self.true_pose, z=self.flight.cruise_altitude)
        self.est_pose = localize(self.true_pose, self.localization, rng)
        self._record()

    def hover(self, duration: float):
        if duration <= 0:
            return
        self._spend(duration)
        self.clock += duration

    def navigate_to(self, waypoint: Point2, rng: np.random.Generator) -> list[TrajectoryPoint]:
        return navigate_to(self, waypoint, rng)

    def sense_at(self, world: World, p: Point2, kind: str, duration: float, rate: float,
                 noise_sd: float, rng: np.random.Generator) -> list[tuple[float, float, float, float]]:
        return sense_at(self, world, p, kind, duration, rate, noise_sd, rng)

    def trajectory_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "true_x", "true_y", "est_x", "est_y", "battery_s"])
        for tp in self.trajectory:
            w.writerow([f"{tp.t:.3f}", f"{tp.true_x:.5f}", f"{tp.true_y:.5f}",
                        f"{tp.est_x:.5f}", f"{tp.est_y:.5f}", f"{tp.battery_s:.3f}"])
        return buf.getvalue()


def navigate_to(drone: Drone, waypoint: Point2, rng: np.random.Generator) -> list[TrajectoryPoint]:
    """Closed-loop straight-line flight toward ``waypoint``.

    Each tick takes a fresh fix and moves ``speed * dt`` along the direction
    the fix suggests, paying ``dt`` of battery.  When the fix is within one
    step (and within ``arrival_radius``) the drone closes the remaining
    estimated gap and arrives, so without noise it flies exactly the
    Euclidean distance and with noise it stops one (fresh) fix error off
    target.
    """
    if not drone.airborne:
        raise RuntimeError("navigate_to needs an airborne drone")
    fp = drone.flight
    step = drone.speed * fp.dt
    final = min(step, fp.arrival_radius) if fp.arrival_radius > 0 else step
    start = len(drone.trajectory)
    elapsed = 0.0
    while True:
        if elapsed >= fp.timeout:
            raise Unreachable(f"no arrival within {fp.timeout}s")
        est = localize(drone.true_pose, drone.localization, rng)
        drone.est_pose = est
        dx, dy = waypoint.x - est.xy.x, waypoint.y - est.xy.y
        d = math.hypot(dx, dy)
        drone._spend(fp.dt)
        move = min(step, d)
        arrived = d <= final + 1e-9
        if arrived:
            # the closing move uses a fresh fix so the arrival error is not
            # biased by the fix that triggered arrival
            est = localize(drone.true_pose, drone.localization, rng)
            drone.est_pose = est
            dx, dy = waypoint.x - est.xy.x, waypoint.y - est.xy.y
            d = math.hypot(dx, dy)
            move = d
        if d > 0:
            p = drone.true_pose.xy
            drone.true_pose = replace(
                drone.true_pose, xy=Point2(p.x + dx / d * move, p.y + dy / d * move))
        drone.clock += fp.dt
        elapsed += fp.dt
        drone._record()
        if arrived:
            break
    return drone.trajectory[start:]


def sense_at(drone: Drone, world: World, p: Point2, kind: str, duration: float, rate: float,
             noise_sd: float, rng: np.random.Generator) -> list[tuple[float, float, float, float]]:
    """Hover and read the attached sensor ``duration * rate`` times.

    Returns ``(t, est_x, est_y, value)`` tuples; the reading is taken at the
    drone's true position.
    """
    if drone.attached is None:
        raise NoModuleAttached("no module attached")
    if kind not in FIELD_KINDS or not drone.attached.senses(kind):
        raise ModalityMismatch(f"{drone.attached.name} cannot sense {kind}")
    n = int(round(duration * rate))
    period = 1.0 / rate
    out = []
    for _ in range(n):
        drone._spend(period)
        drone.clock += period
        est = localize(drone.true_pose, drone.localization, rng)
        drone.est_pose = est
        v = sample_field(world, _inside(world, drone.true_pose.xy), kind, drone.clock, noise_sd, rng)
        out.append((drone.clock, est.xy.x, est.xy.y, v))
    drone._record()
    return out


def _inside(world: World, p: Point2) -> Point2:
    fp = world.floorplan
    return Point2(min(max(p.x, fp.min.x), fp.max.x), min(max(p.y, fp.min.y), fp.max.y))
