"""Simulated 2-D indoor world.

A single rectangular floorplan carrying scalar sensor fields (bilinear over
a node grid, optionally keyframed in time), scene objects seen by the
overhead camera, and timed events that add radial Gaussian bumps to a field.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geometry import FrameTransform, Point2, Rect

FIELD_KINDS = ("temperature", "humidity", "light", "pm", "gas", "co2")
UNITS = {"temperature": "degC", "humidity": "%", "light": "lux",
         "pm": "ug/m3", "gas": "ppm", "co2": "ppm"}


class OutOfBounds(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Node-grid scalar field.

    ``grid[i, j]`` is the value at ``(j * cell_size, i * cell_size)``.
    ``keyframes`` holds ``(t, grid)`` pairs; between keyframes the field is
    linear in time and it is held constant outside them.
    """

    kind: str
    grid: np.ndarray
    cell_size: float
    keyframes: tuple = ()

    def __post_init__(self):
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")
        g = np.array(self.grid, dtype=float)
        if g.ndim != 2 or g.shape[0] < 1 or g.shape[1] < 1:
            raise ValueError("grid must be a non-empty 2-D array")
        if self.cell_size <= 0:
            raise ValueError("cell_size must be positive")
        frames = tuple((float(t), np.array(fg, dtype=float)) for t, fg in self.keyframes)
        for _, fg in ((0, g),) + frames:
            if fg.shape != g.shape:
                raise ValueError("keyframe grids must match the base grid shape")
            if not np.all(np.isfinite(fg)):
                raise ValueError("field values must be finite")
            if self.kind == "humidity" and (fg.min() < 0 or fg.max() > 100):
                raise ValueError("humidity must lie in [0, 100]")
        g.flags.writeable = False
        object.__setattr__(self, "grid", g)
        object.__setattr__(self, "keyframes", tuple(sorted(frames, key=lambda f: f[0])))

    @classmethod
    def uniform(cls, kind: str, value: float, width: float, height: float, cell_size: float = 0.5):
        nx = int(math.ceil(width / cell_size - 1e-9)) + 1
        ny = int(math.ceil(height / cell_size - 1e-9)) + 1
        return cls(kind, np.full((ny, nx), float(value)), cell_size)

    @property
    def extent(self) -> tuple[float, float]:
        ny, nx = self.grid.shape
        return (nx - 1) * self.cell_size, (ny - 1) * self.cell_size

    def grid_at(self, t: float) -> np.ndarray:
        if not self.keyframes:
            return self.grid
        ts = [f[0] for f in self.keyframes]
        if t <= ts[0]:
            return self.keyframes[0][1]
        if t >= ts[-1]:
            return self.keyframes[-1][1]
        k = int(np.searchsorted(ts, t, side="right"))
        (t0, g0), (t1, g1) = self.keyframes[k - 1], self.keyframes[k]
        w = (t - t0) / (t1 - t0)
        return (1 - w) * g0 + w * g1

    def interpolate(self, x: float, y: float, t: float = 0.0) -> float:
        g = self.grid_at(t)
        ny, nx = g.shape
        fx = min(max(x / self.cell_size, 0.0), nx - 1)
        fy = min(max(y / self.cell_size, 0.0), ny - 1)
        j0 = min(int(fx), max(nx - 2, 0))
        i0 = min(int(fy), max(ny - 2, 0))
        j1, i1 = min(j0 + 1, nx - 1), min(i0 + 1, ny - 1)
        ax, ay = fx - j0, fy - i0
        top = g[i0, j0] * (1 - ax) + g[i0, j1] * ax
        bot = g[i1, j0] * (1 - ax) + g[i1, j1] * ax
        return float(top * (1 - ay) + bot * ay)


@dataclass(frozen=True)
class SceneObject:
    """A physical object the overhead camera may see.

    ``saliency`` scales how much of the footprint carries visual evidence for
    its class; ``visible_from``/``visible_until`` bound when it exists (used
    for event proxies such as a spill that appears at onset).
    """

    id: str
    cls: str
    footprint: Rect
    under_furniture: bool = False
    saliency: float = 1.0
    visible_from: float = 0.0
    visible_until: float = math.inf

    def present(self, t: float) -> bool:
        return self.visible_from <= t < self.visible_until


@dataclass(frozen=True)
class TimedEvent:
    onset: float
    location: Point2
    kind: str
    amplitude: float
    radius: float
    decay: float | None = None
    description: str = ""

    def __post_init__(self):
        if self.onset < 0:
            raise ValueError("event onset must be >= 0")
        if self.radius <= 0:
            raise ValueError("event radius must be positive")
        if self.kind not in FIELD_KINDS:
            raise ValueError(f"unknown field kind {self.kind!r}")

    def bump(self, x, y, t: float):
        if t < self.onset:
            return np.zeros_like(np.asarray(x, dtype=float))
        d2 = (np.asarray(x) - self.location.x) ** 2 + (np.asarray(y) - self.location.y) ** 2
        amp = self.amplitude
        if self.decay:
            amp *= math.exp(-(t - self.onset) / self.decay)
        return amp * np.exp(-d2 / (2 * self.radius ** 2))


@dataclass(frozen=True, eq=False)
class World:
    """Immutable world realization; every query is a pure function of time."""

    floorplan: Rect
    fields: Mapping[str, ScalarField]
    objects: tuple[SceneObject, ...] = ()
    events: tuple[TimedEvent, ...] = ()
    transform: FrameTransform = FrameTransform(50.0)

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(sorted(self.objects, key=lambda o: o.id)))
        object.__setattr__(self, "events", tuple(self.events))
        for o in self.objects:
            if not self.floorplan.contains_rect(o.footprint, tol=1e-9):
                raise ValueError(f"object {o.id} lies outside the floorplan")

    def visible_objects(self, t: float = 0.0) -> list[SceneObject]:
        return [o for o in self.objects if o.present(t)]

    def true_value(self, p: Point2, kind: str, t: float = 0.0) -> float:
        if not self.floorplan.contains_point(p, tol=1e-9):
            raise OutOfBounds(f"{p} outside floorplan")
        if kind not in self.fields:
            raise KeyError(f"world has no {kind} field")
        v = self.fields[kind].interpolate(p.x, p.y, t)
        for e in self.events:
            if e.kind == kind:
                v += float(e.bump(p.x, p.y, t))
        if kind == "humidity":
            v = min(max(v, 0.0), 100.0)
        return v

    def digest(self) -> str:
        """Stable hash of the realization, used to check paired trials."""
        doc = {
            "floorplan": self.floorplan.bounds(),
            "fields": {k: [f.kind, f.cell_size, f.grid.round(12).tolist(),
                           [[t, g.round(12).tolist()] for t, g in f.keyframes]]
                       for k, f in sorted(self.fields.items())},
            "objects": [[o.id, o.cls, o.footprint.bounds(), o.under_furniture, o.saliency,
                         o.visible_from, str(o.visible_until)] for o in self.objects],
            "events": [[e.onset, list(e.location), e.kind, e.amplitude, e.radius,
                        e.decay, e.description] for e in self.events],
            "transform": [self.transform.pixels_per_meter, list(self.transform.origin_offset)],
        }
        return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()


def sample_field(world: World, p: Point2, kind: str, t: float = 0.0,
                 noise_sd: float = 0.0, rng: np.random.Generator | None = None) -> float:
    """Field value at ``p`` and time ``t`` plus zero-mean Gaussian noise."""
    v = world.true_value(p, kind, t)
    if noise_sd > 0:
        if rng is None:
            raise ValueError("noisy sampling needs an rng")
        v += float(rng.normal(0.0, noise_sd))
        if kind == "humidity":
            v = min(max(v, 0.0), 100.0)
    return v


def apply_events(fields: Mapping[str, ScalarField], events: Iterable[TimedEvent], t: float) -> dict[str, ScalarField]:
    """Snapshot of the fields at ``t`` with event bumps added at grid nodes."""
    events = list(events)
    out = {}
    for name, f in fields.items():
        g = np.array(f.grid_at(t), dtype=float)
        ny, nx = g.shape
        xs, ys = np.meshgrid(np.arange(nx) * f.cell_size, np.arange(ny) * f.cell_size)
        for e in events:
            if e.kind == f.kind:
                g = g + e.bump(xs, ys, t)
        if f.kind == "humidity":
            g = np.clip(g, 0.0, 100.0)
        out[name] = replace(f, grid=g, keyframes=())
    return out


@dataclass(frozen=True)
class DenseGridEstimate:
    argmax: Point2
    xs: np.ndarray
    ys: np.ndarray
    values: np.ndarray
    readings: np.ndarray


def grid_positions(center: Point2, spacing: float, n: int = 3) -> np.ndarray:
    """(n, n, 2) regular sensor layout centered on ``center``."""
    offs = (np.arange(n) - (n - 1) / 2) * spacing
    xs, ys = np.meshgrid(center.x + offs, center.y + offs)
    return np.stack([xs, ys], axis=-1)


def dense_grid_estimate(world: World, kind: str, sensor_positions, t: float = 0.0,
                        noise_sd: float = 0.0, rng: np.random.Generator | None = None,
                        steps: int = 10) -> DenseGridEstimate:
    """Static-grid baseline: read an n x n sensor grid and interpolate.

    The interpolated map is sampled ``steps`` times per sensor interval
    (sensor nodes included); its argmax, ties to the lowest row-major cell,
    is the estimate.
    """
    P = np.asarray(sensor_positions, dtype=float)
    if P.ndim != 3 or P.shape[2] != 2:
        raise ValueError("sensor_positions must be (rows, cols, 2)")
    rows, cols = P.shape[:2]
    readings = np.empty((rows, cols))
    for i in range(rows):
        for j in range(cols):
            readings[i, j] = sample_field(world, Point2(*P[i, j]), kind, t, noise_sd, rng)
    # sensors sit on a regular lattice; interpolate in lattice coordinates
    u = np.linspace(0, cols - 1, (cols - 1) * steps + 1)
    v = np.linspace(0, rows - 1, (rows - 1) * steps + 1)
    j0 = np.minimum(u.astype(int), max(cols - 2, 0))
    i0 = np.minimum(v.astype(int), max(rows - 2, 0))
    au, av = u - j0, v - i0
    j1, i1 = np.minimum(j0 + 1, cols - 1), np.minimum(i0 + 1, rows - 1)
    R = readings
    top = R[i0][:, j0] * (1 - au) + R[i0][:, j1] * au
    bot = R[i1][:, j0] * (1 - au) + R[i1][:, j1] * au
    values = top * (1 - av)[:, None] + bot * av[:, None]
    x0, x1 = P[0, 0, 0], P[0, -1, 0]
    y0, y1 = P[0, 0, 1], P[-1, 0, 1]
    xs = x0 + (x1 - x0) * u / max(cols - 1, 1)
    ys = y0 + (y1 - y0) * v / max(rows - 1, 1)
    flat = int(np.argmax(values))
    r, c = divmod(flat, values.shape[1])
    return DenseGridEstimate(Point2(float(xs[c]), float(ys[r])), xs, ys, values, readings)


def field_from_function(kind: str, fn, width: float, height: float, cell_size: float = 0.5) -> ScalarField:
    nx = int(math.ceil(width / cell_size - 1e-9)) + 1
    ny = int(math.ceil(height / cell_size - 1e-9)) + 1
    xs, ys = np.meshgrid(np.arange(nx) * cell_size, np.arange(ny) * cell_size)
    return ScalarField(kind, np.asarray(fn(xs, ys), dtype=float), cell_size)


def objects_of(world: World, cls: str, t: float = 0.0) -> Sequence[SceneObject]:
    return [o for o in world.visible_objects(t) if o.cls == cls]
