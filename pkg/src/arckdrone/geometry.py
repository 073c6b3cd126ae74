"""Planar geometry shared by the rest of the package.

Points, raster masks, axis-aligned and rotated rectangles, the minimum-area
enclosing rectangle (convex hull + rotating calipers), aspect-ratio padding
and the affine image <-> world transform of the overhead camera map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

# Minimum full thickness (pixels) of a rectangle fitted to degenerate input.
EPS_RECT = 1.0


class EmptyInput(ValueError):
    """An operation that needs at least one element received none."""


class Point2(NamedTuple):
    x: float
    y: float

    def dist(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class FrameTransform:
    """Scale + offset between world meters and image pixels."""

    pixels_per_meter: float
    origin_offset: Point2 = Point2(0.0, 0.0)

    def __post_init__(self):
        if not self.pixels_per_meter > 0:
            raise ValueError("pixels_per_meter must be positive")


def world_to_image(p: Point2, t: FrameTransform) -> Point2:
    s = t.pixels_per_meter
    return Point2(p.x * s + t.origin_offset.x, p.y * s + t.origin_offset.y)


def image_to_world(p: Point2, t: FrameTransform) -> Point2:
    s = t.pixels_per_meter
    return Point2((p.x - t.origin_offset.x) / s, (p.y - t.origin_offset.y) / s)


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle with strictly positive width and height."""

    min: Point2
    max: Point2

    def __post_init__(self):
        if not (self.max.x > self.min.x and self.max.y > self.min.y):
            raise ValueError(f"degenerate Rect {self.min} -> {self.max}")
        if not all(math.isfinite(v) for v in (*self.min, *self.max)):
            raise ValueError("Rect corners must be finite")

    @classmethod
    def from_bounds(cls, x0: float, y0: float, x1: float, y1: float) -> "Rect":
        return cls(Point2(float(x0), float(y0)), Point2(float(x1), float(y1)))

    @property
    def width(self) -> float:
        return self.max.x - self.min.x

    @property
    def height(self) -> float:
        return self.max.y - self.min.y

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> Point2:
        return Point2((self.min.x + self.max.x) / 2, (self.min.y + self.max.y) / 2)

    def bounds(self) -> tuple[float, float, float, float]:
        return (self.min.x, self.min.y, self.max.x, self.max.y)

    def contains_rect(self, other: "Rect", tol: float = 1e-9) -> bool:
        return (
            other.min.x >= self.min.x - tol
            and other.min.y >= self.min.y - tol
            and other.max.x <= self.max.x + tol
            and other.max.y <= self.max.y + tol
        )

    def contains_point(self, p: Point2, tol: float = 0.0) -> bool:
        return (
            self.min.x - tol <= p.x <= self.max.x + tol
            and self.min.y - tol <= p.y <= self.max.y + tol
        )

    def intersection_area(self, other: "Rect") -> float:
        w = min(self.max.x, other.max.x) - max(self.min.x, other.min.x)
        h = min(self.max.y, other.max.y) - max(self.min.y, other.min.y)
        return w * h if w > 0 and h > 0 else 0.0

    def union(self, other: "Rect") -> "Rect":
        return Rect.from_bounds(
            min(self.min.x, other.min.x),
            min(self.min.y, other.min.y),
            max(self.max.x, other.max.x),
            max(self.max.y, other.max.y),
        )


@dataclass(frozen=True)
class RotatedRect:
    """Rotated rectangle.

    ``half_extents[0]`` runs along ``angle`` and ``half_extents[1]`` along the
    perpendicular.  ``angle`` is canonicalised into ``[0, pi/2)``; a quarter
    turn is absorbed by swapping the extents.
    """

    center: Point2
    half_extents: tuple[float, float]
    angle: float

    def __post_init__(self):
        if not (self.half_extents[0] > 0 and self.half_extents[1] > 0):
            raise ValueError("half extents must be positive")
        if not 0.0 <= self.angle < math.pi / 2:
            raise ValueError(f"angle {self.angle} outside [0, pi/2)")

    @property
    def area(self) -> float:
        return 4.0 * self.half_extents[0] * self.half_extents[1]

    def corners(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        u = np.array([c, s]) * self.half_extents[0]
        v = np.array([-s, c]) * self.half_extents[1]
        ctr = np.array(self.center)
        return np.array([ctr - u - v, ctr + u - v, ctr + u + v, ctr - u + v])


def _canonical_rotated(center, w: float, h: float, angle: float) -> RotatedRect:
    angle = math.fmod(angle, math.pi)
    if angle < 0:
        angle += math.pi
    if angle >= math.pi / 2:
        angle -= math.pi / 2
        w, h = h, w
    # fmod noise right below the quarter turn
    if angle >= math.pi / 2 - 1e-15:
        angle = 0.0
        w, h = h, w
    return RotatedRect(Point2(float(center[0]), float(center[1])), (w / 2, h / 2), angle)


@dataclass(frozen=True, eq=False)
class Mask:
    """A segmented region: a non-empty set of unit pixel cells.

    ``cells`` is an ``(N, 2)`` integer array of ``(x, y)`` cell corners; cell
    ``(x, y)`` covers ``[x, x+1) x [y, y+1)``.
    """

    id: str
    cells: np.ndarray
    source_object: str | None = None
    _centroid: Point2 = field(init=False, repr=False)
    _bbox: Rect = field(init=False, repr=False)

    def __post_init__(self):
        raw = np.asarray(self.cells, dtype=np.int64).reshape(-1, 2)
        if len(raw) == 0:
            raise EmptyInput(f"mask {self.id!r} has an empty footprint")
        # unique rows in (x, y) lexicographic order via one scalar key per cell
        lo = raw.min(axis=0)
        span = int(raw[:, 1].max() - lo[1]) + 1
        key = np.unique((raw[:, 0] - lo[0]) * span + (raw[:, 1] - lo[1]))
        cells = np.column_stack([key // span + lo[0], key % span + lo[1]])
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        mean = cells.mean(axis=0) + 0.5
        object.__setattr__(self, "_centroid", Point2(float(mean[0]), float(mean[1])))
        lo = cells.min(axis=0)
        hi = cells.max(axis=0) + 1
        object.__setattr__(self, "_bbox", Rect.from_bounds(lo[0], lo[1], hi[0], hi[1]))

    @classmethod
    def from_rect_cells(cls, id: str, x0: int, y0: int, x1: int, y1: int, source_object=None):
        """Mask covering the integer cell block ``[x0, x1) x [y0, y1)``."""
        xs, ys = np.meshgrid(np.arange(x0, x1), np.arange(y0, y1))
        return cls(id, np.column_stack([xs.ravel(), ys.ravel()]), source_object)

    @property
    def area(self) -> int:
        return len(self.cells)

    @property
    def bbox(self) -> Rect:
        return self._bbox

    def to_rle(self) -> list[tuple[int, int, int]]:
        """Row runs ``(y, x_start, length)`` sorted by row then column."""
        order = np.lexsort((self.cells[:, 0], self.cells[:, 1]))
        runs: list[tuple[int, int, int]] = []
        for x, y in self.cells[order]:
            x, y = int(x), int(y)
            if runs and runs[-1][0] == y and runs[-1][1] + runs[-1][2] == x:
                runs[-1] = (y, runs[-1][1], runs[-1][2] + 1)
            else:
                runs.append((y, x, 1))
        return runs

    @classmethod
    def from_rle(cls, id: str, runs: Iterable[Sequence[int]], source_object=None) -> "Mask":
        cells = [(x, y) for y, x0, n in runs for x in range(x0, x0 + n)]
        return cls(id, np.array(cells, dtype=np.int64), source_object)


def centroid(mask: Mask) -> Point2:
    """Mean of the mask's cell centers."""
    return mask._centroid


def aabb(masks: Iterable[Mask]) -> Rect:
    """Tightest axis-aligned rectangle around every cell of every mask."""
    boxes = [m.bbox for m in masks]
    if not boxes:
        raise EmptyInput("aabb of no masks")
    return Rect.from_bounds(
        min(b.min.x for b in boxes),
        min(b.min.y for b in boxes),
        max(b.max.x for b in boxes),
        max(b.max.y for b in boxes),
    )


def aspect_ratio(rect: Rect) -> float:
    """Width over height. Not symmetrised: 2x1 and 1x2 differ."""
    return rect.width / rect.height


def convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain hull, counter-clockwise, collinear points dropped."""
    pts = np.unique(np.asarray(points, dtype=float).reshape(-1, 2), axis=0)
    if len(pts) <= 2:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list = []
    for p in pts[::-1]:
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.array(lower[:-1] + upper[:-1])


def min_area_rotated_rect(points, eps: float = EPS_RECT) -> RotatedRect:
    """Minimum-area rectangle enclosing ``points``.

    The optimum has a side collinear with a hull edge, so each hull edge
    direction is tried in turn (rotating calipers) and the hull is projected
    onto that edge frame.  Fewer than three distinct points, or a collinear
    set, yields a rectangle of thickness ``eps`` along the segment.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise EmptyInput("no points")
    hull = convex_hull(pts)
    if len(hull) < 3:
        return _degenerate_rect(hull, eps)

    edges = np.roll(hull, -1, axis=0) - hull
    lengths = np.hypot(edges[:, 0], edges[:, 1])
    keep = lengths > 0
    u = edges[keep] / lengths[keep, None]
    v = np.column_stack([-u[:, 1], u[:, 0]])
    pu = hull @ u.T  # (hull, edges)
    pv = hull @ v.T
    widths = pu.max(axis=0) - pu.min(axis=0)
    heights = pv.max(axis=0) - pv.min(axis=0)
    areas = widths * heights
    best = int(np.argmin(areas))
    if heights[best] <= 0 or widths[best] <= 0:
        return _degenerate_rect(hull, eps)
    cu = (pu[:, best].max() + pu[:, best].min()) / 2
    cv = (pv[:, best].max() + pv[:, best].min()) / 2
    center = cu * u[best] + cv * v[best]
    angle = math.atan2(u[best][1], u[best][0])
    return _canonical_rotated(center, float(widths[best]), float(heights[best]), angle)


def _degenerate_rect(pts: np.ndarray, eps: float) -> RotatedRect:
    if len(pts) == 1:
        return _canonical_rotated(pts[0], eps, eps, 0.0)
    # collinear: span the two extreme points
    far = 0.0
    for i in range(len(pts)):
        for j in range(i + 1, len(pts)):
            dd = np.hypot(*(pts[j] - pts[i]))
            if dd > far:
                far, d, mid = dd, pts[j] - pts[i], (pts[i] + pts[j]) / 2
    angle = math.atan2(d[1], d[0])
    return _canonical_rotated(mid, max(far, eps), eps, angle)


def enclosing_area_at(points, angle: float) -> float:
    """Area of the enclosing rectangle whose sides run along ``angle``."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    c, s = math.cos(angle), math.sin(angle)
    pu = pts @ np.array([c, s])
    pv = pts @ np.array([-s, c])
    return float((pu.max() - pu.min()) * (pv.max() - pv.min()))


@dataclass(frozen=True)
class PaddedRect:
    rect: Rect
    bounds_limited: bool


def _clamp_ratio(w: float, h: float, ar_min: float, ar_max: float) -> tuple[float, float]:
    if w / h > ar_max:
        h = w / ar_max
        while w / h > ar_max:
            h = np.nextafter(h, math.inf)
    elif w / h < ar_min:
        w = h * ar_min
        while w / h < ar_min:
            w = np.nextafter(w, math.inf)
    return w, h


def pad_to_aspect(rect: Rect, ar_min: float, ar_max: float, bounds: Rect | None = None) -> PaddedRect:
    """Grow ``rect`` symmetrically until its aspect ratio lies in range.

    The result is shifted (never shrunk below ``rect``) to stay inside
    ``bounds``.  When a padded side would not fit in ``bounds`` it is
    clipped to the bounds and the result is flagged ``bounds_limited``.
    """
    if not 0 < ar_min <= ar_max:
        raise ValueError("need 0 < ar_min <= ar_max")
    w, h = _clamp_ratio(rect.width, rect.height, ar_min, ar_max)
    cx, cy = rect.center
    x0, x1 = cx - w / 2, cx + w / 2
    y0, y1 = cy - h / 2, cy + h / 2
    # keep the original extent exactly; symmetric growth can lose an ulp
    x0, x1 = min(x0, rect.min.x), max(x1, rect.max.x)
    y0, y1 = min(y0, rect.min.y), max(y1, rect.max.y)
    limited = False
    if bounds is not None:
        (x0, x1), lx = _fit_interval(x0, x1, bounds.min.x, bounds.max.x)
        (y0, y1), ly = _fit_interval(y0, y1, bounds.min.y, bounds.max.y)
        limited = lx or ly
    out = Rect.from_bounds(x0, y0, x1, y1)
    if not limited and not ar_min <= aspect_ratio(out) <= ar_max:
        # translation rounding moved a side; re-pad in place, if it fits
        w2, h2 = _clamp_ratio(out.width, out.height, ar_min, ar_max)
        x1b, y1b = out.min.x + w2, out.min.y + h2
        # the additions round too; step the far edges until the ratio holds
        for _ in range(64):
            ar = (x1b - out.min.x) / (y1b - out.min.y)
            if ar < ar_min:
                x1b = float(np.nextafter(x1b, math.inf))
            elif ar > ar_max:
                y1b = float(np.nextafter(y1b, math.inf))
            else:
                break
        if bounds is None or (x1b <= bounds.max.x and y1b <= bounds.max.y):
            out = Rect.from_bounds(out.min.x, out.min.y, x1b, y1b)
        else:
            limited = True
    return PaddedRect(out, limited)


def _fit_interval(a: float, b: float, lo: float, hi: float):
    if b - a >= hi - lo:
        return (lo, hi), b - a > hi - lo
    if a < lo:
        a, b = lo, lo + (b - a)
    elif b > hi:
        a, b = hi - (b - a), hi
    return (a, b), False
