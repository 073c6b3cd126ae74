"""Stand-ins for the foundation-model perception stack.

``segment`` plays the class-agnostic segmenter: one mask per visible object,
sometimes split into pieces, plus background clutter.  ``detect`` plays the
open-vocabulary detector on a crop: each queried instance is found with a
probability that rises logistically with the object-to-crop area ratio, and
spurious boxes arrive as a Poisson process per crop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .environment import SceneObject, World
from .geometry import Mask, Point2, Rect, image_to_world, world_to_image

TRUE_POSITIVE = "true_positive"
FALSE_POSITIVE = "false_positive"


@dataclass(frozen=True)
class OracleParams:
    r_half: float = 4e-4
    slope: float = 8000.0
    p_max: float = 0.92
    p_floor: float = 0.02
    fp_rate_per_crop: float = 0.1
    prompt_specificity_boost: float = 1.0
    seed: int = 0
    close_up_size: float = 1.0
    close_up_discount: float = 0.05
    fp_box_size: float = 0.15

    def __post_init__(self):
        if not 0 <= self.p_floor <= self.p_max <= 1:
            raise ValueError("need 0 <= p_floor <= p_max <= 1")
        if self.fp_rate_per_crop < 0:
            raise ValueError("fp_rate_per_crop must be >= 0")
        if self.slope < 0:
            raise ValueError("slope must be >= 0")
        if self.prompt_specificity_boost <= 0:
            raise ValueError("prompt_specificity_boost must be positive")
        if self.close_up_size <= 0 or self.close_up_discount < 0:
            raise ValueError("bad close-up settings")


@dataclass(frozen=True)
class Detection:
    bbox: Rect
    label: str
    score: float
    # scoring-side linkage only; mission code never reads it
    truth: str
    source_object: str | None = None


@dataclass(frozen=True)
class SplitModel:
    split_prob: float = 0.3
    max_splits: int = 2
    seed: int = 0
    clutter_masks: int = 0
    clutter_size: tuple[int, int] = (3, 12)

    def __post_init__(self):
        if not 0 <= self.split_prob <= 1:
            raise ValueError("split_prob must lie in [0, 1]")
        if self.max_splits < 1:
            raise ValueError("max_splits must be >= 1")


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def effective_p_max(params: OracleParams, specific: bool = True) -> float:
    if not specific:
        return params.p_max
    return min(1.0, params.p_max * params.prompt_specificity_boost)


def detection_probability(ratio: float, params: OracleParams, specific: bool = True) -> float:
    """Hit probability for an object covering ``ratio`` of the crop.

    Rescaled so that a ratio of 0 gives exactly ``p_floor``; monotone and
    bounded above by ``p_max`` (boosted for specific prompts).
    """
    if ratio <= 0:
        return params.p_floor
    hi = effective_p_max(params, specific)
    s0 = _sigmoid(-params.slope * params.r_half)
    s = _sigmoid(params.slope * (ratio - params.r_half))
    return params.p_floor + (hi - params.p_floor) * (s - s0) / (1.0 - s0)


def image_bounds(world: World) -> Rect:
    a = world_to_image(world.floorplan.min, world.transform)
    b = world_to_image(world.floorplan.max, world.transform)
    return Rect.from_bounds(a.x, a.y, b.x, b.y)


def rect_to_world(r: Rect, world: World) -> Rect:
    a = image_to_world(r.min, world.transform)
    b = image_to_world(r.max, world.transform)
    return Rect.from_bounds(a.x, a.y, b.x, b.y)


def rect_to_image(r: Rect, world: World) -> Rect:
    a = world_to_image(r.min, world.transform)
    b = world_to_image(r.max, world.transform)
    return Rect.from_bounds(a.x, a.y, b.x, b.y)


def _cell_block(obj: SceneObject, world: World, img: Rect) -> tuple[int, int, int, int]:
    r = rect_to_image(obj.footprint, world)
    x0 = max(int(math.floor(r.min.x + 1e-9)), int(img.min.x))
    y0 = max(int(math.floor(r.min.y + 1e-9)), int(img.min.y))
    x1 = min(max(int(math.ceil(r.max.x - 1e-9)), x0 + 1), int(img.max.x))
    y1 = min(max(int(math.ceil(r.max.y - 1e-9)), y0 + 1), int(img.max.y))
    return x0, y0, max(x1, x0 + 1), max(y1, y0 + 1)


def segment(world: World, split_model: SplitModel, t: float = 0.0,
            rng: np.random.Generator | None = None) -> list[Mask]:
    """Masks for every camera-visible object, possibly split, plus clutter.

    A split cuts the object's cell block into 2..max_splits strips across its
    longer side, so the pieces partition the footprint.
    """
    if rng is None:
        rng = np.random.default_rng(split_model.seed)
    img = image_bounds(world)
    masks: list[Mask] = []
    for obj in world.visible_objects(t):
        if obj.under_furniture:
            continue
        x0, y0, x1, y1 = _cell_block(obj, world, img)
        w, h = x1 - x0, y1 - y0
        pieces = 1
        if split_model.max_splits >= 2 and rng.random() < split_model.split_prob and w * h > 1:
            pieces = int(rng.integers(2, split_model.max_splits + 1))
        long_side = max(w, h)
        pieces = min(pieces, long_side)
        if pieces == 1:
            masks.append(Mask.from_rect_cells(f"{obj.id}/0", x0, y0, x1, y1, obj.id))
            continue
        cuts = np.sort(rng.choice(np.arange(1, long_side), size=pieces - 1, replace=False))
        edges = [0, *cuts.tolist(), long_side]
        for j in range(pieces):
            a, b = edges[j], edges[j + 1]
            if w >= h:
                m = Mask.from_rect_cells(f"{obj.id}/{j}", x0 + a, y0, x0 + b, y1, obj.id)
            else:
                m = Mask.from_rect_cells(f"{obj.id}/{j}", x0, y0 + a, x1, y0 + b, obj.id)
            masks.append(m)
    lo, hi = split_model.clutter_size
    W, H = int(img.width), int(img.height)
    for j in range(split_model.clutter_masks):
        cw = int(rng.integers(lo, hi + 1))
        ch = int(rng.integers(lo, hi + 1))
        cx = int(rng.integers(0, max(W - cw, 1)))
        cy = int(rng.integers(0, max(H - ch, 1)))
        ox, oy = int(img.min.x), int(img.min.y)
        masks.append(Mask.from_rect_cells(f"clutter/{j}", ox + cx, oy + cy,
                                          ox + min(cx + cw, W), oy + min(cy + ch, H)))
    return masks


def _clip(r: Rect, bounds: Rect) -> Rect | None:
    x0, y0 = max(r.min.x, bounds.min.x), max(r.min.y, bounds.min.y)
    x1, y1 = min(r.max.x, bounds.max.x), min(r.max.y, bounds.max.y)
    if x1 <= x0 or y1 <= y0:
        return None
    return Rect.from_bounds(x0, y0, x1, y1)


def _evaluate_region(region: Rect, query: str, world: World, params: OracleParams,
                     rng: np.random.Generator, t: float, specific: bool, fp_rate: float):
    out: list[Detection] = []
    area = region.area
    for obj in world.visible_objects(t):
        if obj.cls != query:
            continue
        inter = obj.footprint.intersection_area(region)
        if inter <= 0:
            continue
        # one uniform per instance keeps random streams aligned across crops
        u = rng.random()
        if obj.under_furniture:
            continue
        p = detection_probability(obj.saliency * inter / area, params, specific)
        if u < p:
            box = _clip(obj.footprint, region)
            out.append(Detection(box, query, p, TRUE_POSITIVE, obj.id))
    n_fp = int(rng.poisson(fp_rate)) if fp_rate > 0 else 0
    s = params.fp_box_size
    for _ in range(n_fp):
        cx = region.min.x + rng.random() * region.width
        cy = region.min.y + rng.random() * region.height
        box = _clip(Rect.from_bounds(cx - s / 2, cy - s / 2, cx + s / 2, cy + s / 2), region)
        if box is None:
            continue
        out.append(Detection(box, query, float(rng.random()), FALSE_POSITIVE, None))
    return out


def detect(crop: Rect, query: str, world: World, params: OracleParams,
           rng: np.random.Generator, t: float = 0.0, specific: bool = True) -> list[Detection]:
    """Run the detection oracle on an image-frame crop; boxes come back in meters."""
    region = _clip(rect_to_world(crop, world), world.floorplan)
    if region is None:
        return []
    return _evaluate_region(region, query, world, params, rng, t, specific, params.fp_rate_per_crop)


def close_up_region(location: Point2, world: World, size: float) -> Rect:
    h = size / 2
    fp = world.floorplan
    x0 = min(max(location.x - h, fp.min.x), fp.max.x - size) if size < fp.width else fp.min.x
    y0 = min(max(location.y - h, fp.min.y), fp.max.y - size) if size < fp.height else fp.min.y
    return Rect.from_bounds(x0, y0, min(x0 + size, fp.max.x), min(y0 + size, fp.max.y))


def close_up_confirm(location: Point2, query: str, world: World, params: OracleParams,
                     rng: np.random.Generator, t: float = 0.0) -> Detection | None:
    """Drone-camera check over a small footprint centered on ``location``.

    The returned detection is the best-scoring hit, a spurious box
    (rate ``fp_rate_per_crop * close_up_discount``), or None.
    """
    region = close_up_region(location, world, params.close_up_size)
    dets = _evaluate_region(region, query, world, params, rng, t, True,
                            params.fp_rate_per_crop * params.close_up_discount)
    if not dets:
        return None
    tps = [d for d in dets if d.truth == TRUE_POSITIVE]
    return max(tps, key=lambda d: d.score) if tps else dets[0]
