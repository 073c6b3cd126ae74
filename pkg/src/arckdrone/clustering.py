"""K-means, agglomerative clustering and aspect-ratio-constrained clustering
of segmentation masks (ARCK-Means), plus crop extraction.

ARCK-Means is run as a constrained agglomerative merge: clusters start as
single masks and the closest pair (under the configured linkage) is merged,
but only if the merged axis-aligned crop keeps its aspect ratio inside
``[ar_min, ar_max]``.  Merging stops at ``k`` clusters or when no feasible
pair is left, so the result can hold more than ``k`` clusters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import EmptyInput, Mask, Rect, aabb, aspect_ratio, centroid, pad_to_aspect

LINKAGES = ("ward", "average", "single")
BASES = ("hierarchical", "kmeans")


class KTooLarge(ValueError):
    pass


@dataclass(frozen=True)
class ClusteringConfig:
    k: int = 5
    ar_min: float = 0.67
    ar_max: float = 1.5
    linkage: str = "ward"
    base: str = "hierarchical"
    seed: int = 0
    max_iters: int = 100

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        # ar_min == 0 with ar_max == inf switches the constraint off
        if not (0 <= self.ar_min <= self.ar_max):
            raise ValueError("need 0 <= ar_min <= ar_max")
        if self.linkage not in LINKAGES:
            raise ValueError(f"unknown linkage {self.linkage!r}")
        if self.base not in BASES:
            raise ValueError(f"unknown base {self.base!r}")


@dataclass(frozen=True)
class ClusterFlags:
    padded: bool = False
    singleton: bool = False
    constraint_violated: bool = False


@dataclass(frozen=True)
class ClusterAssignment:
    labels: dict[str, int]
    crops: list[Rect]
    flags: list[ClusterFlags]
    natural_crops: list[Rect] = field(default_factory=list)
    k_requested: int = 0

    @property
    def n_clusters(self) -> int:
        return len(self.crops)

    @property
    def exceeds_k(self) -> bool:
        return self.n_clusters > self.k_requested

    def members(self, cluster: int) -> list[str]:
        return [mid for mid, c in self.labels.items() if c == cluster]

    def to_dict(self) -> dict:
        return {
            "k_requested": self.k_requested,
            "labels": dict(sorted(self.labels.items())),
            "crops": [list(r.bounds()) for r in self.crops],
            "natural_crops": [list(r.bounds()) for r in self.natural_crops],
            "flags": [
                {"padded": f.padded, "singleton": f.singleton,
                 "constraint_violated": f.constraint_violated}
                for f in self.flags
            ],
        }


def sse(points, labels) -> float:
    """Sum of squared distances of points to their cluster means."""
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    labels = np.asarray(labels)
    total = 0.0
    for c in np.unique(labels):
        P = X[labels == c]
        total += float(((P - P.mean(axis=0)) ** 2).sum())
    return total


def _as_points(points) -> np.ndarray:
    X = np.asarray(points, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(X)):
        raise ValueError("points must be finite")
    return X


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    while len(chosen) < k:
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # remaining points coincide with centers
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def kmeans(points, k: int, seed: int = 0, max_iters: int = 100) -> np.ndarray:
    """Lloyd's algorithm from a seeded k-means++ start.

    Nearest-center ties go to the lowest center index; an empty cluster
    keeps its previous center.
    """
    X = _as_points(points)
    n = len(X)
    if k > n:
        raise KTooLarge(f"k={k} > n={n}")
    if k < 1:
        raise ValueError("k must be >= 1")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp(X, k, rng)
    labels = None
    for _ in range(max(1, max_iters)):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new = d2.argmin(axis=1)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(k):
            sel = labels == c
            if sel.any():
                centers[c] = X[sel].mean(axis=0)
    return labels


def best_kmeans(points, k: int, seeds: Sequence[int], max_iters: int = 100) -> np.ndarray:
    """Lowest-SSE labelling over several seeds (first seed wins ties)."""
    best, best_cost = None, math.inf
    for s in seeds:
        lab = kmeans(points, k, seed=s, max_iters=max_iters)
        cost = sse(points, lab)
        if cost < best_cost:
            best, best_cost = lab, cost
    return best


def _linkage_row(linkage, i, active, cent, counts, D, ni_old, nj_old, j):
    """Distances from freshly merged slot ``i`` (old i + old j) to the others."""
    if linkage == "ward":
        n = counts[i]
        others = counts[active]
        diff = cent[active] - cent[i]
        return (n * others / (n + others)) * (diff ** 2).sum(axis=1)
    if linkage == "average":
        return (ni_old * D[i, active] + nj_old * D[j, active]) / (ni_old + nj_old)
    return np.minimum(D[i, active], D[j, active])


def _agglomerate(X, k, linkage, boxes=None, ar_min=0.0, ar_max=math.inf):
    """Greedy closest-pair merging.

    Slot ``s`` always holds the cluster whose lowest member is ``s``, so a
    row-major argmin over the distance matrix already breaks ties by the
    lowest member indices of the pair.  ``boxes`` (n, 4) enables the
    aspect-ratio feasibility test on merged crops.
    """
    n = len(X)
    counts = np.ones(n)
    cent = X.copy()
    members = [[i] for i in range(n)]
    diff = X[:, None, :] - X[None, :, :]
    if linkage == "ward":
        D = 0.5 * (diff ** 2).sum(axis=2)
    else:
        D = np.sqrt((diff ** 2).sum(axis=2))
    np.fill_diagonal(D, np.inf)
    alive = np.ones(n, dtype=bool)

    constrained = boxes is not None and (ar_min > 0 or math.isfinite(ar_max))
    if constrained:
        B = np.asarray(boxes, dtype=float).copy()
        feas = _pair_feasible(B, B, ar_min, ar_max)
        np.fill_diagonal(feas, False)
    n_alive = n
    while n_alive > k:
        M = D if not constrained else np.where(feas, D, np.inf)
        flat = int(np.argmin(M))
        i, j = divmod(flat, n)
        if not math.isfinite(M[i, j]):
            break
        if j < i:
            i, j = j, i
        ni_old, nj_old = counts[i], counts[j]
        members[i].extend(members[j])
        members[j] = []
        counts[i] = ni_old + nj_old
        cent[i] = (ni_old * cent[i] + nj_old * cent[j]) / counts[i]
        alive[j] = False
        n_alive -= 1
        others = alive.copy()
        others[i] = False
        row = _linkage_row(linkage, i, others, cent, counts, D, ni_old, nj_old, j)
        D[i, others] = row
        D[others, i] = row
        D[j, :] = np.inf
        D[:, j] = np.inf
        if constrained:
            B[i] = (min(B[i, 0], B[j, 0]), min(B[i, 1], B[j, 1]),
                    max(B[i, 2], B[j, 2]), max(B[i, 3], B[j, 3]))
            f = _pair_feasible(B[i:i + 1], B, ar_min, ar_max)[0] & alive
            f[i] = False
            feas[i, :] = f
            feas[:, i] = f
            feas[j, :] = False
            feas[:, j] = False
    return [sorted(m) for m in members if m]


def _pair_feasible(A, B, ar_min, ar_max):
    x0 = np.minimum(A[:, None, 0], B[None, :, 0])
    y0 = np.minimum(A[:, None, 1], B[None, :, 1])
    x1 = np.maximum(A[:, None, 2], B[None, :, 2])
    y1 = np.maximum(A[:, None, 3], B[None, :, 3])
    ar = (x1 - x0) / (y1 - y0)
    return (ar >= ar_min) & (ar <= ar_max)


def _labels_from_groups(groups, n) -> np.ndarray:
    labels = np.empty(n, dtype=int)
    for c, g in enumerate(sorted(groups, key=min)):
        labels[g] = c
    return labels


def hierarchical(points, k: int, linkage: str = "ward") -> np.ndarray:
    """Agglomerative clustering down to ``k`` clusters.

    Cluster ``c`` is the one holding the ``c``-th smallest lowest member
    index.
    """
    X = _as_points(points)
    if k > len(X):
        raise KTooLarge(f"k={k} > n={len(X)}")
    if linkage not in LINKAGES:
        raise ValueError(f"unknown linkage {linkage!r}")
    return _labels_from_groups(_agglomerate(X, k, linkage), len(X))


def _crop_ok(box, ar_min, ar_max) -> bool:
    return ar_min <= (box[2] - box[0]) / (box[3] - box[1]) <= ar_max


def _arck_kmeans_groups(X, boxes, cfg: ClusteringConfig):
    """K-means with aspect-checked assignment.

    Masks are placed nearest-first; each goes to the closest center whose
    crop stays feasible with it added, and opens a new cluster when no
    center accepts it.
    """
    n = len(X)
    rng = np.random.default_rng(cfg.seed)
    centers = _kmeanspp(X, min(cfg.k, n), rng)
    prev = None
    groups: list[list[int]] = []
    for _ in range(max(1, cfg.max_iters)):
        d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        order = sorted(range(n), key=lambda i: (d2[i].min(), i))
        gboxes: list = [None] * len(centers)
        groups = [[] for _ in centers]
        for i in order:
            placed = False
            for c in sorted(range(len(centers)), key=lambda c: (d2[i, c], c)):
                gb = gboxes[c]
                merged = boxes[i] if gb is None else (
                    min(gb[0], boxes[i][0]), min(gb[1], boxes[i][1]),
                    max(gb[2], boxes[i][2]), max(gb[3], boxes[i][3]))
                if gb is None or _crop_ok(merged, cfg.ar_min, cfg.ar_max):
                    groups[c].append(i)
                    gboxes[c] = merged
                    placed = True
                    break
            if not placed:
                groups.append([i])
                gboxes.append(boxes[i])
        groups = [sorted(g) for g in groups if g]
        key = sorted(tuple(g) for g in groups)
        if key == prev:
            break
        prev = key
        centers = np.array([X[g].mean(axis=0) for g in groups])
    return groups


def arck_means(masks: Sequence[Mask], cfg: ClusteringConfig, bounds: Rect | None = None) -> ClusterAssignment:
    """Cluster mask centroids under the crop aspect-ratio constraint.

    Singleton clusters whose own crop is out of range are padded with
    ``pad_to_aspect`` (inside ``bounds`` when given) and flagged.
    """
    masks = list(masks)
    if not masks:
        raise EmptyInput("arck_means needs at least one mask")
    X = np.array([centroid(m) for m in masks], dtype=float)
    boxes = np.array([m.bbox.bounds() for m in masks], dtype=float)
    if cfg.base == "hierarchical":
        groups = _agglomerate(X, cfg.k, cfg.linkage, boxes, cfg.ar_min, cfg.ar_max)
    else:
        groups = _arck_kmeans_groups(X, boxes, cfg)
    groups = sorted(groups, key=min)

    labels: dict[str, int] = {}
    crops, natural, flags = [], [], []
    for c, g in enumerate(groups):
        for i in g:
            labels[masks[i].id] = c
        box = aabb(masks[i] for i in g)
        natural.append(box)
        crop, fl = _finish_crop(box, len(g) == 1, cfg, bounds)
        crops.append(crop)
        flags.append(fl)
    return ClusterAssignment(labels, crops, flags, natural, cfg.k)


def _finish_crop(box: Rect, singleton: bool, cfg: ClusteringConfig, bounds):
    ok = cfg.ar_min <= aspect_ratio(box) <= cfg.ar_max
    if ok:
        return box, ClusterFlags(singleton=singleton)
    padded = pad_to_aspect(box, max(cfg.ar_min, 1e-300), cfg.ar_max, bounds)
    return padded.rect, ClusterFlags(
        padded=True, singleton=singleton, constraint_violated=padded.bounds_limited)


def emit_crops_flagged(assignment: ClusterAssignment, bounds: Rect, cfg: ClusteringConfig):
    """Crops in cluster order plus a bounds-limited flag per crop."""
    rects, limited = [], []
    for box in assignment.natural_crops or assignment.crops:
        if cfg.ar_min <= aspect_ratio(box) <= cfg.ar_max:
            rects.append(box)
            limited.append(False)
        else:
            p = pad_to_aspect(box, max(cfg.ar_min, 1e-300), cfg.ar_max, bounds)
            rects.append(p.rect)
            limited.append(p.bounds_limited)
    return rects, limited


def emit_crops(assignment: ClusterAssignment, bounds: Rect, cfg: ClusteringConfig) -> list[Rect]:
    return emit_crops_flagged(assignment, bounds, cfg)[0]
