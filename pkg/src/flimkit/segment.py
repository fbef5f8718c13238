"""Unsupervised segmentation of FLIM images by clustering in phasor space.

Pixels with similar decays collapse to nearby (g, s) points, so K-means
on the phasor plane separates fluorophore populations without needing
fitted lifetimes.  Output labels are canonical: clusters are renumbered
by ascending centroid g, so identical inputs give identical label maps
no matter how the iteration happened to number them internally.
"""

from dataclasses import dataclass

import numpy as np

from .phasor import PhasorImage

KMEANS_MAX_ITER = 300


@dataclass(frozen=True)
class SegmentationResult:
    """Cluster labels per pixel (-1 for invalid), centroids, and fit diagnostics."""

    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    iterations: int
    inertia_history: tuple[float, ...] = ()

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        centroids = np.asarray(self.centroids, dtype=np.float64)
        if centroids.ndim != 2 or centroids.shape[1] != 2:
            raise ValueError("centroids must be (K, 2)")
        k = centroids.shape[0]
        if labels.max(initial=-1) >= k or labels.min(initial=0) < -1:
            raise ValueError("labels must lie in [-1, K)")
        if not np.isfinite(centroids).all():
            raise ValueError("centroids must be finite")
        if self.inertia < 0:
            raise ValueError("inertia must be nonnegative")
        labels.setflags(write=False)
        centroids.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "centroids", centroids)

    @property
    def n_clusters(self) -> int:
        return self.centroids.shape[0]


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    # broadcasting instead of a matmul keeps the reduction order fixed
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _kmeans_pp_init(
    points: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((k, 2))
    centroids[0] = points[rng.integers(n)]
    closest = np.einsum("nd,nd->n", points - centroids[0], points - centroids[0])
    for j in range(1, k):
        total = closest.sum()
        if total <= 0:
            # all remaining points coincide with a centroid; pick any
            centroids[j] = points[rng.integers(n)]
            continue
        r = rng.random() * total
        idx = int(np.searchsorted(np.cumsum(closest), r, side="right"))
        idx = min(idx, n - 1)
        centroids[j] = points[idx]
        d = np.einsum("nd,nd->n", points - centroids[j], points - centroids[j])
        closest = np.minimum(closest, d)
    return centroids


def kmeans_phasor(
    img: PhasorImage, k: int, seed: int, max_iter: int = KMEANS_MAX_ITER
) -> SegmentationResult:
    """Lloyd K-means on valid (g, s) points with k-means++ seeding.

    Deterministic for fixed (img, k, seed).  Empty clusters are reseeded
    from the point farthest from its assigned centroid.  Inertia is
    non-increasing across iterations.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    points = img.points()
    n = points.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} valid pixels, got {n}")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(points, k, rng)

    labels = np.full(n, -1, dtype=np.int64)
    history: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        d2 = _squared_distances(points, centroids)
        new_labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), new_labels].sum())
        if history and inertia > history[-1] + 1e-9:
            raise AssertionError("k-means inertia increased")
        history.append(inertia)
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            sel = labels == j
            if sel.any():
                centroids[j] = points[sel].mean(axis=0)
            else:
                worst = int(np.argmax(d2[np.arange(n), labels]))
                centroids[j] = points[worst]
                labels[worst] = j

    # canonical renumbering by ascending centroid (g, then s)
    order = np.lexsort((centroids[:, 1], centroids[:, 0]))
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    centroids = centroids[order]
    labels = remap[labels]

    label_map = np.full((img.height, img.width), -1, dtype=np.int64)
    label_map[img.valid] = labels
    return SegmentationResult(
        labels=label_map,
        centroids=centroids,
        inertia=history[-1],
        iterations=iterations,
        inertia_history=tuple(history),
    )


def labels_to_image(
    result: SegmentationResult, palette: list[tuple[int, int, int]]
) -> np.ndarray:
    """(H, W, 3) uint8 color map; invalid pixels are black."""
    if len(palette) < result.n_clusters:
        raise ValueError(
            f"palette has {len(palette)} colors, need {result.n_clusters}"
        )
    colors = np.asarray(palette, dtype=np.uint8)
    out = np.zeros(result.labels.shape + (3,), dtype=np.uint8)
    ok = result.labels >= 0
    out[ok] = colors[result.labels[ok]]
    return out


DEFAULT_PALETTE = [
    (230, 25, 75),
    (60, 180, 75),
    (0, 130, 200),
    (255, 225, 25),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
]
