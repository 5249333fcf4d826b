"""Opacity masking and spatially weighted clustering.

The extractor keeps only high-opacity Gaussians, partitions them with k-means,
and inside every cluster retains the top-opacity fraction (1 - drop_rate),
never fewer than one point. The kept points, addressed by their original
indices, form the keypoint set used for registration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySelectionError, InsufficientPointsError, InvalidInputError
from .gaussian_model import bbox_diagonal


@dataclass(frozen=True)
class SwcParams:
    """Clustering configuration. ``kmeans_tol`` is relative to the bbox diagonal."""

    num_clusters: int = 5
    opacity_threshold: float = 0.8
    drop_rate: float = 0.5
    kmeans_max_iters: int = 100
    kmeans_tol: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.num_clusters < 1:
            raise InvalidInputError("num_clusters must be >= 1 (0 is a harness-level bypass, not a parameter)")
        if not 0.0 <= self.opacity_threshold <= 1.0:
            raise InvalidInputError("opacity_threshold must lie in [0, 1]")
        if not 0.0 <= self.drop_rate < 1.0:
            raise InvalidInputError("drop_rate must lie in [0, 1)")
        if self.kmeans_max_iters < 1 or self.kmeans_tol <= 0:
            raise InvalidInputError("kmeans_max_iters and kmeans_tol must be positive")


@dataclass(frozen=True)
class KeypointSet:
    """Selected positions plus the indices they came from."""

    positions: np.ndarray
    source_indices: np.ndarray

    def __post_init__(self):
        pos = np.ascontiguousarray(self.positions, dtype=np.float64)
        idx = np.ascontiguousarray(self.source_indices, dtype=np.int64)
        if pos.ndim != 2 or pos.shape[1] != 3 or idx.ndim != 1 or idx.shape[0] != pos.shape[0]:
            raise InvalidInputError("positions (K,3) and source_indices (K,) must align")
        if idx.size and np.unique(idx).size != idx.size:
            raise InvalidInputError("source_indices must be unique")
        pos.setflags(write=False)
        idx.setflags(write=False)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "source_indices", idx)

    @property
    def count(self) -> int:
        return self.positions.shape[0]


@dataclass(frozen=True)
class ClusterAssignment:
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    inertia_history: tuple[float, ...] | None = None


def opacity_mask(opacities: np.ndarray, threshold: float) -> np.ndarray:
    """Keep-mask for points whose opacity is at least ``threshold``."""
    opacities = np.asarray(opacities, dtype=np.float64)
    return opacities >= threshold


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    d = (np.sum(points * points, axis=1)[:, None]
         + np.sum(centroids * centroids, axis=1)[None, :]
         - 2.0 * points @ centroids.T)
    np.maximum(d, 0.0, out=d)
    return d


def _kmeanspp_init(points: np.ndarray, n_clusters: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centroids = np.empty((n_clusters, 3))
    centroids[0] = points[rng.integers(n)]
    closest = np.sum((points - centroids[0]) ** 2, axis=1)
    for i in range(1, n_clusters):
        total = closest.sum()
        if total <= 0.0:
            idx = rng.integers(n)
        else:
            idx = rng.choice(n, p=closest / total)
        centroids[i] = points[idx]
        np.minimum(closest, np.sum((points - centroids[i]) ** 2, axis=1), out=closest)
    return centroids


def kmeans(points: np.ndarray, n_clusters: int, max_iters: int = 100, tol: float = 1e-4,
           seed: int = 0, collect_history: bool = False) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding; deterministic for a fixed seed.

    ``tol`` is interpreted relative to the bounding-box diagonal; empty clusters
    are re-seeded to the point currently farthest from its assigned centroid.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != 3:
        raise InvalidInputError("points must have shape (N, 3)")
    n = points.shape[0]
    if n < n_clusters:
        raise InsufficientPointsError(f"{n} points cannot form {n_clusters} clusters")
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(points, n_clusters, rng)
    tol_abs = tol * bbox_diagonal(points)
    history: list[float] = []

    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iters):
        d = _sq_dists(points, centroids)
        labels = np.argmin(d, axis=1)
        if collect_history:
            history.append(float(d[np.arange(n), labels].sum()))
        counts = np.bincount(labels, minlength=n_clusters)
        empties = np.flatnonzero(counts == 0)
        if empties.size:
            # claim the worst-served points, one per empty cluster
            assigned = d[np.arange(n), labels].copy()
            for c in empties:
                far = int(np.argmax(assigned))
                centroids[c] = points[far]
                labels[far] = c
                assigned[far] = -1.0
            counts = np.bincount(labels, minlength=n_clusters)
        new_centroids = np.zeros((n_clusters, 3))
        np.add.at(new_centroids, labels, points)
        new_centroids /= np.maximum(counts, 1)[:, None]
        still_empty = counts == 0
        new_centroids[still_empty] = centroids[still_empty]
        movement = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if movement <= tol_abs:
            break

    d = _sq_dists(points, centroids)
    labels = np.argmin(d, axis=1)
    inertia = float(d[np.arange(n), labels].sum())
    if collect_history:
        history.append(inertia)
    return ClusterAssignment(labels=labels, centroids=centroids, inertia=inertia,
                             inertia_history=tuple(history) if collect_history else None)


def cluster_keep_count(cluster_size: int, drop_rate: float) -> int:
    """Points retained from one cluster: floor(size * (1 - drop_rate)), min 1."""
    return max(1, int(cluster_size * (1.0 - drop_rate)))


def swc(positions: np.ndarray, opacities: np.ndarray, mask: np.ndarray,
        params: SwcParams) -> KeypointSet:
    """Reduce masked-in points to a keypoint set via weighted clustering.

    Masked-in points are canonically pre-sorted (lexicographically by position)
    before clustering, so the result is invariant to input ordering whenever
    opacities are distinct; opacity ties break on ascending original index.
    """
    positions = np.asarray(positions, dtype=np.float64)
    opacities = np.asarray(opacities, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if not (positions.shape[0] == opacities.shape[0] == mask.shape[0]):
        raise InvalidInputError("positions, opacities and mask must have equal length")

    masked_idx = np.flatnonzero(mask)
    if masked_idx.size == 0:
        raise EmptySelectionError("opacity mask selected no points")
    if masked_idx.size < params.num_clusters:
        raise InsufficientPointsError(
            f"{masked_idx.size} masked-in points cannot fill {params.num_clusters} clusters")

    pos_m = positions[masked_idx]
    opa_m = opacities[masked_idx]
    order = np.lexsort((masked_idx, opa_m, pos_m[:, 2], pos_m[:, 1], pos_m[:, 0]))
    pos_s = pos_m[order]
    opa_s = opa_m[order]
    idx_s = masked_idx[order]

    assignment = kmeans(pos_s, params.num_clusters, max_iters=params.kmeans_max_iters,
                        tol=params.kmeans_tol, seed=params.seed)

    kept: list[np.ndarray] = []
    for c in range(params.num_clusters):
        members = np.flatnonzero(assignment.labels == c)
        if members.size == 0:
            continue
        n_keep = cluster_keep_count(members.size, params.drop_rate)
        rank = np.lexsort((idx_s[members], -opa_s[members]))
        kept.append(members[rank[:n_keep]])

    kept_rows = np.concatenate(kept)
    kept_src = np.sort(idx_s[kept_rows])
    return KeypointSet(positions=positions[kept_src], source_indices=kept_src)


def masked_keypoints(positions: np.ndarray, opacities: np.ndarray, mask: np.ndarray) -> KeypointSet:
    """Clustering bypass: every masked-in point becomes a keypoint."""
    positions = np.asarray(positions, dtype=np.float64)
    mask = np.asarray(mask, dtype=bool)
    if positions.shape[0] != mask.shape[0]:
        raise InvalidInputError("positions and mask must have equal length")
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise EmptySelectionError("opacity mask selected no points")
    return KeypointSet(positions=positions[idx], source_indices=idx)
