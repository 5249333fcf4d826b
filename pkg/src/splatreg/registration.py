"""Rigid registration of keypoint sets: descriptor RANSAC plus ICP refinement.

The coarse stage matches histogram descriptors between the two keypoint sets,
samples correspondence subsets, and keeps the hypothesis with the most inliers;
point-to-point ICP then polishes the pose. All randomness flows from explicit
seeds (one RNG stream per RANSAC iteration) so results are reproducible.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cascade import CascadeMode, SceneSnapshot, cascade_extract, cascade_extract_bypass
from .errors import (
    DegenerateConfigurationError,
    InsufficientPointsError,
    InvalidInputError,
    NoOverlapError,
    RegistrationFailureError,
)
from .gaussian_model import RigidTransform, bbox_diagonal
from .swc import KeypointSet, SwcParams

_NORMAL_NEIGHBORS = 15
_DESCRIPTOR_BINS = 11   # per angle feature; 3 features -> 33-dim descriptor


@dataclass(frozen=True)
class RansacParams:
    max_iterations: int = 100_000
    sample_size: int = 4
    inlier_distance: float | None = None      # None: 1.5 x median NN spacing of target
    descriptor_radius: float | None = None    # None: 5 x median NN spacing, per cloud
    edge_length_check: float = 0.9
    confidence: float = 0.999
    seed: int = 0

    def __post_init__(self):
        if self.sample_size < 3:
            raise InvalidInputError("sample_size must be >= 3")
        if self.inlier_distance is not None and self.inlier_distance <= 0:
            raise InvalidInputError("inlier_distance must be positive")
        if not 0.0 < self.edge_length_check <= 1.0:
            raise InvalidInputError("edge_length_check must lie in (0, 1]")
        if self.max_iterations < 1:
            raise InvalidInputError("max_iterations must be positive")


@dataclass(frozen=True)
class IcpParams:
    max_iterations: int = 50
    correspondence_distance: float | None = None  # None: 3 x median NN spacing of target
    convergence_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iterations < 1 or self.convergence_tol <= 0:
            raise InvalidInputError("icp parameters must be positive")
        if self.correspondence_distance is not None and self.correspondence_distance <= 0:
            raise InvalidInputError("correspondence_distance must be positive")


@dataclass(frozen=True)
class RansacResult:
    transform: RigidTransform
    inlier_count: int
    iterations: int


@dataclass(frozen=True)
class IcpResult:
    transform: RigidTransform
    rmse: float
    iterations: int
    rmse_history: tuple[float, ...]


@dataclass(frozen=True)
class RegistrationReport:
    """Outcome of one scene-pair registration, with per-stage wall times."""

    estimate: RigidTransform
    coarse_estimate: RigidTransform
    inlier_count: int
    final_rmse: float
    keypoints_a: int
    keypoints_b: int
    swc_time: float
    ransac_time: float
    icp_time: float
    total_time: float
    ransac_converged: bool


def median_nn_spacing(points: np.ndarray, tree: cKDTree | None = None) -> float:
    """Median positive nearest-neighbor distance; bbox-based fallback if degenerate."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 2:
        return 1.0
    tree = tree or cKDTree(points)
    k = min(4, n)
    d, _ = tree.query(points, k=k)
    positive = d[:, 1:][d[:, 1:] > 0.0]
    if positive.size:
        return float(np.median(positive))
    diag = bbox_diagonal(points)
    return diag / max(n, 1) ** (1.0 / 3.0) if diag > 0 else 1.0


# ---------------------------------------------------------------------------
# closed-form rigid fit
# ---------------------------------------------------------------------------

def estimate_rigid(P: np.ndarray, Q: np.ndarray) -> RigidTransform:
    """Least-squares proper rigid transform with T(P[i]) ~ Q[i] (SVD method)."""
    P = np.asarray(P, dtype=np.float64)
    Q = np.asarray(Q, dtype=np.float64)
    if P.shape != Q.shape or P.ndim != 2 or P.shape[1] != 3:
        raise InvalidInputError("P and Q must both have shape (N, 3)")
    if P.shape[0] < 3:
        raise InsufficientPointsError("rigid fit needs at least 3 correspondences")
    cP = P.mean(axis=0)
    cQ = Q.mean(axis=0)
    H = (P - cP).T @ (Q - cQ)
    U, S, Vt = np.linalg.svd(H)
    scale = max(float(S[0]), 1.0)
    if S[1] <= 1e-12 * scale:
        raise DegenerateConfigurationError("correspondences are collinear or coincident")
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return RigidTransform(R, cQ - R @ cP)


# ---------------------------------------------------------------------------
# normals + histogram descriptors
# ---------------------------------------------------------------------------

def estimate_normals(points: np.ndarray, k: int = _NORMAL_NEIGHBORS,
                     tree: cKDTree | None = None) -> np.ndarray:
    """Unit normals from local PCA, oriented toward the cloud centroid."""
    points = np.asarray(points, dtype=np.float64)
    n = points.shape[0]
    tree = tree or cKDTree(points)
    k = min(k + 1, n)
    _, idx = tree.query(points, k=k)
    neigh = points[idx]                      # (n, k, 3)
    centered = neigh - neigh.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered)
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]                  # smallest-eigenvalue direction
    toward = points.mean(axis=0) - points
    flip = np.einsum("ni,ni->n", normals, toward) < 0.0
    normals[flip] *= -1.0
    return normals


def _pair_angles(p_src, n_src, p_dst, n_dst, dist):
    """Darboux-frame angle triplet for point pairs (vectorized)."""
    u = n_src
    line = (p_dst - p_src) / dist[:, None]
    v = np.cross(line, u)
    v_norm = np.linalg.norm(v, axis=1)
    v_norm = np.where(v_norm < 1e-12, 1.0, v_norm)
    v = v / v_norm[:, None]
    w = np.cross(u, v)
    alpha = np.einsum("ni,ni->n", v, n_dst)
    phi = np.einsum("ni,ni->n", u, line)
    theta = np.arctan2(np.einsum("ni,ni->n", w, n_dst),
                       np.einsum("ni,ni->n", u, n_dst))
    return alpha, phi, theta


def _bin_triplet(alpha, phi, theta):
    b = _DESCRIPTOR_BINS
    ia = np.clip(((alpha + 1.0) * 0.5 * b).astype(np.int64), 0, b - 1)
    ip = np.clip(((phi + 1.0) * 0.5 * b).astype(np.int64), 0, b - 1)
    it = np.clip(((theta + np.pi) / (2.0 * np.pi) * b).astype(np.int64), 0, b - 1)
    return ia, ip + b, it + 2 * b


def fpfh_descriptors(points: np.ndarray, radius: float | None = None,
                     kd_index: cKDTree | None = None,
                     normals: np.ndarray | None = None) -> np.ndarray:
    """Fast point feature histograms (33 bins per point).

    Neighborhoods come from a radius search with a nearest-5 fallback;
    zero-distance pairs (duplicate points) are skipped. Neighbor histograms
    are blended with dimensionless weights radius/d so uniformly rescaling the
    cloud together with the radius leaves descriptors unchanged, and each
    final histogram is normalized to unit sum.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    n = points.shape[0]
    if n < 5:
        raise InsufficientPointsError("descriptors need at least 5 points")
    tree = kd_index or cKDTree(points)
    if radius is None:
        radius = 5.0 * median_nn_spacing(points, tree)
    if radius <= 0:
        raise InvalidInputError("descriptor radius must be positive")
    if normals is None:
        normals = estimate_normals(points, tree=tree)

    # hybrid search: k nearest capped at 32, filtered to the radius, with a
    # nearest-5 fallback; zero-distance pairs (duplicates, self) are skipped
    k = min(33, n)
    d_all, idx_all = tree.query(points, k=k)
    valid = (d_all > 0.0) & (d_all <= radius)
    starved = valid.sum(axis=1) < 5
    if np.any(starved):
        positive = d_all[starved] > 0.0
        nearest5 = positive & (np.cumsum(positive, axis=1) <= 5)
        valid[starved] |= nearest5
    src = np.repeat(np.arange(n, dtype=np.int64), valid.sum(axis=1))
    dst = idx_all[valid].astype(np.int64)
    dist = d_all[valid]

    # source/target roles follow the smaller normal-to-line angle
    line = (points[dst] - points[src]) / dist[:, None]
    a_src = np.abs(np.einsum("ni,ni->n", normals[src], line))
    a_dst = np.abs(np.einsum("ni,ni->n", normals[dst], line))
    swap = a_dst > a_src
    p_s = np.where(swap[:, None], points[dst], points[src])
    p_t = np.where(swap[:, None], points[src], points[dst])
    n_s = np.where(swap[:, None], normals[dst], normals[src])
    n_t = np.where(swap[:, None], normals[src], normals[dst])

    alpha, phi, theta = _pair_angles(p_s, n_s, p_t, n_t, dist)
    ia, ip, it = _bin_triplet(alpha, phi, theta)

    spfh = np.zeros((n, 3 * _DESCRIPTOR_BINS))
    rows = np.arange(src.size)
    for bins in (ia, ip, it):
        np.add.at(spfh, (src[rows], bins), 1.0)

    weights = radius / dist
    counts = np.bincount(src, minlength=n).astype(np.float64)
    blended = np.zeros_like(spfh)
    np.add.at(blended, src, weights[:, None] * spfh[dst])
    safe = np.maximum(counts, 1.0)[:, None]
    fpfh = spfh + blended / safe
    sums = fpfh.sum(axis=1, keepdims=True)
    np.divide(fpfh, sums, out=fpfh, where=sums > 0)
    return fpfh


def match_descriptors(desc_a: np.ndarray, desc_b: np.ndarray,
                      chunk: int = 2048) -> tuple[np.ndarray, np.ndarray]:
    """Mutual nearest-neighbor pairs in descriptor space (chunked brute force)."""
    a = np.ascontiguousarray(desc_a, dtype=np.float32)
    b = np.ascontiguousarray(desc_b, dtype=np.float32)
    nb = b.shape[0]
    b_sq = np.einsum("ij,ij->i", b, b)
    nn_ab = np.empty(a.shape[0], dtype=np.int64)
    best_ba = np.full(nb, np.inf, dtype=np.float32)
    nn_ba = np.zeros(nb, dtype=np.int64)
    for start in range(0, a.shape[0], chunk):
        block = a[start:start + chunk]
        d = np.einsum("ij,ij->i", block, block)[:, None] - 2.0 * block @ b.T + b_sq[None, :]
        nn_ab[start:start + chunk] = np.argmin(d, axis=1)
        col_min = d.min(axis=0)
        col_arg = np.argmin(d, axis=0) + start
        better = col_min < best_ba
        best_ba[better] = col_min[better]
        nn_ba[better] = col_arg[better]
    cand = np.arange(a.shape[0])
    mutual = nn_ba[nn_ab[cand]] == cand
    return cand[mutual], nn_ab[cand[mutual]]


# ---------------------------------------------------------------------------
# RANSAC + ICP
# ---------------------------------------------------------------------------

def _edge_compatible(pa: np.ndarray, pb: np.ndarray, ratio: float) -> bool:
    m = pa.shape[0]
    iu, ju = np.triu_indices(m, k=1)
    da = np.linalg.norm(pa[iu] - pa[ju], axis=1)
    db = np.linalg.norm(pb[iu] - pb[ju], axis=1)
    hi = np.maximum(da, db)
    if np.any(hi <= 0.0):
        return False
    return bool(np.all(np.minimum(da, db) / hi >= ratio))


def _count_inliers(transform: RigidTransform, pos_a: np.ndarray,
                   tree_b: cKDTree, threshold: float) -> int:
    d, _ = tree_b.query(transform.apply(pos_a))
    return int(np.count_nonzero(d <= threshold))


def ransac_global(A: KeypointSet, B: KeypointSet, params: RansacParams) -> RansacResult:
    """Coarse alignment from descriptor correspondences, scored by inlier count.

    Raises :class:`RegistrationFailureError` (carrying the best-effort
    transform) when no hypothesis reaches ``sample_size`` inliers.
    """
    pos_a, pos_b = A.positions, B.positions
    if pos_a.shape[0] < params.sample_size or pos_b.shape[0] < params.sample_size:
        raise InsufficientPointsError("keypoint sets smaller than the RANSAC sample size")
    tree_b = cKDTree(pos_b)
    inlier_distance = params.inlier_distance
    if inlier_distance is None:
        inlier_distance = 1.5 * median_nn_spacing(pos_b, tree_b)

    desc_a = fpfh_descriptors(pos_a, radius=params.descriptor_radius)
    desc_b = fpfh_descriptors(pos_b, radius=params.descriptor_radius)
    ia, ib = match_descriptors(desc_a, desc_b)
    if ia.size < params.sample_size:
        raise RegistrationFailureError(
            f"only {ia.size} descriptor correspondences, need {params.sample_size}",
            best_transform=RigidTransform.identity(), inlier_count=0)
    ma, mb = pos_a[ia], pos_b[ib]

    best_transform = RigidTransform.identity()
    best_count = 0
    best_iteration = -1
    n_required = params.max_iterations
    it = 0
    while it < params.max_iterations and it < n_required:
        rng = np.random.default_rng(np.random.SeedSequence([params.seed, it]))
        sel = rng.choice(ia.size, size=params.sample_size, replace=False)
        it += 1
        pa, pb = ma[sel], mb[sel]
        if not _edge_compatible(pa, pb, params.edge_length_check):
            continue
        try:
            candidate = estimate_rigid(pa, pb)
        except DegenerateConfigurationError:
            continue
        count = _count_inliers(candidate, pos_a, tree_b, inlier_distance)
        if count > best_count:
            best_transform, best_count, best_iteration = candidate, count, it - 1
            w = min(max(best_count / pos_a.shape[0], 1e-12), 1.0 - 1e-12)
            p_bad = 1.0 - w ** params.sample_size
            if p_bad <= 1e-12:
                n_required = it
            else:
                n_required = int(np.ceil(np.log(1.0 - params.confidence) / np.log(p_bad)))

    if best_count < params.sample_size:
        raise RegistrationFailureError(
            f"no hypothesis reached {params.sample_size} inliers "
            f"(best {best_count} at iteration {best_iteration})",
            best_transform=best_transform, inlier_count=best_count)

    # polish on the correspondences the best hypothesis explains
    resid = np.linalg.norm(best_transform.apply(ma) - mb, axis=1)
    support = resid <= inlier_distance
    if np.count_nonzero(support) >= 3:
        try:
            refit = estimate_rigid(ma[support], mb[support])
            refit_count = _count_inliers(refit, pos_a, tree_b, inlier_distance)
            if refit_count >= best_count:
                best_transform, best_count = refit, refit_count
        except DegenerateConfigurationError:
            pass
    return RansacResult(transform=best_transform, inlier_count=best_count, iterations=it)


def icp_refine(A: KeypointSet, B: KeypointSet, initial: RigidTransform,
               params: IcpParams) -> IcpResult:
    """Point-to-point ICP from ``initial``; each step refits A -> matched B."""
    pos_a, pos_b = A.positions, B.positions
    tree_b = cKDTree(pos_b)
    max_dist = params.correspondence_distance
    if max_dist is None:
        max_dist = 3.0 * median_nn_spacing(pos_b, tree_b)

    transform = initial
    prev_rmse = np.inf
    history: list[float] = []
    iterations = 0
    for i in range(params.max_iterations):
        moved = transform.apply(pos_a)
        d, j = tree_b.query(moved)
        matched = d <= max_dist
        if not np.any(matched):
            if i == 0:
                raise NoOverlapError("no correspondences within range at the initial transform")
            break
        src = pos_a[matched]
        dst = pos_b[j[matched]]
        try:
            transform = estimate_rigid(src, dst)
        except (DegenerateConfigurationError, InsufficientPointsError):
            if not history:
                history.append(float(np.sqrt(np.mean(d[matched] ** 2))))
            break
        resid = transform.apply(src) - dst
        rmse = float(np.sqrt(np.mean(np.einsum("ni,ni->n", resid, resid))))
        history.append(rmse)
        iterations = i + 1
        if rmse <= 1e-12 * max_dist:
            break
        if np.isfinite(prev_rmse) and abs(prev_rmse - rmse) <= params.convergence_tol * prev_rmse:
            break
        prev_rmse = rmse
    final = history[-1] if history else 0.0
    return IcpResult(transform=transform, rmse=final, iterations=iterations,
                     rmse_history=tuple(history))


# ---------------------------------------------------------------------------
# full pipeline
# ---------------------------------------------------------------------------

def _unique_matched_count(transform: RigidTransform, pos_a: np.ndarray,
                          pos_b: np.ndarray, threshold: float) -> int:
    d, j = cKDTree(pos_b).query(transform.apply(pos_a))
    return int(np.unique(j[d <= threshold]).size)


def register_scenes(scene_a: SceneSnapshot, scene_b: SceneSnapshot,
                    swc: SwcParams | None, ransac: RansacParams, icp: IcpParams,
                    mode: CascadeMode = CascadeMode.BOTH,
                    bypass_opacity_threshold: float = 0.8) -> RegistrationReport:
    """Extract keypoints from both scenes, align coarse-to-fine, report timings.

    ``swc=None`` is the clustering-bypass configuration: every opacity-masked
    point goes straight to registration. A failed coarse stage does not raise;
    the report simply carries ``ransac_converged=False`` and the best-effort
    pose (still refined by ICP when possible).
    """
    t_start = time.perf_counter()
    if swc is None:
        kp_a = cascade_extract_bypass(scene_a, bypass_opacity_threshold, mode)
        kp_b = cascade_extract_bypass(scene_b, bypass_opacity_threshold, mode)
    else:
        kp_a = cascade_extract(scene_a, swc, mode)
        kp_b = cascade_extract(scene_b, swc, mode)
    t_swc = time.perf_counter()

    converged = True
    try:
        coarse_transform = ransac_global(kp_a, kp_b, ransac).transform
    except RegistrationFailureError as err:
        converged = False
        coarse_transform = err.best_transform or RigidTransform.identity()
    t_ransac = time.perf_counter()

    refined = icp_refine(kp_a, kp_b, coarse_transform, icp)
    t_icp = time.perf_counter()

    inlier_distance = ransac.inlier_distance
    if inlier_distance is None:
        inlier_distance = 1.5 * median_nn_spacing(kp_b.positions)
    report_inliers = _unique_matched_count(refined.transform, kp_a.positions,
                                           kp_b.positions, inlier_distance)
    total = time.perf_counter() - t_start
    return RegistrationReport(
        estimate=refined.transform,
        coarse_estimate=coarse_transform,
        inlier_count=report_inliers,
        final_rmse=refined.rmse,
        keypoints_a=kp_a.count,
        keypoints_b=kp_b.count,
        swc_time=t_swc - t_start,
        ransac_time=t_ransac - t_swc,
        icp_time=t_icp - t_ransac,
        total_time=total,
        ransac_converged=converged,
    )
