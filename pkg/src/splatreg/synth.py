"""Synthetic Gaussian scene pairs with known ground-truth rigid transforms.

Generates desk-scale stand-ins for trained dynamic-splat scenes: a base cloud
with a chosen geometry and opacity distribution, a rigidly moved copy with
optional partial-overlap cropping and position noise, and analytic deformation
fields for both scenes.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial import cKDTree

from .cascade import SceneSnapshot, make_snapshot
from .errors import DegenerateSpecError, InvalidInputError
from .gaussian_model import (
    DeformationField,
    GaussianCloud,
    RigidTransform,
    bbox_diagonal,
    identity_field,
    rotation_from_rotvec,
    sinusoidal_field,
    transform_cloud,
)

GEOMETRIES = ("blob_mixture", "tissue_sheet", "tube")

_DEFAULT_BLOBS = (
    0.0, 0.0, 0.0, 0.25, 3.0,
    1.0, 0.2, 0.0, 0.18, 2.0,
    0.4, 0.8, 0.5, 0.22, 2.0,
)
_DEFAULT_SHEET = (1.0, 0.8, 0.08, 2.0, 1.5, 0.01)
_DEFAULT_TUBE = (0.25, 1.2, 0.01)


@dataclass(frozen=True)
class SceneSpec:
    """Declarative recipe for one synthetic Gaussian cloud.

    ``geometry_params`` layouts:
      blob_mixture: repeated (cx, cy, cz, sigma, weight) groups
      tissue_sheet: (size_x, size_y, wave_amplitude, waves_x, waves_y, thickness)
      tube:         (radius, length, radial_jitter)

    ``opacity_saliency_coupling`` in [0, 1] reassigns the sampled opacities by
    rank so that locally dense (structure) points tend to receive the higher
    values, the way trained splats give floaters low opacity; 0 keeps the
    draws independent of position.
    """

    num_gaussians: int
    geometry: str = "blob_mixture"
    geometry_params: tuple[float, ...] = ()
    opacity_distribution: str = "beta"
    opacity_params: tuple[float, float] = (5.0, 2.0)
    opacity_saliency_coupling: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.num_gaussians < 1:
            raise InvalidInputError("num_gaussians must be >= 1")
        if self.geometry not in GEOMETRIES:
            raise InvalidInputError(f"unknown geometry {self.geometry!r}")
        if self.opacity_distribution not in ("uniform", "beta"):
            raise InvalidInputError(f"unknown opacity distribution {self.opacity_distribution!r}")
        if self.opacity_distribution == "beta" and min(self.opacity_params) <= 0:
            raise InvalidInputError("beta parameters must be positive")
        if not 0.0 <= self.opacity_saliency_coupling <= 1.0:
            raise InvalidInputError("opacity_saliency_coupling must lie in [0, 1]")
        object.__setattr__(self, "geometry_params", tuple(float(v) for v in self.geometry_params))


@dataclass(frozen=True)
class PairSpec:
    """Recipe for a registered scene pair; ``seed`` drives cropping and noise."""

    base: SceneSpec
    ground_truth: RigidTransform
    overlap_fraction: float = 1.0
    noise_sigma: float = 0.0
    deformation_a: DeformationField = None  # type: ignore[assignment]
    deformation_b: DeformationField = None  # type: ignore[assignment]
    t_a: float = 0.5
    t_b: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.overlap_fraction <= 1.0:
            raise InvalidInputError("overlap_fraction must lie in (0, 1]")
        if self.noise_sigma < 0.0:
            raise InvalidInputError("noise_sigma must be non-negative")
        if self.deformation_a is None:
            object.__setattr__(self, "deformation_a", identity_field())
        if self.deformation_b is None:
            object.__setattr__(self, "deformation_b", identity_field())


def _blob_positions(n: int, params: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    groups = params.reshape(-1, 5)
    weights = groups[:, 4]
    if np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidInputError("blob weights must be non-negative with positive sum")
    counts = rng.multinomial(n, weights / weights.sum())
    parts = []
    for (cx, cy, cz, sigma, _), m in zip(groups, counts):
        if m == 0:
            continue
        center = np.array([cx, cy, cz])
        parts.append(center + rng.normal(scale=max(sigma, 0.0), size=(m, 3)) if sigma > 0
                     else np.tile(center, (m, 1)))
    return np.vstack(parts)


def _sheet_positions(n: int, params: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    sx, sy, amp, wx, wy, thickness = params
    u = rng.uniform(0.0, sx, n)
    v = rng.uniform(0.0, sy, n)
    z = amp * np.sin(2 * np.pi * wx * u / sx) * np.sin(2 * np.pi * wy * v / sy)
    if thickness > 0:
        z = z + rng.normal(scale=thickness, size=n)
    return np.column_stack([u, v, z])


def _tube_positions(n: int, params: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    radius, length, jitter = params
    theta = rng.uniform(0.0, 2 * np.pi, n)
    z = rng.uniform(0.0, length, n)
    r = radius + (rng.normal(scale=jitter, size=n) if jitter > 0 else 0.0)
    return np.column_stack([r * np.cos(theta), r * np.sin(theta), z])


def _couple_opacity_to_density(positions: np.ndarray, opacities: np.ndarray,
                               coupling: float, rng: np.random.Generator) -> np.ndarray:
    """Reassign sampled opacities so denser neighborhoods rank higher.

    The marginal distribution is untouched: the same values are handed out in
    a different order. ``coupling`` blends the density rank with a random rank.
    """
    n = positions.shape[0]
    if n < 2:
        return opacities
    k = min(9, n)
    d, _ = cKDTree(positions).query(positions, k=k)
    density_score = -d[:, -1]                      # closer k-th neighbor = denser
    density_rank = np.argsort(np.argsort(density_score, kind="stable"), kind="stable")
    noise_rank = rng.permutation(n)
    blended = coupling * density_rank + (1.0 - coupling) * noise_rank
    order = np.argsort(blended, kind="stable")
    out = np.empty(n)
    out[order] = np.sort(opacities)
    return out


def generate_cloud(spec: SceneSpec) -> GaussianCloud:
    """Deterministic synthetic cloud for a scene spec."""
    rng = np.random.default_rng(spec.seed)
    defaults = {"blob_mixture": _DEFAULT_BLOBS, "tissue_sheet": _DEFAULT_SHEET,
                "tube": _DEFAULT_TUBE}
    params = np.asarray(spec.geometry_params or defaults[spec.geometry], dtype=np.float64)
    if spec.geometry == "blob_mixture":
        if params.size % 5 != 0 or params.size == 0:
            raise InvalidInputError("blob_mixture expects (cx, cy, cz, sigma, weight) groups")
        positions = _blob_positions(spec.num_gaussians, params, rng)
    elif spec.geometry == "tissue_sheet":
        if params.size != 6:
            raise InvalidInputError("tissue_sheet expects 6 parameters")
        positions = _sheet_positions(spec.num_gaussians, params, rng)
    else:
        if params.size != 3:
            raise InvalidInputError("tube expects 3 parameters")
        positions = _tube_positions(spec.num_gaussians, params, rng)

    if spec.opacity_distribution == "uniform":
        opacities = rng.uniform(0.0, 1.0, spec.num_gaussians)
    else:
        a, b = spec.opacity_params
        opacities = rng.beta(a, b, spec.num_gaussians)
    if spec.opacity_saliency_coupling > 0.0:
        opacities = _couple_opacity_to_density(positions, opacities,
                                               spec.opacity_saliency_coupling, rng)
    return GaussianCloud(positions=positions, opacities=opacities)


def random_rigid_transform(rng: np.random.Generator, max_rotation_deg: float,
                           max_translation: float) -> RigidTransform:
    """Uniform random axis, rotation angle up to the bound, translation up to the bound."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = np.radians(rng.uniform(0.0, max_rotation_deg))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    magnitude = rng.uniform(0.0, max_translation)
    return RigidTransform(rotation_from_rotvec(axis * angle), magnitude * direction)


def make_pair(spec: PairSpec) -> tuple[SceneSnapshot, SceneSnapshot, RigidTransform]:
    """Scene pair related by the spec's exact ground-truth transform.

    Scene A is the base cloud; scene B is the transformed base, cropped to the
    overlap fraction by a random half-space sweep, with Gaussian position noise
    of ``noise_sigma`` times the base bounding-box diagonal. Each scene then
    gets its own deformation snapshot.
    """
    base = generate_cloud(spec.base)
    diag = bbox_diagonal(base.positions)
    rng = np.random.default_rng(spec.seed)

    cloud_b = transform_cloud(base, spec.ground_truth)
    if spec.overlap_fraction < 1.0:
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        proj = cloud_b.positions @ direction
        threshold = np.quantile(proj, spec.overlap_fraction)
        keep = np.flatnonzero(proj <= threshold)
        if keep.size == 0:
            raise DegenerateSpecError("overlap crop removed every point")
        cloud_b = cloud_b.take(keep)
    if spec.noise_sigma > 0.0:
        noisy = cloud_b.positions + rng.normal(scale=spec.noise_sigma * diag,
                                               size=cloud_b.positions.shape)
        cloud_b = replace(cloud_b, positions=noisy)

    snap_a = make_snapshot(base, spec.deformation_a, spec.t_a)
    snap_b = make_snapshot(cloud_b, spec.deformation_b, spec.t_b)
    return snap_a, snap_b, spec.ground_truth


def random_sinusoidal_field(rng: np.random.Generator, max_displacement: float,
                            opacity_delta_scale: float = 0.0,
                            spatial_scale: float = 1.0) -> DeformationField:
    """Sinusoidal field with random phases whose peak displacement is bounded.

    ``spatial_scale`` sets the wavelength of the spatial variation (roughly the
    cloud diameter); the per-axis amplitude vector has 2-norm equal to
    ``max_displacement``.
    """
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    amplitude = max_displacement * direction
    time_freq = rng.uniform(0.5, 1.5, size=3)
    spatial_freq = rng.uniform(0.5, 1.5, size=3) * (2 * np.pi / max(spatial_scale, 1e-12))
    phase = rng.uniform(0.0, 2 * np.pi, size=3)
    return sinusoidal_field(amplitude, time_freq, spatial_freq, phase,
                            opacity_delta_scale=opacity_delta_scale)
