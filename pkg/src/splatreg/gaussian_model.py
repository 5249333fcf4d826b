"""Gaussian scene representation: clouds, analytic deformation fields, rigid transforms.

A scene is a set of anisotropic 3D Gaussians; registration only consumes their
mean positions and opacities, but the other trained-splat attributes (log-scales,
rotations, SH coefficients) are carried so file round-trips stay lossless.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import TypeAlias

import numpy as np
from numpy.typing import NDArray

from .errors import DomainError, InvalidInputError, SingularMatrixError

Vec3: TypeAlias = NDArray[np.float64]   # shape (3,)
Mat3: TypeAlias = NDArray[np.float64]   # shape (3, 3)
Points: TypeAlias = NDArray[np.float64]  # shape (N, 3)

_QUAT_UNIT_TOL = 1e-6
_ROT_ORTHO_TOL = 1e-9


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.setflags(write=False)
    return a


# ---------------------------------------------------------------------------
# quaternion helpers (scalar-first convention: q = (w, x, y, z))
# ---------------------------------------------------------------------------

def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a unit quaternion. Accepts (4,) or (N, 4)."""
    q = np.asarray(q, dtype=np.float64)
    single = q.ndim == 1
    q = np.atleast_2d(q)
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    R = np.empty((q.shape[0], 3, 3))
    R[:, 0, 0] = 1 - 2 * (y * y + z * z)
    R[:, 0, 1] = 2 * (x * y - w * z)
    R[:, 0, 2] = 2 * (x * z + w * y)
    R[:, 1, 0] = 2 * (x * y + w * z)
    R[:, 1, 1] = 1 - 2 * (x * x + z * z)
    R[:, 1, 2] = 2 * (y * z - w * x)
    R[:, 2, 0] = 2 * (x * z - w * y)
    R[:, 2, 1] = 2 * (y * z + w * x)
    R[:, 2, 2] = 1 - 2 * (x * x + y * y)
    return R[0] if single else R


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Unit quaternion (w >= 0) of a rotation matrix, via Shepperd's method."""
    R = np.asarray(R, dtype=np.float64)
    t = np.trace(R)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2
        q = np.array([0.25 * s,
                      (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s,
                      (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(R[i, i] - R[j, j] - R[k, k] + 1.0, 0.0)) * 2
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_multiply(q1: np.ndarray, q2: np.ndarray) -> np.ndarray:
    """Hamilton product q1 * q2; broadcasts over leading dimensions."""
    q1 = np.asarray(q1, dtype=np.float64)
    q2 = np.asarray(q2, dtype=np.float64)
    w1, x1, y1, z1 = np.moveaxis(np.atleast_2d(q1), -1, 0)
    w2, x2, y2, z2 = np.moveaxis(np.atleast_2d(q2), -1, 0)
    out = np.stack([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ], axis=-1)
    if q1.ndim == 1 and q2.ndim == 1:
        return out[0]
    return out


def rotation_from_rotvec(w: np.ndarray) -> np.ndarray:
    """Rodrigues' formula: axis-angle vector to rotation matrix."""
    w = np.asarray(w, dtype=np.float64).reshape(3)
    theta = float(np.linalg.norm(w))
    if theta < 1e-14:
        return np.eye(3)
    k = w / theta
    K = np.array([[0.0, -k[2], k[1]],
                  [k[2], 0.0, -k[0]],
                  [-k[1], k[0], 0.0]])
    return np.eye(3) + np.sin(theta) * K + (1.0 - np.cos(theta)) * (K @ K)


def bbox_diagonal(points: np.ndarray) -> float:
    """Length of the axis-aligned bounding-box diagonal (0 for <2 points)."""
    points = np.asarray(points, dtype=np.float64)
    if points.size == 0:
        return 0.0
    return float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))


# ---------------------------------------------------------------------------
# rigid transform
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RigidTransform:
    """Proper rigid motion p -> R p + t."""

    rotation: Mat3
    translation: Vec3

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if R.shape != (3, 3) or not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise InvalidInputError("rigid transform requires a finite 3x3 rotation and 3-vector")
        if np.max(np.abs(R.T @ R - np.eye(3))) >= _ROT_ORTHO_TOL:
            raise InvalidInputError("rotation matrix is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) >= _ROT_ORTHO_TOL:
            raise InvalidInputError("rotation matrix must have determinant +1")
        object.__setattr__(self, "rotation", _freeze(R))
        object.__setattr__(self, "translation", _freeze(t))

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "RigidTransform":
        M = np.asarray(M, dtype=np.float64)
        if M.shape != (4, 4):
            raise InvalidInputError("homogeneous transform must be 4x4")
        return cls(M[:3, :3], M[:3, 3])

    def matrix(self) -> np.ndarray:
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T + self.translation

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """Transform equal to applying ``other`` first, then ``self``."""
        return RigidTransform(self.rotation @ other.rotation,
                              self.rotation @ other.translation + self.translation)

    def inverse(self) -> "RigidTransform":
        return RigidTransform(self.rotation.T, -(self.rotation.T @ self.translation))


# ---------------------------------------------------------------------------
# Gaussian cloud
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianCloud:
    """Immutable set of Gaussians: positions, opacities, optional splat attributes.

    ``scales`` are kept in log-space as trained-splat files store them;
    ``rotations`` are unit quaternions (w, x, y, z); ``sh_coeffs`` is an
    arbitrary-width coefficient block. Only positions and opacities take part
    in registration.
    """

    positions: Points
    opacities: NDArray[np.float64]
    scales: Points | None = None
    rotations: NDArray[np.float64] | None = None
    sh_coeffs: NDArray[np.float64] | None = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=np.float64)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise InvalidInputError("positions must have shape (N, 3)")
        if not np.all(np.isfinite(pos)):
            raise InvalidInputError("positions must be finite")
        n = pos.shape[0]
        opa = np.asarray(self.opacities, dtype=np.float64).reshape(-1)
        if opa.shape[0] != n:
            raise InvalidInputError("opacities length must match positions")
        if opa.size and not (np.all(opa >= 0.0) and np.all(opa <= 1.0)):
            raise InvalidInputError("opacities must lie in [0, 1]")
        object.__setattr__(self, "positions", _freeze(pos))
        object.__setattr__(self, "opacities", _freeze(opa))
        for name, width in (("scales", 3), ("rotations", 4)):
            a = getattr(self, name)
            if a is None:
                continue
            a = np.asarray(a, dtype=np.float64)
            if a.shape != (n, width):
                raise InvalidInputError(f"{name} must have shape (N, {width})")
            if not np.all(np.isfinite(a)):
                raise InvalidInputError(f"{name} must be finite")
            object.__setattr__(self, name, _freeze(a))
        if self.rotations is not None:
            norms = np.linalg.norm(self.rotations, axis=1)
            if norms.size and np.max(np.abs(norms - 1.0)) > _QUAT_UNIT_TOL:
                raise InvalidInputError("stored quaternions must have unit norm")
        if self.sh_coeffs is not None:
            sh = np.asarray(self.sh_coeffs, dtype=np.float64)
            if sh.ndim != 2 or sh.shape[0] != n:
                raise InvalidInputError("sh_coeffs must have shape (N, K)")
            object.__setattr__(self, "sh_coeffs", _freeze(sh))

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    def take(self, indices: np.ndarray) -> "GaussianCloud":
        """Sub-cloud at the given indices (attributes carried along)."""
        idx = np.asarray(indices)
        return GaussianCloud(
            positions=self.positions[idx],
            opacities=self.opacities[idx],
            scales=None if self.scales is None else self.scales[idx],
            rotations=None if self.rotations is None else self.rotations[idx],
            sh_coeffs=None if self.sh_coeffs is None else self.sh_coeffs[idx],
        )


# ---------------------------------------------------------------------------
# analytic deformation fields
# ---------------------------------------------------------------------------

class FieldKind(str, Enum):
    IDENTITY = "identity"
    RIGID = "rigid"
    RBF_DISPLACEMENT = "rbf_displacement"
    SINUSOIDAL = "sinusoidal"


@dataclass(frozen=True)
class DeformationField:
    """Analytic per-position displacement / opacity-delta field.

    Parameter layouts (all float64, see the factory helpers):
      rigid:            [rotvec(3), translation(3)] -- constant in time
      rbf_displacement: [bandwidth, time_freq, time_phase,
                         center(3), amplitude(3)] * M -- bump field, optionally
                         modulated by sin(2*pi*time_freq*t + time_phase)
      sinusoidal:       [amplitude(3), time_freq(3), spatial_freq(3), phase(3)]
                        with d_k(x, t) = a_k sin(2*pi f_k t + s_k x_k + phi_k)

    The opacity delta for non-identity kinds is
    ``opacity_delta_scale * sin(2*pi*t + kappa . x)`` with a kind-specific
    spatial wavevector kappa, so deformed clouds can brighten/dim in bands.
    """

    kind: FieldKind
    parameters: NDArray[np.float64] = field(default_factory=lambda: np.zeros(0))
    opacity_delta_scale: float = 0.0
    time_domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        params = _freeze(np.asarray(self.parameters, dtype=np.float64).reshape(-1))
        if not np.all(np.isfinite(params)):
            raise InvalidInputError("deformation parameters must be finite")
        object.__setattr__(self, "parameters", params)
        lo, hi = self.time_domain
        if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
            raise InvalidInputError("time_domain must be a finite [t_min, t_max] interval")
        object.__setattr__(self, "time_domain", (float(lo), float(hi)))
        kind = FieldKind(self.kind)
        object.__setattr__(self, "kind", kind)
        expected = {
            FieldKind.IDENTITY: lambda m: m == 0,
            FieldKind.RIGID: lambda m: m == 6,
            FieldKind.RBF_DISPLACEMENT: lambda m: m >= 9 and (m - 3) % 6 == 0,
            FieldKind.SINUSOIDAL: lambda m: m == 12,
        }
        if not expected[kind](params.size):
            raise InvalidInputError(f"bad parameter vector length {params.size} for kind {kind.value}")

    def _check_time(self, t: float) -> float:
        t = float(t)
        lo, hi = self.time_domain
        if not (lo <= t <= hi):
            raise DomainError(f"t={t} outside time domain [{lo}, {hi}]")
        return t

    def displacement(self, positions: np.ndarray, t: float) -> np.ndarray:
        t = self._check_time(t)
        x = np.asarray(positions, dtype=np.float64)
        if self.kind is FieldKind.IDENTITY:
            return np.zeros_like(x)
        if self.kind is FieldKind.RIGID:
            R = rotation_from_rotvec(self.parameters[:3])
            v = self.parameters[3:6]
            return x @ R.T + v - x
        if self.kind is FieldKind.RBF_DISPLACEMENT:
            bandwidth, tf, tp = self.parameters[:3]
            blobs = self.parameters[3:].reshape(-1, 6)
            gate = 1.0 if tf == 0.0 and tp == 0.0 else np.sin(2 * np.pi * tf * t + tp)
            d = np.zeros_like(x)
            inv = 1.0 / (2.0 * bandwidth * bandwidth)
            for row in blobs:
                c, a = row[:3], row[3:]
                w = np.exp(-np.sum((x - c) ** 2, axis=1) * inv)
                d += w[:, None] * a
            return gate * d
        amp, tf, sf, phase = self.parameters.reshape(4, 3)
        return amp * np.sin(2 * np.pi * tf * t + sf * x + phase)

    def opacity_delta(self, positions: np.ndarray, t: float) -> np.ndarray:
        t = self._check_time(t)
        x = np.asarray(positions, dtype=np.float64)
        if self.kind is FieldKind.IDENTITY or self.opacity_delta_scale == 0.0:
            return np.zeros(x.shape[0])
        if self.kind is FieldKind.RIGID:
            kappa = np.zeros(3)
        elif self.kind is FieldKind.RBF_DISPLACEMENT:
            kappa = np.full(3, 1.0 / max(self.parameters[0], 1e-12))
        else:
            kappa = self.parameters.reshape(4, 3)[2]
        return self.opacity_delta_scale * np.sin(2 * np.pi * t + x @ kappa)


def identity_field(time_domain=(0.0, 1.0)) -> DeformationField:
    return DeformationField(FieldKind.IDENTITY, np.zeros(0), 0.0, time_domain)


def rigid_field(rotvec, translation, opacity_delta_scale=0.0, time_domain=(0.0, 1.0)) -> DeformationField:
    params = np.concatenate([np.asarray(rotvec, dtype=np.float64).reshape(3),
                             np.asarray(translation, dtype=np.float64).reshape(3)])
    return DeformationField(FieldKind.RIGID, params, opacity_delta_scale, time_domain)


def rbf_field(centers, amplitudes, bandwidth, time_freq=0.0, time_phase=0.0,
              opacity_delta_scale=0.0, time_domain=(0.0, 1.0)) -> DeformationField:
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 3)
    amplitudes = np.asarray(amplitudes, dtype=np.float64).reshape(-1, 3)
    if centers.shape != amplitudes.shape:
        raise InvalidInputError("rbf centers and amplitudes must pair up")
    if bandwidth <= 0:
        raise InvalidInputError("rbf bandwidth must be positive")
    params = np.concatenate([[bandwidth, time_freq, time_phase],
                             np.hstack([centers, amplitudes]).reshape(-1)])
    return DeformationField(FieldKind.RBF_DISPLACEMENT, params, opacity_delta_scale, time_domain)


def sinusoidal_field(amplitude, time_freq, spatial_freq, phase=(0.0, 0.0, 0.0),
                     opacity_delta_scale=0.0, time_domain=(0.0, 1.0)) -> DeformationField:
    params = np.concatenate([np.asarray(a, dtype=np.float64).reshape(3)
                             for a in (amplitude, time_freq, spatial_freq, phase)])
    return DeformationField(FieldKind.SINUSOIDAL, params, opacity_delta_scale, time_domain)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def covariance_from_params(scale, rotation_quat) -> np.ndarray:
    """Covariance R diag(s) diag(s)^T R^T of one Gaussian.

    ``scale`` is the actual (not log) per-axis extent; callers holding
    log-scales exponentiate first.
    """
    s = np.asarray(scale, dtype=np.float64).reshape(3)
    q = np.asarray(rotation_quat, dtype=np.float64).reshape(4)
    if not (np.all(np.isfinite(s)) and np.all(np.isfinite(q))):
        raise InvalidInputError("scale and quaternion must be finite")
    norm = np.linalg.norm(q)
    if abs(norm - 1.0) > _QUAT_UNIT_TOL:
        raise InvalidInputError("quaternion must have unit norm")
    R = quat_to_matrix(q / norm)
    M = R * s          # columns scaled: R @ diag(s)
    return M @ M.T


def evaluate_gaussian(x, mu, sigma) -> float:
    """Unnormalized Gaussian density exp(-1/2 (x-mu)^T Sigma^-1 (x-mu))."""
    x = np.asarray(x, dtype=np.float64).reshape(3)
    mu = np.asarray(mu, dtype=np.float64).reshape(3)
    sigma = np.asarray(sigma, dtype=np.float64).reshape(3, 3)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
        raise InvalidInputError("inputs must be finite")
    if np.max(np.abs(sigma - sigma.T)) > 1e-9 * max(1.0, np.max(np.abs(sigma))):
        raise InvalidInputError("sigma must be symmetric")
    cond = np.linalg.cond(sigma)
    if not np.isfinite(cond) or cond >= 1e12:
        raise SingularMatrixError(f"sigma condition number {cond:.3g} exceeds 1e12")
    d = x - mu
    return float(np.exp(-0.5 * d @ np.linalg.solve(sigma, d)))


def apply_deformation(cloud: GaussianCloud, deformation: DeformationField, t: float) -> GaussianCloud:
    """Deformed cloud: positions shifted by the field, opacities shifted and clamped."""
    disp = deformation.displacement(cloud.positions, t)
    delta = deformation.opacity_delta(cloud.positions, t)
    return replace(cloud,
                   positions=cloud.positions + disp,
                   opacities=np.clip(cloud.opacities + delta, 0.0, 1.0))


def transform_cloud(cloud: GaussianCloud, transform: RigidTransform) -> GaussianCloud:
    """Rigidly move a cloud; per-Gaussian quaternions rotate consistently."""
    rotations = cloud.rotations
    if rotations is not None:
        q_r = matrix_to_quat(transform.rotation)
        rotated = quat_multiply(q_r[None, :], rotations)
        rotated = rotated / np.linalg.norm(rotated, axis=1, keepdims=True)
        rotations = rotated
    return replace(cloud, positions=transform.apply(cloud.positions), rotations=rotations)
