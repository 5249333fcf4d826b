"""Pose-error metrics and trial aggregation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, InvalidInputError

_ROTATION_CHECK_TOL = 1e-6


@dataclass(frozen=True)
class PoseError:
    rotation_error_deg: float
    translation_error: float

    def __post_init__(self):
        if not (0.0 <= self.rotation_error_deg <= 180.0 + 1e-9):
            raise InvalidInputError("rotation error must lie in [0, 180] degrees")
        if self.translation_error < 0.0:
            raise InvalidInputError("translation error must be non-negative")


@dataclass(frozen=True)
class ErrorSummary:
    mean_rotation_deg: float
    mean_translation: float
    mean_time_s: float
    count: int


def _require_rotation(R: np.ndarray, name: str) -> np.ndarray:
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise InvalidInputError(f"{name} must be a finite 3x3 matrix")
    if np.max(np.abs(R.T @ R - np.eye(3))) > _ROTATION_CHECK_TOL:
        raise InvalidInputError(f"{name} is not orthonormal")
    if abs(np.linalg.det(R) - 1.0) > _ROTATION_CHECK_TOL:
        raise InvalidInputError(f"{name} must have determinant +1")
    return R


def rotation_error_deg(R_est: np.ndarray, R_gt: np.ndarray) -> float:
    """Geodesic angle in degrees between two rotations."""
    R_est = _require_rotation(R_est, "R_est")
    R_gt = _require_rotation(R_gt, "R_gt")
    c = (np.trace(R_gt.T @ R_est) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))


def translation_error(t_est: np.ndarray, t_gt: np.ndarray) -> float:
    """Euclidean distance between two translation vectors."""
    t_est = np.asarray(t_est, dtype=np.float64).reshape(3)
    t_gt = np.asarray(t_gt, dtype=np.float64).reshape(3)
    if not (np.all(np.isfinite(t_est)) and np.all(np.isfinite(t_gt))):
        raise InvalidInputError("translations must be finite")
    return float(np.linalg.norm(t_est - t_gt))


def pose_error(estimate, ground_truth) -> PoseError:
    """Rotation/translation error of an estimated rigid transform."""
    return PoseError(
        rotation_error_deg=rotation_error_deg(estimate.rotation, ground_truth.rotation),
        translation_error=translation_error(estimate.translation, ground_truth.translation),
    )


def summarize(errors: list[PoseError], times: list[float]) -> ErrorSummary:
    """Arithmetic means over a batch of trials."""
    if not errors or not times:
        raise EmptyInputError("summarize requires at least one error and one time entry")
    return ErrorSummary(
        mean_rotation_deg=float(np.mean([e.rotation_error_deg for e in errors])),
        mean_translation=float(np.mean([e.translation_error for e in errors])),
        mean_time_s=float(np.mean(times)),
        count=len(errors),
    )


def bootstrap_mean_le_confidence(x, y, n_resamples: int = 4000, seed: int = 0) -> float:
    """Paired-bootstrap confidence that mean(x) <= mean(y).

    Resamples trial indices with replacement and reports the fraction of
    resamples in which the x-mean does not exceed the y-mean.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size == 0:
        raise InvalidInputError("x and y must be equal-length non-empty 1-D arrays")
    diffs = y - x
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, diffs.size, size=(n_resamples, diffs.size))
    return float(np.mean(diffs[idx].mean(axis=1) >= 0.0))
