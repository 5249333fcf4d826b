"""Exception types raised across the package."""

from __future__ import annotations


class SplatRegError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SplatRegError, ValueError):
    """An argument violates a documented precondition (non-finite, bad shape, ...)."""


class SingularMatrixError(SplatRegError):
    """A matrix required to be invertible is singular or too ill-conditioned."""


class DomainError(SplatRegError):
    """A timestamp falls outside a deformation field's time domain."""


class InsufficientPointsError(SplatRegError):
    """Fewer points than an operation needs (clustering, descriptors, fitting)."""


class EmptySelectionError(SplatRegError):
    """A mask or filter selected no points at all."""


class DegenerateConfigurationError(SplatRegError):
    """Point configuration does not determine a unique rigid transform."""


class RegistrationFailureError(SplatRegError):
    """RANSAC found no hypothesis with enough inliers.

    Carries the best-effort transform and its inlier count so callers can
    still report a (flagged) result.
    """

    def __init__(self, message, best_transform=None, inlier_count=0):
        super().__init__(message)
        self.best_transform = best_transform
        self.inlier_count = inlier_count


class NoOverlapError(SplatRegError):
    """ICP found zero correspondences at the initial transform."""


class EmptyInputError(SplatRegError):
    """An aggregate operation received an empty collection."""


class DegenerateSpecError(SplatRegError):
    """A synthetic scene/pair spec produced an unusable (e.g. empty) result."""


class PlyParseError(SplatRegError):
    """Malformed PLY content. ``byte_offset`` locates the offending bytes."""

    def __init__(self, message, byte_offset=None):
        if byte_offset is not None:
            message = f"{message} (byte offset {byte_offset})"
        super().__init__(message)
        self.byte_offset = byte_offset


class PlySchemaError(SplatRegError):
    """PLY file parsed but lacks required vertex properties (x, y, z)."""


class PlyDataError(SplatRegError):
    """PLY vertex data contains invalid values. ``indices`` lists offenders."""

    def __init__(self, message, indices=()):
        super().__init__(message)
        self.indices = list(indices)
