"""Feature cascading: one clustering pass over static + deformed Gaussians.

A scene snapshot pairs a canonical cloud with its deformation at one timestamp.
Concatenating both blocks (static first) before a single weighted-clustering
pass lets keypoints cover structure that is salient in either state.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidInputError
from .gaussian_model import DeformationField, GaussianCloud, apply_deformation
from .swc import KeypointSet, SwcParams, masked_keypoints, opacity_mask, swc


class CascadeMode(str, Enum):
    BOTH = "both"
    STATIC_ONLY = "static_only"
    DEFORMED_ONLY = "deformed_only"


@dataclass(frozen=True)
class SceneSnapshot:
    """A scene's canonical cloud and its deformation at ``timestamp``."""

    static_cloud: GaussianCloud
    deformed_cloud: GaussianCloud
    timestamp: float
    deformation: DeformationField | None = None

    def __post_init__(self):
        if self.static_cloud.count != self.deformed_cloud.count:
            raise InvalidInputError("static and deformed clouds must have equal counts")


def make_snapshot(cloud: GaussianCloud, deformation: DeformationField, t: float) -> SceneSnapshot:
    """Snapshot with the deformed cloud computed from the field (provenance kept)."""
    return SceneSnapshot(static_cloud=cloud,
                         deformed_cloud=apply_deformation(cloud, deformation, t),
                         timestamp=float(t),
                         deformation=deformation)


def _blocks(snapshot: SceneSnapshot, mode: CascadeMode):
    """Concatenated positions/opacities and the index offset of the block used.

    In ``both`` mode indices 0..count-1 address the static block and
    count..2*count-1 the deformed block; single-block modes keep the same
    index ranges so block membership stays readable from the indices.
    """
    mode = CascadeMode(mode)
    static, deformed = snapshot.static_cloud, snapshot.deformed_cloud
    if mode is CascadeMode.BOTH:
        positions = np.vstack([static.positions, deformed.positions])
        opacities = np.concatenate([static.opacities, deformed.opacities])
        return positions, opacities, 0
    if mode is CascadeMode.STATIC_ONLY:
        return static.positions, static.opacities, 0
    return deformed.positions, deformed.opacities, static.count


def _offset(keypoints: KeypointSet, offset: int) -> KeypointSet:
    if offset == 0:
        return keypoints
    return KeypointSet(positions=keypoints.positions,
                       source_indices=keypoints.source_indices + offset)


def cascade_extract(snapshot: SceneSnapshot, params: SwcParams,
                    mode: CascadeMode = CascadeMode.BOTH) -> KeypointSet:
    """Keypoints from one weighted-clustering pass over the selected block(s)."""
    positions, opacities, offset = _blocks(snapshot, mode)
    mask = opacity_mask(opacities, params.opacity_threshold)
    return _offset(swc(positions, opacities, mask, params), offset)


def cascade_extract_bypass(snapshot: SceneSnapshot, opacity_threshold: float,
                           mode: CascadeMode = CascadeMode.BOTH) -> KeypointSet:
    """Clustering-free variant: all opacity-masked points become keypoints."""
    positions, opacities, offset = _blocks(snapshot, mode)
    mask = opacity_mask(opacities, opacity_threshold)
    return _offset(masked_keypoints(positions, opacities, mask), offset)
