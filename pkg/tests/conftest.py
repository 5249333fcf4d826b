import numpy as np
import pytest

from splatreg.gaussian_model import GaussianCloud, RigidTransform, rotation_from_rotvec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    angle = rng.uniform(0.0, np.pi)
    return rotation_from_rotvec(axis * angle)


def random_transform(rng: np.random.Generator, translation_scale: float = 1.0) -> RigidTransform:
    return RigidTransform(random_rotation(rng), rng.normal(scale=translation_scale, size=3))


def random_cloud(rng: np.random.Generator, n: int = 100, with_attrs: bool = False) -> GaussianCloud:
    positions = rng.uniform(-1.0, 1.0, size=(n, 3))
    opacities = rng.uniform(0.0, 1.0, size=n)
    if not with_attrs:
        return GaussianCloud(positions=positions, opacities=opacities)
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    return GaussianCloud(
        positions=positions,
        opacities=opacities,
        scales=rng.normal(size=(n, 3)),
        rotations=quats,
        sh_coeffs=rng.normal(size=(n, 6)),
    )
