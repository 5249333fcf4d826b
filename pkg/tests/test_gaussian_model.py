import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from splatreg.errors import DomainError, InvalidInputError, SingularMatrixError
from splatreg.gaussian_model import (
    DeformationField,
    FieldKind,
    GaussianCloud,
    RigidTransform,
    apply_deformation,
    covariance_from_params,
    evaluate_gaussian,
    identity_field,
    matrix_to_quat,
    quat_to_matrix,
    rigid_field,
    rotation_from_rotvec,
    sinusoidal_field,
    transform_cloud,
)

from conftest import random_cloud, random_transform

ROT90_Z = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
QUAT_90_Z = np.array([np.cos(np.pi / 4), 0.0, 0.0, np.sin(np.pi / 4)])


class TestCovarianceFromParams:
    def test_identity_case(self):
        sigma = covariance_from_params((1, 1, 1), (1, 0, 0, 0))
        np.testing.assert_allclose(sigma, np.eye(3), atol=1e-15)

    def test_axis_scaling_without_rotation(self):
        sigma = covariance_from_params((2, 1, 1), (1, 0, 0, 0))
        np.testing.assert_allclose(sigma, np.diag([4.0, 1.0, 1.0]), atol=1e-15)

    def test_rotation_moves_major_axis(self):
        # oracle: explicit product R diag(s) diag(s)^T R^T with R = 90 deg about z
        s = np.diag([2.0, 1.0, 1.0])
        expected = ROT90_Z @ s @ s.T @ ROT90_Z.T
        sigma = covariance_from_params((2, 1, 1), QUAT_90_Z)
        np.testing.assert_allclose(sigma, expected, atol=1e-12)
        np.testing.assert_allclose(sigma, np.diag([1.0, 4.0, 1.0]), atol=1e-12)

    def test_symmetry_and_psd(self, rng):
        for _ in range(50):
            q = rng.normal(size=4)
            q /= np.linalg.norm(q)
            s = rng.uniform(0.1, 3.0, size=3)
            sigma = covariance_from_params(s, q)
            assert np.max(np.abs(sigma - sigma.T)) < 1e-12
            assert np.linalg.eigvalsh(sigma).min() >= -1e-12

    def test_quaternion_sign_flip_invariance(self, rng):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        a = covariance_from_params((1.5, 0.7, 0.2), q)
        b = covariance_from_params((1.5, 0.7, 0.2), -q)
        np.testing.assert_allclose(a, b, atol=1e-14)

    def test_rejects_non_finite(self):
        with pytest.raises(InvalidInputError):
            covariance_from_params((np.nan, 1, 1), (1, 0, 0, 0))
        with pytest.raises(InvalidInputError):
            covariance_from_params((1, 1, 1), (np.inf, 0, 0, 0))

    def test_rejects_non_unit_quaternion(self):
        with pytest.raises(InvalidInputError):
            covariance_from_params((1, 1, 1), (2, 0, 0, 0))


class TestEvaluateGaussian:
    def test_at_mean(self):
        assert evaluate_gaussian((0.3, -1, 2), (0.3, -1, 2), np.eye(3)) == 1.0

    def test_unit_offset(self):
        value = evaluate_gaussian((1, 0, 0), (0, 0, 0), np.eye(3))
        assert value == pytest.approx(np.exp(-0.5), abs=1e-12)

    def test_anisotropic_offset(self):
        # oracle: d^T Sigma^-1 d = 1/4 + 1 = 1.25 -> exp(-0.625)
        value = evaluate_gaussian((1, 1, 0), (0, 0, 0), np.diag([4.0, 1.0, 1.0]))
        assert value == pytest.approx(np.exp(-0.625), abs=1e-12)

    def test_singular_sigma_raises(self):
        with pytest.raises(SingularMatrixError):
            evaluate_gaussian((1, 0, 0), (0, 0, 0), np.diag([1.0, 1.0, 0.0]))

    def test_rigid_motion_invariance(self, rng):
        for _ in range(25):
            transform = random_transform(rng)
            x = rng.normal(size=3)
            mu = rng.normal(size=3)
            a = rng.normal(size=(3, 3))
            sigma = a @ a.T + 0.5 * np.eye(3)
            moved_sigma = transform.rotation @ sigma @ transform.rotation.T
            v1 = evaluate_gaussian(x, mu, sigma)
            v2 = evaluate_gaussian(transform.apply(x), transform.apply(mu), moved_sigma)
            assert v2 == pytest.approx(v1, abs=1e-9)


class TestDeformationFields:
    def test_identity_is_noop(self, rng):
        cloud = random_cloud(rng, 64, with_attrs=True)
        out = apply_deformation(cloud, identity_field(), 0.3)
        np.testing.assert_array_equal(out.positions, cloud.positions)
        np.testing.assert_array_equal(out.opacities, cloud.opacities)
        np.testing.assert_array_equal(out.scales, cloud.scales)

    def test_pure_translation(self):
        cloud = GaussianCloud(positions=np.zeros((1, 3)), opacities=np.array([0.5]))
        field = rigid_field(rotvec=(0, 0, 0), translation=(1, 2, 3))
        out = apply_deformation(cloud, field, 0.0)
        np.testing.assert_allclose(out.positions, [[1.0, 2.0, 3.0]], atol=1e-15)

    def test_sinusoidal_matches_scalar_loop(self, rng):
        # oracle: re-evaluate the analytic field point by point in pure python
        cloud = random_cloud(rng, 100)
        amp = rng.normal(size=3) * 0.05
        tf = rng.uniform(0.2, 2.0, size=3)
        sf = rng.uniform(0.5, 4.0, size=3)
        ph = rng.uniform(0, 2 * np.pi, size=3)
        field = sinusoidal_field(amp, tf, sf, ph, opacity_delta_scale=0.1)
        t = 0.5
        out = apply_deformation(cloud, field, t)
        import math
        for i in range(cloud.count):
            x = cloud.positions[i]
            for k in range(3):
                expected = x[k] + amp[k] * math.sin(2 * math.pi * tf[k] * t + sf[k] * x[k] + ph[k])
                assert out.positions[i, k] == pytest.approx(expected, abs=1e-12)
            kappa = sf
            delta = 0.1 * math.sin(2 * math.pi * t + float(x @ kappa))
            expected_o = min(1.0, max(0.0, cloud.opacities[i] + delta))
            assert out.opacities[i] == pytest.approx(expected_o, abs=1e-12)

    def test_time_domain_enforced(self, rng):
        cloud = random_cloud(rng, 8)
        field = identity_field(time_domain=(0.0, 1.0))
        with pytest.raises(DomainError):
            apply_deformation(cloud, field, 1.5)

    @pytest.mark.parametrize("kind", list(FieldKind))
    def test_finite_displacement_everywhere(self, rng, kind):
        fields = {
            FieldKind.IDENTITY: identity_field(),
            FieldKind.RIGID: rigid_field((0.1, -0.2, 0.3), (1, 2, 3)),
            FieldKind.RBF_DISPLACEMENT: DeformationField(
                FieldKind.RBF_DISPLACEMENT,
                np.array([0.5, 0.0, 0.0, 0.1, 0.2, 0.3, 0.01, -0.02, 0.03])),
            FieldKind.SINUSOIDAL: sinusoidal_field((0.1, 0.1, 0.1), (1, 1, 1), (2, 2, 2)),
        }
        field = fields[kind]
        positions = rng.normal(scale=100.0, size=(50, 3))
        for t in (0.0, 0.25, 1.0):
            assert np.all(np.isfinite(field.displacement(positions, t)))
            assert np.all(np.isfinite(field.opacity_delta(positions, t)))

    def test_attributes_carried_over(self, rng):
        cloud = random_cloud(rng, 32, with_attrs=True)
        field = sinusoidal_field((0.1, 0, 0), (1, 1, 1), (1, 1, 1))
        out = apply_deformation(cloud, field, 0.25)
        assert out.count == cloud.count
        np.testing.assert_array_equal(out.scales, cloud.scales)
        np.testing.assert_array_equal(out.rotations, cloud.rotations)
        np.testing.assert_array_equal(out.sh_coeffs, cloud.sh_coeffs)


class TestTransformCloud:
    def test_identity(self, rng):
        cloud = random_cloud(rng, 20, with_attrs=True)
        out = transform_cloud(cloud, RigidTransform.identity())
        np.testing.assert_allclose(out.positions, cloud.positions, atol=1e-15)

    def test_rotation_about_z(self):
        cloud = GaussianCloud(positions=np.array([[1.0, 0.0, 0.0]]), opacities=np.array([1.0]))
        out = transform_cloud(cloud, RigidTransform(ROT90_Z, np.zeros(3)))
        np.testing.assert_allclose(out.positions, [[0.0, 1.0, 0.0]], atol=1e-15)

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_round_trip_inverse(self, seed):
        rng = np.random.default_rng(seed)
        cloud = random_cloud(rng, 30)
        transform = random_transform(rng)
        back = transform_cloud(transform_cloud(cloud, transform), transform.inverse())
        assert np.max(np.abs(back.positions - cloud.positions)) < 1e-9

    def test_quaternions_rotate_consistently(self, rng):
        cloud = random_cloud(rng, 10, with_attrs=True)
        transform = random_transform(rng)
        out = transform_cloud(cloud, transform)
        # rotating the covariance directly must match using the rotated quaternion
        for i in range(cloud.count):
            s = np.exp(cloud.scales[i])
            before = covariance_from_params(s, cloud.rotations[i])
            after = covariance_from_params(s, out.rotations[i])
            np.testing.assert_allclose(
                after, transform.rotation @ before @ transform.rotation.T, atol=1e-9)


class TestRigidTransformType:
    def test_rejects_reflection(self):
        R = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(InvalidInputError):
            RigidTransform(R, np.zeros(3))

    def test_rejects_non_orthonormal(self):
        with pytest.raises(InvalidInputError):
            RigidTransform(np.eye(3) * 1.001, np.zeros(3))

    def test_matrix_round_trip(self, rng):
        transform = random_transform(rng)
        again = RigidTransform.from_matrix(transform.matrix())
        np.testing.assert_allclose(again.rotation, transform.rotation, atol=1e-15)
        np.testing.assert_allclose(again.translation, transform.translation, atol=1e-15)

    def test_compose_matches_matrix_product(self, rng):
        t1 = random_transform(rng)
        t2 = random_transform(rng)
        np.testing.assert_allclose((t1.compose(t2)).matrix(), t1.matrix() @ t2.matrix(),
                                   atol=1e-12)


class TestQuaternionHelpers:
    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_matrix_quat_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        R = quat_to_matrix(q)
        q2 = matrix_to_quat(R)
        np.testing.assert_allclose(quat_to_matrix(q2), R, atol=1e-12)

    def test_rotvec_matches_quaternion(self):
        R = rotation_from_rotvec(np.array([0.0, 0.0, np.pi / 2]))
        np.testing.assert_allclose(R, ROT90_Z, atol=1e-12)


class TestGaussianCloudType:
    def test_length_mismatch_rejected(self):
        with pytest.raises(InvalidInputError):
            GaussianCloud(positions=np.zeros((3, 3)), opacities=np.zeros(2))

    def test_opacity_range_enforced(self):
        with pytest.raises(InvalidInputError):
            GaussianCloud(positions=np.zeros((1, 3)), opacities=np.array([1.5]))

    def test_non_unit_quaternion_rejected(self):
        with pytest.raises(InvalidInputError):
            GaussianCloud(positions=np.zeros((1, 3)), opacities=np.array([0.5]),
                          rotations=np.array([[1.0, 1.0, 0.0, 0.0]]))

    def test_arrays_immutable(self, rng):
        cloud = random_cloud(rng, 4)
        with pytest.raises(ValueError):
            cloud.positions[0, 0] = 99.0

    def test_take_subsets_all_attributes(self, rng):
        cloud = random_cloud(rng, 10, with_attrs=True)
        sub = cloud.take(np.array([1, 3, 5]))
        assert sub.count == 3
        np.testing.assert_array_equal(sub.positions, cloud.positions[[1, 3, 5]])
        np.testing.assert_array_equal(sub.sh_coeffs, cloud.sh_coeffs[[1, 3, 5]])
