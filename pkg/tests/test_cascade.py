import numpy as np
import pytest

from splatreg.cascade import CascadeMode, SceneSnapshot, cascade_extract, cascade_extract_bypass, make_snapshot
from splatreg.errors import InvalidInputError
from splatreg.gaussian_model import GaussianCloud, identity_field, sinusoidal_field
from splatreg.swc import SwcParams, opacity_mask, swc

from conftest import random_cloud


@pytest.fixture
def snapshot(rng):
    cloud = random_cloud(rng, 200)
    field = sinusoidal_field((0.05, 0.02, 0.01), (1, 1, 1), (3, 2, 1),
                             opacity_delta_scale=0.15)
    return make_snapshot(cloud, field, 0.4)


class TestSceneSnapshot:
    def test_count_mismatch_rejected(self, rng):
        a = random_cloud(rng, 10)
        b = random_cloud(rng, 11)
        with pytest.raises(InvalidInputError):
            SceneSnapshot(static_cloud=a, deformed_cloud=b, timestamp=0.0)

    def test_make_snapshot_records_provenance(self, rng):
        cloud = random_cloud(rng, 20)
        field = identity_field()
        snap = make_snapshot(cloud, field, 0.25)
        assert snap.deformation is field
        assert snap.timestamp == 0.25
        np.testing.assert_array_equal(snap.deformed_cloud.positions, cloud.positions)


class TestCascadeExtract:
    def test_identity_deformation_duplicates_blocks(self, rng):
        cloud = random_cloud(rng, 50)
        snap = make_snapshot(cloud, identity_field(), 0.5)
        params = SwcParams(num_clusters=2, opacity_threshold=0.4, drop_rate=0.0)
        out = cascade_extract(snap, params, CascadeMode.BOTH)
        masked = np.flatnonzero(cloud.opacities >= 0.4)
        expected = set(masked.tolist()) | {i + 50 for i in masked}
        assert set(out.source_indices.tolist()) == expected

    def test_static_only_matches_plain_swc(self, snapshot):
        params = SwcParams(num_clusters=3, opacity_threshold=0.5, seed=4)
        out = cascade_extract(snapshot, params, CascadeMode.STATIC_ONLY)
        cloud = snapshot.static_cloud
        mask = opacity_mask(cloud.opacities, 0.5)
        direct = swc(cloud.positions, cloud.opacities, mask, params)
        np.testing.assert_array_equal(out.source_indices, direct.source_indices)
        np.testing.assert_array_equal(out.positions, direct.positions)

    def test_deformed_only_offsets_indices(self, snapshot):
        params = SwcParams(num_clusters=3, opacity_threshold=0.5, seed=4)
        out = cascade_extract(snapshot, params, CascadeMode.DEFORMED_ONLY)
        count = snapshot.static_cloud.count
        assert np.all(out.source_indices >= count)
        assert np.all(out.source_indices < 2 * count)
        for pos, src in zip(out.positions, out.source_indices):
            np.testing.assert_array_equal(pos, snapshot.deformed_cloud.positions[src - count])

    def test_both_mode_source_blocks(self, snapshot):
        # oracle: standalone scripted pipeline over the explicit concatenation
        params = SwcParams(num_clusters=5, opacity_threshold=0.5, drop_rate=0.5, seed=8)
        out = cascade_extract(snapshot, params, CascadeMode.BOTH)
        static, deformed = snapshot.static_cloud, snapshot.deformed_cloud
        concat_pos = np.vstack([static.positions, deformed.positions])
        concat_opa = np.concatenate([static.opacities, deformed.opacities])
        mask = concat_opa >= 0.5
        expected = swc(concat_pos, concat_opa, mask, params)
        np.testing.assert_array_equal(out.source_indices, expected.source_indices)
        # membership is readable from the index ranges
        count = static.count
        for pos, src in zip(out.positions, out.source_indices):
            block = static if src < count else deformed
            np.testing.assert_array_equal(pos, block.positions[src % count])

    def test_kept_opacities_meet_threshold(self, snapshot):
        params = SwcParams(num_clusters=4, opacity_threshold=0.6)
        out = cascade_extract(snapshot, params, CascadeMode.BOTH)
        concat_opa = np.concatenate([snapshot.static_cloud.opacities,
                                     snapshot.deformed_cloud.opacities])
        assert np.all(concat_opa[out.source_indices] >= 0.6)

    def test_identity_deformation_positions_match_static_mode(self, rng):
        cloud = random_cloud(rng, 120)
        snap = make_snapshot(cloud, identity_field(), 0.5)
        params = SwcParams(num_clusters=3, opacity_threshold=0.3, drop_rate=0.5, seed=13)
        both = cascade_extract(snap, params, CascadeMode.BOTH)
        static = cascade_extract(snap, params, CascadeMode.STATIC_ONLY)
        both_set = {tuple(p) for p in both.positions}
        static_set = {tuple(p) for p in static.positions}
        assert both_set == static_set

    def test_deterministic(self, snapshot):
        params = SwcParams(num_clusters=3, opacity_threshold=0.5, seed=77)
        a = cascade_extract(snapshot, params, CascadeMode.BOTH)
        b = cascade_extract(snapshot, params, CascadeMode.BOTH)
        np.testing.assert_array_equal(a.source_indices, b.source_indices)
        np.testing.assert_array_equal(a.positions, b.positions)


class TestCascadeBypass:
    def test_bypass_keeps_all_masked(self, snapshot):
        out = cascade_extract_bypass(snapshot, 0.5, CascadeMode.BOTH)
        concat_opa = np.concatenate([snapshot.static_cloud.opacities,
                                     snapshot.deformed_cloud.opacities])
        assert out.count == int(np.sum(concat_opa >= 0.5))

    def test_bypass_single_block(self, snapshot):
        out = cascade_extract_bypass(snapshot, 0.5, CascadeMode.DEFORMED_ONLY)
        count = snapshot.static_cloud.count
        assert np.all(out.source_indices >= count)
