import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swlo.geometry import (NormalMap, PointCloud, RangeImage, RigidTransform,
                           estimate_normals, rotate_normals, se3_exp, se3_log,
                           spherical_project, transform_cloud, unproject)


def _rand_cloud(rng, n=50, scale=10.0):
    return PointCloud(rng.uniform(-scale, scale, size=(n, 3)))


def _rand_pose(rng, max_angle=3.0, max_t=5.0):
    w = rng.normal(size=3)
    w *= rng.uniform(0, max_angle) / np.linalg.norm(w)
    return se3_exp(np.concatenate([w, rng.uniform(-max_t, max_t, 3)]))


class TestPointCloud:
    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="invalid point"):
            PointCloud(np.array([[0.0, np.nan, 0.0]]))

    def test_rejects_channel_length_mismatch(self):
        with pytest.raises(ValueError, match="channel 'a'"):
            PointCloud(np.zeros((3, 3)), channels={"a": np.zeros(2)})

    def test_empty_allowed(self):
        assert len(PointCloud(np.zeros((0, 3)))) == 0


class TestSphericalProject:
    def test_hand_example_forward_point(self):
        # azimuth 0 maps to the center column, pitch 0 to the lower row half
        img = spherical_project(PointCloud(np.array([[1.0, 0.0, 0.0]])),
                                height=2, width=4, fov_up=0.1, fov_down=-0.1)
        assert img.valid[1, 2]
        assert img.range[1, 2] == 1.0
        assert img.valid.sum() == 1

    def test_collision_keeps_nearer_point(self):
        cloud = PointCloud(np.array([[5.0, 0.0, 0.0], [3.0, 0.0, 0.0]]))
        img = spherical_project(cloud, height=2, width=4, fov_up=0.1, fov_down=-0.1)
        assert img.range[1, 2] == 3.0

    def test_empty_cloud_errors(self):
        with pytest.raises(ValueError, match="empty input"):
            spherical_project(PointCloud(np.zeros((0, 3))), 4, 8, 0.1, -0.1)

    def test_bad_fov_errors(self):
        with pytest.raises(ValueError):
            spherical_project(PointCloud(np.ones((1, 3))), 4, 8, -0.1, 0.1)

    def test_channels_carried(self):
        cloud = PointCloud(np.array([[4.0, 1.0, 0.0]]), intensity=np.array([0.25]),
                           channels={"saliency": np.array([0.7])})
        img = spherical_project(cloud, 8, 16, 0.2, -0.2)
        v, u = np.argwhere(img.valid)[0]
        assert img.channels["saliency"][v, u] == 0.7
        assert img.channels["intensity"][v, u] == 0.25

    def test_unproject_points_are_input_points(self):
        rng = np.random.default_rng(0)
        cloud = _rand_cloud(rng, 300)
        img = spherical_project(cloud, 16, 64, 0.3, -0.3)
        out = unproject(img)
        assert len(out) <= len(cloud)
        # every output point is one of the inputs, found by brute force
        dists = np.linalg.norm(out.positions[:, None, :] - cloud.positions[None], axis=2)
        assert dists.min(axis=1).max() == 0.0

    def test_reprojection_reproduces_ranges(self):
        rng = np.random.default_rng(1)
        img = spherical_project(_rand_cloud(rng, 500), 16, 64, 0.3, -0.3)
        back = spherical_project(unproject(img), 16, 64, 0.3, -0.3)
        assert np.array_equal(back.valid, img.valid)
        assert np.abs(back.range[img.valid] - img.range[img.valid]).max() <= 1e-6


class TestUnproject:
    def test_empty_image(self):
        img = RangeImage(np.zeros((2, 2)), np.zeros((2, 2, 3)), np.zeros((2, 2), bool))
        assert len(unproject(img)) == 0

    def test_single_pixel(self):
        r = np.zeros((2, 2))
        xyz = np.zeros((2, 2, 3))
        valid = np.zeros((2, 2), bool)
        r[0, 1] = 2.0
        xyz[0, 1] = (0.0, 2.0, 0.0)
        valid[0, 1] = True
        out = unproject(RangeImage(r, xyz, valid))
        assert len(out) == 1
        assert np.array_equal(out.positions[0], [0.0, 2.0, 0.0])

    def test_count_matches_valid_pixels(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            img = spherical_project(_rand_cloud(rng, 200), 8, 32, 0.3, -0.3)
            assert len(unproject(img)) == int(img.valid.sum())


def _image_from_grid(xyz, valid):
    r = np.where(valid, np.linalg.norm(xyz, axis=-1), 0.0)
    return RangeImage(r, np.where(valid[..., None], xyz, 0.0), valid)


class TestEstimateNormals:
    def test_ground_plane_faces_up(self):
        xyz = np.zeros((2, 2, 3))
        xyz[0, 0] = (1.0, 1.0, -2.0)
        xyz[0, 1] = (2.0, 1.0, -2.0)
        xyz[1, 0] = (1.0, 2.0, -2.0)
        xyz[1, 1] = (2.0, 2.0, -2.0)
        nm = estimate_normals(_image_from_grid(xyz, np.ones((2, 2), bool)))
        assert nm.valid[0, 0]
        np.testing.assert_allclose(nm.normals[0, 0], [0.0, 0.0, 1.0], atol=1e-12)

    def test_collinear_neighbors_invalid(self):
        xyz = np.zeros((2, 2, 3))
        xyz[0, 0] = (1.0, 0.0, 0.0)
        xyz[0, 1] = (2.0, 0.0, 0.0)
        xyz[1, 0] = (3.0, 0.0, 0.0)
        valid = np.array([[True, True], [True, False]])
        nm = estimate_normals(_image_from_grid(xyz, valid))
        assert not nm.valid.any()

    def test_all_normals_unit(self):
        rng = np.random.default_rng(3)
        img = spherical_project(_rand_cloud(rng, 2000), 24, 96, 0.3, -0.3)
        nm = estimate_normals(img)
        norms = np.linalg.norm(nm.normals[nm.valid], axis=-1)
        assert np.abs(norms - 1.0).max() <= 1e-6

    def test_synthetic_plane_interior(self):
        # regular grid on z = -2 seen from the origin
        us = np.linspace(-4, 4, 9)
        vs = np.linspace(2, 10, 9)
        xx, yy = np.meshgrid(us, vs)
        xyz = np.stack([yy, xx, np.full_like(xx, -2.0)], axis=-1)
        nm = estimate_normals(_image_from_grid(xyz, np.ones((9, 9), bool)))
        assert nm.valid[:-1, :-1].all()
        errs = np.abs(nm.normals[nm.valid] - np.array([0.0, 0.0, 1.0]))
        assert errs.max() <= 1e-6


class TestRigidTransform:
    def test_identity_transform_is_bit_exact(self):
        rng = np.random.default_rng(4)
        cloud = _rand_cloud(rng, 100)
        out = transform_cloud(cloud, RigidTransform.identity())
        assert np.array_equal(out.positions, cloud.positions)

    def test_pure_translation(self):
        T = RigidTransform(np.array([1.0, 0, 0, 0]), np.array([1.0, 2.0, 3.0]))
        out = transform_cloud(PointCloud(np.zeros((1, 3))), T)
        np.testing.assert_array_equal(out.positions[0], [1.0, 2.0, 3.0])

    def test_quarter_turn_about_z(self):
        T = se3_exp([0.0, 0.0, math.pi / 2, 0.0, 0.0, 0.0])
        out = T.apply(np.array([1.0, 0.0, 0.0]))
        np.testing.assert_allclose(out, [0.0, 1.0, 0.0], atol=1e-12)

    def test_channels_copied(self):
        cloud = PointCloud(np.ones((2, 3)), channels={"s": np.array([0.1, 0.9])})
        out = transform_cloud(cloud, RigidTransform.identity())
        assert np.array_equal(out.channels["s"], cloud.channels["s"])
        assert out.channels["s"] is not cloud.channels["s"]

    def test_composition_matches_sequential(self):
        rng = np.random.default_rng(5)
        cloud = _rand_cloud(rng, 60)
        for _ in range(20):
            t1, t2 = _rand_pose(rng), _rand_pose(rng)
            a = transform_cloud(transform_cloud(cloud, t1), t2).positions
            b = transform_cloud(cloud, t2 @ t1).positions
            assert np.abs(a - b).max() <= 1e-9

    def test_rigidity_preserves_distances(self):
        rng = np.random.default_rng(6)
        cloud = _rand_cloud(rng, 40)
        d0 = np.linalg.norm(cloud.positions[:, None] - cloud.positions[None], axis=2)
        for _ in range(10):
            moved = transform_cloud(cloud, _rand_pose(rng)).positions
            d1 = np.linalg.norm(moved[:, None] - moved[None], axis=2)
            assert np.abs(d1 - d0).max() <= 1e-9

    def test_inverse_roundtrip(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            T = _rand_pose(rng)
            back = T.inverse() @ T
            assert back.rotation_angle() <= 1e-12
            assert np.abs(back.translation).max() <= 1e-10

    def test_from_matrix_rejects_non_rotation(self):
        bad = np.eye(3, 4)
        bad[0, 0] = 1.5
        with pytest.raises(ValueError, match="invalid rotation"):
            RigidTransform.from_matrix(bad)

    def test_from_matrix_rejects_reflection(self):
        m = np.eye(3, 4)
        m[2, 2] = -1.0
        with pytest.raises(ValueError, match="invalid rotation"):
            RigidTransform.from_matrix(m)

    def test_quaternion_always_unit(self):
        T = RigidTransform(np.array([2.0, 0.0, 0.0, 0.0]), np.zeros(3))
        assert abs(np.linalg.norm(T.quaternion) - 1.0) <= 1e-9


class TestRotateNormals:
    def _map(self, n):
        return NormalMap(np.asarray(n, float).reshape(1, 1, 3), np.ones((1, 1), bool))

    def test_identity(self):
        nm = self._map([0.0, 0.0, 1.0])
        out = rotate_normals(nm, RigidTransform.identity())
        assert np.array_equal(out.normals, nm.normals)

    def test_translation_ignored(self):
        nm = self._map([0.0, 1.0, 0.0])
        T = RigidTransform(np.array([1.0, 0, 0, 0]), np.array([5.0, -2.0, 1.0]))
        out = rotate_normals(nm, T)
        np.testing.assert_array_equal(out.normals[0, 0], [0.0, 1.0, 0.0])

    def test_half_turn_about_x(self):
        T = se3_exp([math.pi, 0.0, 0.0, 0.0, 0.0, 0.0])
        out = rotate_normals(self._map([0.0, 0.0, 1.0]), T)
        np.testing.assert_allclose(out.normals[0, 0], [0.0, 0.0, -1.0], atol=1e-12)

    def test_preserves_norm_and_angles(self):
        rng = np.random.default_rng(8)
        vecs = rng.normal(size=(30, 3))
        vecs /= np.linalg.norm(vecs, axis=1, keepdims=True)
        nm = NormalMap(vecs.reshape(1, 30, 3), np.ones((1, 30), bool))
        gram0 = vecs @ vecs.T
        for _ in range(10):
            out = rotate_normals(nm, _rand_pose(rng)).normals.reshape(30, 3)
            assert np.abs(np.linalg.norm(out, axis=1) - 1.0).max() <= 1e-9
            assert np.abs(out @ out.T - gram0).max() <= 1e-9


class TestSe3:
    def test_exp_zero_is_identity(self):
        T = se3_exp(np.zeros(6))
        assert np.array_equal(T.quaternion, [1.0, 0.0, 0.0, 0.0])
        assert np.array_equal(T.translation, np.zeros(3))

    def test_exp_quarter_turn(self):
        T = se3_exp([0.0, 0.0, math.pi / 2, 0.0, 0.0, 0.0])
        np.testing.assert_allclose(T.rotation_matrix,
                                   [[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]],
                                   atol=1e-12)
        assert np.array_equal(T.translation, np.zeros(3))

    def test_log_near_pi_errors(self):
        T = se3_exp([math.pi - 1e-9, 0.0, 0.0, 0.0, 0.0, 0.0])
        with pytest.raises(ValueError, match="log singularity"):
            se3_log(T)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(min_value=0, max_value=10_000))
    def test_log_exp_roundtrip(self, seed):
        rng = np.random.default_rng(seed)
        w = rng.normal(size=3)
        w *= rng.uniform(0.0, 3.0) / np.linalg.norm(w)
        xi = np.concatenate([w, rng.uniform(-10, 10, 3)])
        assert np.abs(se3_log(se3_exp(xi)) - xi).max() <= 1e-9

    def test_small_angle_branch(self):
        xi = np.array([1e-10, -2e-10, 1e-10, 0.5, -0.25, 1.0])
        assert np.abs(se3_log(se3_exp(xi)) - xi).max() <= 1e-15
