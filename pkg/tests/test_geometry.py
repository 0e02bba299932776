import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rs_selfcal.errors import CheiralityViolation, DegenerateConfiguration
from rs_selfcal.geometry import (Intrinsics, Pose, Similarity, axis_angle_from_rotation,
                                 camera_to_world, is_rotation, pinhole_normalize,
                                 project_to_rotation, rotate_by_axis_angle,
                                 rotation_angle, rotation_from_axis_angle,
                                 similarity_align, skew_symmetric, world_to_camera)

from conftest import random_rotation

vec3 = st.lists(st.floats(-3.0, 3.0), min_size=3, max_size=3).map(np.array)


def test_skew_matches_cross_product(rng):
    a, b = rng.normal(size=(2, 3))
    np.testing.assert_allclose(skew_symmetric(a) @ b, np.cross(a, b), atol=1e-15)


def test_rotation_about_z_by_quarter_turn():
    R = rotation_from_axis_angle([0, 0, np.pi / 2])
    np.testing.assert_allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_zero_and_tiny_angles_are_accurate():
    np.testing.assert_array_equal(rotation_from_axis_angle(np.zeros(3)), np.eye(3))
    w = np.array([1e-10, -2e-10, 3e-10])
    np.testing.assert_allclose(rotation_from_axis_angle(w), np.eye(3) + skew_symmetric(w), atol=1e-19)


@settings(max_examples=200, deadline=None)
@given(vec3)
def test_rodrigues_is_a_rotation_and_inverts(w):
    R = rotation_from_axis_angle(w)
    assert is_rotation(R, tol=1e-12)
    angle = np.linalg.norm(w)
    if angle < np.pi - 1e-6:
        np.testing.assert_allclose(axis_angle_from_rotation(R), w, atol=1e-9)
    assert rotation_angle(R) == pytest.approx(min(angle, 2 * np.pi - angle), abs=1e-9)


def test_log_near_pi(rng):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    w = axis * (np.pi - 1e-9)
    R = rotation_from_axis_angle(w)
    np.testing.assert_allclose(rotation_from_axis_angle(axis_angle_from_rotation(R)), R, atol=1e-8)


def test_rotate_by_axis_angle_vectorized(rng):
    w = rng.normal(size=(20, 3))
    x = rng.normal(size=(20, 3))
    expect = np.array([rotation_from_axis_angle(a) @ b for a, b in zip(w, x)])
    np.testing.assert_allclose(rotate_by_axis_angle(w, x), expect, atol=1e-13)


def test_project_to_rotation(rng):
    R = random_rotation(rng)
    noisy = R + 1e-4 * rng.normal(size=(3, 3))
    Q = project_to_rotation(noisy)
    assert is_rotation(Q)
    assert rotation_angle(Q @ R.T) < 1e-3


def test_world_camera_round_trip(rng):
    pose = Pose(random_rotation(rng), rng.normal(size=3))
    X = rng.normal(size=(5, 3))
    np.testing.assert_allclose(camera_to_world(pose, world_to_camera(pose, X)), X, atol=1e-14)
    np.testing.assert_allclose(world_to_camera(pose, pose.p), 0, atol=1e-15)


def test_pinhole_rejects_points_behind():
    np.testing.assert_allclose(pinhole_normalize([2.0, 4.0, 2.0]), [1.0, 2.0])
    with pytest.raises(CheiralityViolation):
        pinhole_normalize([[0, 0, 1.0], [0, 0, -1.0]])


def test_intrinsics_matrix():
    K = Intrinsics(500.0, 320.0, 240.0)
    np.testing.assert_array_equal(K.matrix, [[500, 0, 320], [0, 500, 240], [0, 0, 1]])
    with pytest.raises(ValueError):
        Intrinsics(0.0)


def test_similarity_align_recovers_transform(rng):
    src = rng.normal(size=(30, 3))
    T = Similarity(2.5, random_rotation(rng), rng.normal(size=3))
    est = similarity_align(src, T(src))
    assert est.scale == pytest.approx(2.5, rel=1e-12)
    np.testing.assert_allclose(est.rotation, T.rotation, atol=1e-12)
    np.testing.assert_allclose(est(src), T(src), atol=1e-12)
    np.testing.assert_allclose(est.inverse()(T(src)), src, atol=1e-12)


def test_similarity_align_reflection_guard(rng):
    src = rng.normal(size=(10, 3))
    dst = src * np.array([1, 1, -1])      # a mirror image; best fit must still be proper
    assert np.linalg.det(similarity_align(src, dst).rotation) > 0


def test_similarity_align_degenerate():
    with pytest.raises(DegenerateConfiguration):
        similarity_align(np.zeros((2, 3)), np.zeros((2, 3)))
    line = np.outer(np.arange(5.0), [1, 2, 3])
    with pytest.raises(DegenerateConfiguration):
        similarity_align(line, line)


def test_similarity_apply_to_pose_keeps_projections(rng):
    pose = Pose(random_rotation(rng), rng.normal(size=3))
    T = Similarity(0.7, random_rotation(rng), rng.normal(size=3))
    X = pose.p + pose.R.T @ [0.1, -0.2, 4.0]
    a = pinhole_normalize(world_to_camera(pose, X))
    b = pinhole_normalize(world_to_camera(T.apply_to_pose(pose), T(X)))
    np.testing.assert_allclose(a, b, atol=1e-12)
