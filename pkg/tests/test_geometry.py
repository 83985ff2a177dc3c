import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from toolforge.errors import ValidationError
from toolforge.geometry import (
    KEYPOINT_SIGNS,
    REWARD_KEYPOINT_SCALES,
    Pose,
    compose,
    invert,
    keypoint_distance,
    keypoint_offsets,
    keypoints_world,
    matrix_to_quat,
    quat_from_axis_angle,
    quat_mul,
    quat_to_matrix,
    quat_to_rotvec,
    quat_from_rotvec,
    random_rotation,
)

finite = st.floats(-2.0, 2.0, allow_nan=False)
angles = st.floats(-math.pi, math.pi, allow_nan=False)


@st.composite
def poses(draw):
    t = [draw(finite) for _ in range(3)]
    axis = np.array([draw(finite) for _ in range(3)])
    if np.linalg.norm(axis) < 1e-3:
        axis = np.array([0.0, 0.0, 1.0])
    return Pose(t, quat_from_axis_angle(axis, draw(angles)))


def H(pose):
    return pose.as_matrix()


def test_compose_identity_and_inverse():
    p = Pose([0.3, -0.2, 0.1], quat_from_axis_angle([1, 2, 3], 0.7))
    assert compose(p, Pose.identity()).allclose(p)
    assert compose(p, invert(p)).allclose(Pose.identity())
    assert compose(invert(p), p).allclose(Pose.identity())


def test_compose_matches_matrix_oracle():
    a = Pose.from_translation([1.0, 0.0, 0.0])
    b = Pose.from_axis_angle([0, 0, 1], math.pi / 2)
    expected = np.array([[0, -1, 0, 1], [1, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], dtype=float)
    assert np.allclose(compose(a, b).as_matrix(), expected, atol=1e-12)
    assert np.allclose(compose(a, b).as_matrix(), H(a) @ H(b), atol=1e-12)


@given(poses(), poses(), poses())
def test_compose_associative_and_matrix_consistent(a, b, c):
    left = compose(compose(a, b), c)
    right = compose(a, compose(b, c))
    assert left.allclose(right, atol=1e-9)
    assert np.allclose(left.as_matrix(), H(a) @ H(b) @ H(c), atol=1e-9)
    assert abs(np.linalg.norm(left.rotation) - 1.0) < 1e-9


def test_non_finite_rejected():
    with pytest.raises(ValidationError):
        Pose([np.nan, 0, 0], [1, 0, 0, 0])
    with pytest.raises(ValidationError):
        Pose([0, 0, 0], [np.inf, 0, 0, 0])
    with pytest.raises(ValidationError):
        Pose.from_list([0, 0, 0, 1, 0, 0])


def test_pose_list_round_trip():
    p = Pose([0.1, 0.2, 0.3], quat_from_axis_angle([0, 1, 0], 0.4))
    assert Pose.from_list(p.to_list()).allclose(p, atol=0)


def test_quaternion_matrix_round_trip(rng):
    for _ in range(200):
        q = random_rotation(rng)
        q2 = matrix_to_quat(quat_to_matrix(q))
        assert min(np.abs(q - q2).max(), np.abs(q + q2).max()) < 1e-12
        rv = quat_to_rotvec(q)
        assert np.allclose(quat_to_matrix(quat_from_rotvec(rv)), quat_to_matrix(q), atol=1e-10)


def test_keypoint_first_point_identity():
    pts = keypoints_world(Pose.identity(), REWARD_KEYPOINT_SCALES)
    assert pts.shape == (4, 3)
    assert np.allclose(pts[0], [0.07, 0.015, 0.015], atol=1e-15)
    assert KEYPOINT_SIGNS.tolist() == [[1, 1, 1], [1, 1, -1], [-1, -1, 1], [-1, -1, -1]]


def test_keypoints_translation_equivariant():
    t = np.array([0.4, -0.1, 0.9])
    base = keypoints_world(Pose.identity())
    assert np.allclose(keypoints_world(Pose.from_translation(t)), base + t, atol=1e-15)


def test_keypoints_yaw_180_rotation_matrix_oracle():
    pose = Pose.from_axis_angle([0, 0, 1], math.pi)
    R = np.diag([-1.0, -1.0, 1.0])
    expected = keypoint_offsets(REWARD_KEYPOINT_SCALES) @ R.T
    assert np.allclose(keypoints_world(pose), expected, atol=1e-12)


def test_keypoint_scales_validated():
    with pytest.raises(ValidationError):
        keypoint_offsets([0.1, 0.0, 0.1])


def test_distance_closed_forms():
    ident = Pose.identity()
    assert keypoint_distance(ident, ident) == 0.0
    yaw = Pose.from_axis_angle([0, 0, 1], math.pi)
    roll = Pose.from_axis_angle([1, 0, 0], math.pi)
    assert abs(keypoint_distance(ident, yaw) - math.hypot(0.14, 0.03)) < 1e-12
    assert abs(keypoint_distance(ident, roll) - math.hypot(0.03, 0.03)) < 1e-12


@given(poses(), st.lists(finite, min_size=3, max_size=3))
def test_translation_distance_is_norm(a, t):
    b = Pose(a.translation + np.array(t), a.rotation)
    assert abs(keypoint_distance(a, b) - np.linalg.norm(t)) < 1e-12


@given(poses(), poses(), poses())
def test_distance_metric_properties(a, b, c):
    dab, dba = keypoint_distance(a, b), keypoint_distance(b, a)
    assert dab >= 0
    assert abs(dab - dba) < 1e-12
    assert keypoint_distance(a, c) <= dab + keypoint_distance(b, c) + 1e-12


@given(poses(), poses(), poses())
def test_distance_left_invariant(T, a, b):
    assert abs(keypoint_distance(compose(T, a), compose(T, b)) - keypoint_distance(a, b)) < 1e-9


@given(st.floats(1e-6, math.pi))
def test_roll_never_exceeds_yaw(theta):
    ident = Pose.identity()
    roll = keypoint_distance(ident, Pose.from_axis_angle([1, 0, 0], theta))
    yaw = keypoint_distance(ident, Pose.from_axis_angle([0, 0, 1], theta))
    assert roll < yaw


def test_random_rotation_deterministic_and_unit():
    a = random_rotation(np.random.default_rng(5))
    b = random_rotation(np.random.default_rng(5))
    assert np.array_equal(a, b)
    rng = np.random.default_rng(0)
    for _ in range(1000):
        assert abs(np.linalg.norm(random_rotation(rng)) - 1.0) < 1e-9


def test_random_rotation_uniform_mean_matrix():
    # for Haar-uniform rotations E[R] = 0 entrywise
    rng = np.random.default_rng(11)
    R = np.zeros((3, 3))
    n = 100_000
    for _ in range(n):
        R += quat_to_matrix(random_rotation(rng))
    assert np.abs(R / n).max() < 0.02


def test_random_rotation_angle_distribution():
    # rotation angle density of a uniform rotation is (1 - cos t) / pi; its mean is pi/2 + 2/pi
    rng = np.random.default_rng(3)
    angles = [2 * math.acos(min(abs(random_rotation(rng)[0]), 1.0)) for _ in range(20000)]
    assert abs(np.mean(angles) - (math.pi / 2 + 2 / math.pi)) < 0.02


def test_quat_mul_matches_matrix_product(rng):
    a, b = random_rotation(rng), random_rotation(rng)
    assert np.allclose(quat_to_matrix(quat_mul(a, b)), quat_to_matrix(a) @ quat_to_matrix(b), atol=1e-12)
