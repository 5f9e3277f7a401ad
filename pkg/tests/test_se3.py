import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from teacharm.se3 import (FrameChainError, FrameTransform, Pose,
                          matrix_to_quat, orientation_error, quat_from_axis_angle,
                          quat_mul, quat_normalize, quat_rotate, quat_slerp,
                          quat_to_matrix, rotation_error_matrix)


def random_quat(rng):
    q = rng.normal(size=4)
    return quat_normalize(q)


def to_scipy(q):
    # scipy uses [x, y, z, w]
    return Rotation.from_quat([q[1], q[2], q[3], q[0]])


def test_quat_mul_matches_scipy():
    rng = np.random.default_rng(1)
    for _ in range(50):
        a, b = random_quat(rng), random_quat(rng)
        ours = quat_to_matrix(quat_mul(a, b))
        ref = (to_scipy(a) * to_scipy(b)).as_matrix()
        assert np.allclose(ours, ref, atol=1e-12)


def test_quat_rotate_matches_matrix():
    rng = np.random.default_rng(2)
    for _ in range(50):
        q = random_quat(rng)
        v = rng.normal(size=3)
        assert np.allclose(quat_rotate(q, v), quat_to_matrix(q) @ v, atol=1e-12)


def test_matrix_quat_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(100):
        q = random_quat(rng)
        q2 = matrix_to_quat(quat_to_matrix(q))
        assert np.allclose(q, q2, atol=1e-9) or np.allclose(q, -q2, atol=1e-9)


def test_slerp_quarter_turn():
    qa = quat_from_axis_angle(np.array([0, 0, 1.0]), 0.0)
    qb = quat_from_axis_angle(np.array([0, 0, 1.0]), np.pi / 2)
    mid = quat_slerp(qa, qb, 0.5)
    expected = quat_from_axis_angle(np.array([0, 0, 1.0]), np.pi / 4)
    assert np.allclose(mid, expected, atol=1e-12)
    assert abs(np.linalg.norm(mid) - 1.0) < 1e-12


def test_orientation_error_small_and_large():
    rng = np.random.default_rng(4)
    for _ in range(50):
        q = random_quat(rng)
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        angle = rng.uniform(-3.0, 3.0)
        delta = quat_from_axis_angle(axis, angle)
        goal = quat_mul(delta, q)
        err = orientation_error(goal, q)
        want = axis * angle
        # minimal representation folds to the short way around
        if angle > np.pi:
            want = axis * (angle - 2 * np.pi)
        if angle < -np.pi:
            want = axis * (angle + 2 * np.pi)
        assert np.allclose(err, want, atol=1e-9)


def test_rotation_error_matrix_agrees_with_quaternion_path():
    rng = np.random.default_rng(5)
    for _ in range(100):
        qa, qb = random_quat(rng), random_quat(rng)
        e1 = orientation_error(qa, qb)
        e2 = rotation_error_matrix(quat_to_matrix(qa), quat_to_matrix(qb))
        assert np.allclose(e1, e2, atol=1e-8)


def test_pose_validation():
    with pytest.raises(ValueError):
        Pose(np.zeros(3), np.array([1.0, 0.1, 0.0, 0.0]))  # not unit
    with pytest.raises(ValueError):
        Pose(np.array([np.nan, 0, 0]))


def test_frame_transform_compose_and_inverse():
    rng = np.random.default_rng(6)
    t_ab = FrameTransform(random_quat(rng), rng.normal(size=3), "a", "b")
    t_bc = FrameTransform(random_quat(rng), rng.normal(size=3), "b", "c")
    p = rng.normal(size=3)
    via = t_bc.apply(t_ab.apply(p))
    direct = t_bc.compose(t_ab).apply(p)
    assert np.allclose(via, direct, atol=1e-12)
    back = t_ab.inverse().apply(t_ab.apply(p))
    assert np.allclose(back, p, atol=1e-12)


def test_frame_chain_mismatch_rejected():
    t_ab = FrameTransform.identity("a", "b")
    t_cd = FrameTransform.identity("c", "d")
    with pytest.raises(FrameChainError):
        t_cd.compose(t_ab)
