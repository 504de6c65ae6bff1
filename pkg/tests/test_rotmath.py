import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import quat_angle_deg, quat_from_axis_angle, quat_to_matrix, random_rotation
from twmlp.errors import DegenerateRotationError, InvalidInputError
from twmlp.rotmath import (
    IDENTITY_6D,
    axis_angle_to_matrix,
    geodesic_angle_deg,
    matrix_to_axis_angle,
    matrix_to_rot6d,
    relative_rotation,
    rot6d_to_matrix,
)

finite = st.floats(-3.0, 3.0, allow_nan=False, allow_infinity=False)
axis_angles = arrays(np.float64, 3, elements=finite)


@given(axis_angles)
def test_rodrigues_matches_quaternion(a):
    np.testing.assert_allclose(axis_angle_to_matrix(a), quat_to_matrix(quat_from_axis_angle(a)), atol=1e-12)


def test_zero_rotation_is_exact_identity():
    assert np.array_equal(axis_angle_to_matrix(np.zeros(3)), np.eye(3))


def test_small_angle_branch():
    a = np.array([3e-8, -2e-8, 1e-8])
    np.testing.assert_allclose(axis_angle_to_matrix(a), quat_to_matrix(quat_from_axis_angle(a)), atol=1e-15)


def test_batched_shapes():
    rng = np.random.default_rng(0)
    a = rng.normal(size=(4, 5, 3))
    R = axis_angle_to_matrix(a)
    assert R.shape == (4, 5, 3, 3)
    np.testing.assert_allclose(R[2, 3], axis_angle_to_matrix(a[2, 3]))


def test_non_finite_axis_angle_rejected():
    with pytest.raises(InvalidInputError):
        axis_angle_to_matrix(np.array([np.nan, 0.0, 0.0]))


@given(axis_angles)
def test_axis_angle_round_trip_as_rotation(a):
    back = matrix_to_axis_angle(axis_angle_to_matrix(a))
    assert quat_angle_deg(quat_from_axis_angle(a), quat_from_axis_angle(back)) < 1e-5


def test_axis_angle_near_pi():
    for axis in (np.array([1.0, 0, 0]), np.array([0, 1.0, 1.0]) / np.sqrt(2), np.array([0.3, -0.4, 0.866])):
        axis = axis / np.linalg.norm(axis)
        a = axis * (np.pi - 1e-6)
        back = matrix_to_axis_angle(axis_angle_to_matrix(a))
        np.testing.assert_allclose(axis_angle_to_matrix(back), axis_angle_to_matrix(a), atol=1e-6)


def test_rot6d_round_trip_on_rotations():
    rng = np.random.default_rng(1)
    R = np.stack([random_rotation(rng) for _ in range(200)])
    np.testing.assert_allclose(rot6d_to_matrix(matrix_to_rot6d(R)), R, atol=1e-12)


def test_identity_6d():
    np.testing.assert_array_equal(matrix_to_rot6d(np.eye(3)), IDENTITY_6D)
    np.testing.assert_array_equal(IDENTITY_6D, [1, 0, 0, 0, 1, 0])


@settings(max_examples=200)
@given(arrays(np.float64, 6, elements=st.floats(-10, 10, allow_nan=False)))
def test_decode_is_always_a_rotation(r):
    a, b = r[:3], r[3:]
    na = np.linalg.norm(a)
    if na < 1e-3 or np.linalg.norm(np.cross(a / na, b)) < 1e-3:
        return
    R = rot6d_to_matrix(r)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-10)
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-10)
    # first row keeps the direction of the first encoded vector
    np.testing.assert_allclose(R[0], a / na, atol=1e-12)


def test_decode_degenerate_inputs():
    with pytest.raises(DegenerateRotationError):
        rot6d_to_matrix(np.zeros(6))
    with pytest.raises(DegenerateRotationError):
        rot6d_to_matrix(np.array([1.0, 0, 0, 2.0, 0, 0]))
    with pytest.raises(DegenerateRotationError):
        rot6d_to_matrix(np.array([1.0, 0, 0, 0, 0, 0]))


def test_relative_rotation_composes_back():
    rng = np.random.default_rng(2)
    A, B = random_rotation(rng), random_rotation(rng)
    np.testing.assert_allclose(A @ relative_rotation(A, B), B, atol=1e-12)
    np.testing.assert_allclose(relative_rotation(A, A), np.eye(3), atol=1e-12)


def test_geodesic_angle_against_quaternions():
    rng = np.random.default_rng(3)
    for _ in range(50):
        a, b = rng.normal(size=3), rng.normal(size=3)
        got = geodesic_angle_deg(axis_angle_to_matrix(a), axis_angle_to_matrix(b))
        assert got == pytest.approx(quat_angle_deg(quat_from_axis_angle(a), quat_from_axis_angle(b)), abs=1e-5)


def test_geodesic_angle_edges():
    assert geodesic_angle_deg(np.eye(3), np.eye(3)) == 0.0
    flip = axis_angle_to_matrix(np.array([0.0, np.pi, 0.0]))
    assert geodesic_angle_deg(np.eye(3), flip) == pytest.approx(180.0)


def z_rot(deg):
    return quat_to_matrix(quat_from_axis_angle(np.array([0.0, 0.0, np.radians(deg)])))


def test_known_rotations():
    np.testing.assert_allclose(axis_angle_to_matrix([0, 0, np.pi / 2]), [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)
    np.testing.assert_allclose(axis_angle_to_matrix([np.pi, 0, 0]), np.diag([1.0, -1, -1]), atol=1e-15)
    np.testing.assert_allclose(matrix_to_rot6d(z_rot(90)), [0, -1, 0, 1, 0, 0], atol=1e-15)
    np.testing.assert_allclose(rot6d_to_matrix([2.0, 0, 0, 0, 3.0, 0]), np.eye(3))
    np.testing.assert_allclose(relative_rotation(z_rot(30), z_rot(90)), z_rot(60), atol=1e-12)
    rng = np.random.default_rng(4)
    R = random_rotation(rng)
    np.testing.assert_allclose(relative_rotation(np.eye(3), R), R)
    assert geodesic_angle_deg(np.eye(3), z_rot(90)) == pytest.approx(90.0)


def test_geodesic_angle_small_rotations_are_resolved():
    for angle in (1e-9, 1e-6, 1e-3):
        R = axis_angle_to_matrix(np.array([0.0, angle, 0.0]))
        assert geodesic_angle_deg(np.eye(3), R) == pytest.approx(np.degrees(angle), rel=1e-6)
