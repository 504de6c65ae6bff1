import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import brute_force_windows, random_rotation
from twmlp.errors import ContractError, HistoryError, InvalidInputError, SequencingError
from twmlp.featurize import (
    FEATURE_DIM,
    TrackedFrame,
    build_window_set,
    earliest_frame,
    featurize_stream,
    frame_features,
    window_ranges,
)
from twmlp.rotmath import IDENTITY_6D, matrix_to_rot6d

EYE3 = np.tile(np.eye(3), (3, 1, 1))


def frame(t, positions=None, rotations=None):
    return TrackedFrame(t, np.zeros((3, 3)) if positions is None else positions, EYE3 if rotations is None else rotations)


def test_static_frame():
    a = frame(0, np.arange(9.0).reshape(3, 3))
    f = frame_features(a, frame(1, a.positions))
    for j in range(3):
        block = f[18 * j : 18 * (j + 1)]
        np.testing.assert_array_equal(block[9:12], 0.0)
        np.testing.assert_array_equal(block[12:18], IDENTITY_6D)


def test_head_moves():
    a = frame(0)
    p = np.zeros((3, 3))
    p[0, 0] = 0.1
    f = frame_features(a, frame(1, p))
    np.testing.assert_allclose(f[0:3], [0.1, 0, 0])
    np.testing.assert_array_equal(f[3:9], IDENTITY_6D)
    np.testing.assert_allclose(f[9:12], [0.1, 0, 0])
    np.testing.assert_array_equal(f[12:18], IDENTITY_6D)
    np.testing.assert_array_equal(f[18:], frame_features(a, frame(1))[18:])


def test_first_frame_has_zero_velocity():
    f = frame_features(None, frame(0, np.ones((3, 3))))
    assert f.shape == (FEATURE_DIM,)
    np.testing.assert_array_equal(f[9:12], 0.0)


def test_relative_rotation_block():
    rng = np.random.default_rng(0)
    R0 = np.stack([random_rotation(rng) for _ in range(3)])
    R1 = np.stack([random_rotation(rng) for _ in range(3)])
    f = frame_features(frame(4, rotations=R0), frame(5, rotations=R1))
    for j in range(3):
        np.testing.assert_allclose(f[18 * j + 3 : 18 * j + 9], matrix_to_rot6d(R1[j]))
        np.testing.assert_allclose(f[18 * j + 12 : 18 * j + 18], matrix_to_rot6d(R0[j].T @ R1[j]))


def test_non_consecutive_frames_rejected():
    with pytest.raises(SequencingError):
        frame_features(frame(0), frame(2))


def test_bad_tracker_shapes():
    with pytest.raises(InvalidInputError):
        TrackedFrame(0, np.zeros((2, 3)), EYE3)


def test_featurize_stream_rows():
    frames = [frame(i, np.full((3, 3), float(i))) for i in range(5)]
    X = featurize_stream(frames)
    assert X.shape == (5, FEATURE_DIM)
    np.testing.assert_array_equal(X[3], frame_features(frames[2], frames[3]))


def test_window_indices_t12():
    stream = np.arange(20)[:, None] * np.ones((1, 2))
    w = build_window_set(stream, 12, 4, 2)
    np.testing.assert_array_equal(w.current[:, 0], [9, 10, 11, 12])
    np.testing.assert_array_equal(w.past[0][:, 0], [5, 6, 7, 8])
    np.testing.assert_array_equal(w.past[1][:, 0], [1, 2, 3, 4])


@given(st.integers(2, 9), st.integers(0, 4), st.integers(0, 30))
def test_windows_match_enumeration(T, K, extra):
    t = earliest_frame(T, K) + extra
    stream = np.arange(t + 5)[:, None].astype(float)
    w = build_window_set(stream, t, T, K)
    expected = brute_force_windows(t, T, K)
    got = [w.current[:, 0].astype(int).tolist()] + [p[:, 0].astype(int).tolist() for p in w.past]
    assert got == expected
    assert window_ranges(t, T, K) == [(c[0], c[-1]) for c in expected]
    # contiguous and non-overlapping
    flat = sorted(sum(got, []))
    assert flat == list(range(t - (K + 1) * T + 1, t + 1))


def test_k0_current_only():
    w = build_window_set(np.zeros((10, 3)), 5, 3, 0)
    assert w.K == 0 and w.T == 3


def test_history_boundary():
    T, K = 4, 2
    stream = np.zeros((30, 3))
    build_window_set(stream, earliest_frame(T, K), T, K)
    with pytest.raises(HistoryError):
        build_window_set(stream, earliest_frame(T, K) - 1, T, K)
    with pytest.raises(HistoryError):
        build_window_set(stream, 30, T, K)


def test_padding_repeats_first_frame():
    stream = np.arange(6)[:, None].astype(float)
    w = build_window_set(stream, 2, 3, 1, pad=True)
    np.testing.assert_array_equal(w.current[:, 0], [0, 1, 2])
    np.testing.assert_array_equal(w.past[0][:, 0], [0, 0, 0])


def test_window_length_must_be_two():
    with pytest.raises(ContractError):
        build_window_set(np.zeros((10, 3)), 5, 1, 0)
