"""Per-frame tracker features and temporal window assembly."""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, HistoryError, InvalidInputError, SequencingError
from .rotmath import IDENTITY_6D, matrix_to_rot6d, relative_rotation

TRACKERS = ("head", "left", "right")
FEATURE_DIM = 54
_PER_JOINT = 18


@dataclass(frozen=True)
class TrackedFrame:
    """One instant of sensor readings.

    ``positions`` is (3, 3): one row per tracker in head/left/right order,
    meters. ``rotations`` is (3, 3, 3): a world-frame rotation matrix per
    tracker. ``t`` is the frame index at the stream's fixed rate.
    """

    t: int
    positions: np.ndarray
    rotations: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=np.float64)
        R = np.asarray(self.rotations, dtype=np.float64)
        if p.shape != (3, 3) or R.shape != (3, 3, 3):
            raise InvalidInputError(f"bad tracker shapes {p.shape}, {R.shape}")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "rotations", R)


@dataclass(frozen=True)
class FeatureWindowSet:
    """Current window plus ``K`` past windows, each (T, 54).

    ``past[0]`` is the window immediately preceding ``current``.
    """

    current: np.ndarray
    past: tuple

    @property
    def T(self):
        return self.current.shape[-2]

    @property
    def K(self):
        return len(self.past)


def frame_features(prev, cur):
    """54-dim feature vector for ``cur``; ``prev`` may be None at stream start.

    Per tracker the layout is [position(3), rot6d(6), velocity(3), rel-rot6d(6)].
    """
    if prev is not None and prev.t != cur.t - 1:
        raise SequencingError(f"frames {prev.t} and {cur.t} are not consecutive")
    out = np.empty(FEATURE_DIM, dtype=np.float64)
    for j in range(3):
        o = j * _PER_JOINT
        out[o : o + 3] = cur.positions[j]
        out[o + 3 : o + 9] = matrix_to_rot6d(cur.rotations[j])
        if prev is None:
            out[o + 9 : o + 12] = 0.0
            out[o + 12 : o + 18] = IDENTITY_6D
        else:
            out[o + 9 : o + 12] = cur.positions[j] - prev.positions[j]
            out[o + 12 : o + 18] = matrix_to_rot6d(relative_rotation(prev.rotations[j], cur.rotations[j]))
    return out


def featurize_stream(frames):
    """Feature matrix (F, 54) for a whole tracker stream."""
    rows, prev = [], None
    for frame in frames:
        rows.append(frame_features(prev, frame))
        prev = frame
    return np.stack(rows) if rows else np.zeros((0, FEATURE_DIM))


def window_ranges(t, T, K):
    """Inclusive (start, end) frame ranges: current first, then past k = 1..K."""
    return [(t - (k + 1) * T + 1, t - k * T) for k in range(K + 1)]


def earliest_frame(T, K):
    return T * (K + 1) - 1


def build_window_set(stream, t, T, K, pad=False):
    """Slice the current and ``K`` past windows ending at frame ``t``.

    Windows are contiguous and do not overlap. With ``pad`` set, indices
    before the first frame repeat frame 0.
    """
    if T < 2 or K < 0:
        raise ContractError(f"need T >= 2 and K >= 0, got T={T}, K={K}")
    stream = np.asarray(stream)
    if not 0 <= t < len(stream):
        raise HistoryError(f"frame {t} outside stream of length {len(stream)}")
    if t < earliest_frame(T, K) and not pad:
        raise HistoryError(f"frame {t} has too little history for T={T}, K={K}")
    windows = []
    for start, end in window_ranges(t, T, K):
        if start >= 0:
            windows.append(stream[start : end + 1])
        else:
            idx = np.clip(np.arange(start, end + 1), 0, None)
            windows.append(stream[idx])
    return FeatureWindowSet(current=windows[0], past=tuple(windows[1:]))
