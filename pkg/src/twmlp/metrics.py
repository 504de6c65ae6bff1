"""Evaluation metrics on predicted vs ground-truth pose sequences.

Position metrics run forward kinematics with each sequence's own root
translation, so callers must fill ``PoseSequence.root`` (the evaluator
anchors it to the tracked head).
"""

import json
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ContractError, ShapeError
from .kinematics import NUM_JOINTS, forward_kinematics
from .rotmath import geodesic_angle_deg, rot6d_to_matrix

DEFAULT_FPS = 60

PARTS = {
    "root": (0,),
    "hand": (20, 21),
    "upper": (3, 6, 9, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21),
    "lower": (1, 2, 4, 5, 7, 8, 10, 11),
}

UNITS = {
    "mpjre": "deg",
    "mpjpe": "cm",
    "mpjve": "cm/s",
    "jitter": "1e2 m/s^3",
    "root_pe": "cm",
    "hand_pe": "cm",
    "upper_pe": "cm",
    "lower_pe": "cm",
    "frames": "count",
    "fps": "Hz",
}


@dataclass
class MetricsReport:
    mpjre: float
    mpjpe: float
    mpjve: float
    jitter: float
    root_pe: float
    hand_pe: float
    upper_pe: float
    lower_pe: float
    frames: int
    fps: float

    def to_text(self):
        return "".join(f"{name}\t{value!r}\t{UNITS[name]}\n" for name, value in asdict(self).items())

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=False)

    def write(self, stem):
        """Write ``stem.txt`` and ``stem.json``."""
        with open(f"{stem}.txt", "w") as f:
            f.write(self.to_text())
        with open(f"{stem}.json", "w") as f:
            f.write(self.to_json() + "\n")


def _local_rotations(seq):
    r = np.asarray(seq.rot6d, dtype=np.float64).reshape(len(seq), NUM_JOINTS, 6)
    return rot6d_to_matrix(r)


def global_positions(seq, tree):
    """FK positions (T, 22, 3) in meters using the sequence's root translation."""
    if seq.root is None:
        raise ContractError("pose sequence has no root translation; recover it first")
    pos, _ = forward_kinematics(_local_rotations(seq), seq.root, tree)
    return pos


def _pair(pred, gt):
    if pred.rot6d.shape != gt.rot6d.shape:
        raise ShapeError(f"sequences differ in shape: {pred.rot6d.shape} vs {gt.rot6d.shape}")


def mpjre(pred, gt):
    _pair(pred, gt)
    return float(np.mean(geodesic_angle_deg(_local_rotations(pred), _local_rotations(gt))))


def position_error(pred_pos, gt_pos, joints=None):
    """Mean Euclidean distance in cm over frames and the selected joints."""
    if joints is not None:
        if len(joints) == 0:
            raise ContractError("empty joint selection")
        pred_pos, gt_pos = pred_pos[:, list(joints)], gt_pos[:, list(joints)]
    return float(np.mean(np.linalg.norm(pred_pos - gt_pos, axis=-1)) * 100.0)


def velocity_error(pred_pos, gt_pos, fps):
    if len(pred_pos) < 2:
        raise ContractError("velocity error needs at least 2 frames")
    dv = (np.diff(pred_pos, axis=0) - np.diff(gt_pos, axis=0)) * fps
    return float(np.mean(np.linalg.norm(dv, axis=-1)) * 100.0)


def jerk_magnitude(pos, fps):
    """Mean |third difference| * fps^3 over joints and frames, in 1e2 m/s^3."""
    if len(pos) < 4:
        raise ContractError("jitter needs at least 4 frames")
    jerk = np.diff(pos, n=3, axis=0) * float(fps) ** 3
    return float(np.mean(np.linalg.norm(jerk, axis=-1)) / 100.0)


def mpjpe(pred, gt, tree):
    _pair(pred, gt)
    return position_error(global_positions(pred, tree), global_positions(gt, tree))


def mpjve(pred, gt, tree, fps=DEFAULT_FPS):
    _pair(pred, gt)
    return velocity_error(global_positions(pred, tree), global_positions(gt, tree), fps)


def jitter(seq, tree, fps=DEFAULT_FPS):
    return jerk_magnitude(global_positions(seq, tree), fps)


def part_pe(pred, gt, tree, part):
    joints = PARTS[part] if isinstance(part, str) else tuple(part)
    _pair(pred, gt)
    return position_error(global_positions(pred, tree), global_positions(gt, tree), joints)


def evaluate_sequences(pred, gt, tree, fps=DEFAULT_FPS):
    """Full report for one aligned pair of sequences."""
    _pair(pred, gt)
    pp, gp = global_positions(pred, tree), global_positions(gt, tree)
    return MetricsReport(
        mpjre=mpjre(pred, gt),
        mpjpe=position_error(pp, gp),
        mpjve=velocity_error(pp, gp, fps),
        jitter=jerk_magnitude(pp, fps),
        root_pe=position_error(pp, gp, PARTS["root"]),
        hand_pe=position_error(pp, gp, PARTS["hand"]),
        upper_pe=position_error(pp, gp, PARTS["upper"]),
        lower_pe=position_error(pp, gp, PARTS["lower"]),
        frames=len(pred),
        fps=fps,
    )


class MetricsAccumulator:
    """Sums and counts per metric across clips; merge by addition."""

    _NAMES = ("mpjre", "mpjpe", "mpjve", "jitter", "root_pe", "hand_pe", "upper_pe", "lower_pe")

    def __init__(self, tree, fps=DEFAULT_FPS):
        self.tree = tree
        self.fps = fps
        self.sums = dict.fromkeys(self._NAMES, 0.0)
        self.counts = dict.fromkeys(self._NAMES, 0)
        self.frames = 0

    def _add(self, name, values):
        self.sums[name] += float(np.sum(values))
        self.counts[name] += int(np.size(values))

    def add(self, pred, gt):
        _pair(pred, gt)
        pp, gp = global_positions(pred, self.tree), global_positions(gt, self.tree)
        err = np.linalg.norm(pp - gp, axis=-1) * 100.0
        self._add("mpjre", geodesic_angle_deg(_local_rotations(pred), _local_rotations(gt)))
        self._add("mpjpe", err)
        for part in ("root", "hand", "upper", "lower"):
            self._add(f"{part}_pe", err[:, list(PARTS[part])])
        if len(pred) >= 2:
            dv = (np.diff(pp, axis=0) - np.diff(gp, axis=0)) * self.fps
            self._add("mpjve", np.linalg.norm(dv, axis=-1) * 100.0)
        if len(pred) >= 4:
            jerk = np.diff(pp, n=3, axis=0) * float(self.fps) ** 3
            self._add("jitter", np.linalg.norm(jerk, axis=-1) / 100.0)
        self.frames += len(pred)

    def merge(self, other):
        for name in self._NAMES:
            self.sums[name] += other.sums[name]
            self.counts[name] += other.counts[name]
        self.frames += other.frames
        return self

    def report(self):
        if self.frames == 0:
            raise ContractError("no frames accumulated")
        values = {n: self.sums[n] / self.counts[n] if self.counts[n] else float("nan") for n in self._NAMES}
        return MetricsReport(**values, frames=self.frames, fps=self.fps)
