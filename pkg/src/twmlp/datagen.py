"""Synthetic motion clips, tracker streams derived from them, the MOTN clip
file format and dataset manifests with deterministic train/test splits.

MOTN layout (little-endian)::

    offset 0   4s   magic b"MOTN"
    offset 4   u32  version (1)
    offset 8   u32  fps
    offset 12  u32  frame count F
    offset 16  u32  joint count (22)
    offset 20  u32  reserved (0)
    offset 24  F x [root xyz, 22 x axis-angle xyz] as f32
"""

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, FormatError
from .featurize import TrackedFrame
from .kinematics import HEAD, LEFT_WRIST, NUM_JOINTS, RIGHT_WRIST, forward_kinematics
from .rotmath import axis_angle_to_matrix, matrix_to_axis_angle, matrix_to_rot6d

MAGIC = b"MOTN"
VERSION = 1
HEADER = struct.Struct("<4sIIIII")
FRAME_VALUES = 3 + NUM_JOINTS * 3

KINDS = ("walk", "run", "jump", "idle")

PELVIS_HEIGHT = 0.93


@dataclass(eq=False)
class MotionClip:
    fps: int
    root: np.ndarray  # (F, 3) meters, float32
    rotations: np.ndarray  # (F, 22, 3) local axis-angle, float32
    clip_id: str = ""

    def __post_init__(self):
        self.root = np.asarray(self.root, dtype=np.float32)
        self.rotations = np.asarray(self.rotations, dtype=np.float32)
        F = len(self.root)
        if F < 2 or self.root.shape != (F, 3) or self.rotations.shape != (F, NUM_JOINTS, 3):
            raise ContractError(f"clip needs >= 2 frames of shape (F,3)/(F,22,3), got {self.root.shape}, {self.rotations.shape}")
        if not (np.all(np.isfinite(self.root)) and np.all(np.isfinite(self.rotations))):
            raise ContractError("clip contains non-finite values")

    def __len__(self):
        return len(self.root)

    def same_as(self, other):
        return (
            self.fps == other.fps
            and np.array_equal(self.root, other.root)
            and np.array_equal(self.rotations, other.rotations)
        )

    def local_matrices(self):
        return axis_angle_to_matrix(self.rotations.astype(np.float64))

    def rot6d(self):
        """Ground-truth network target (F, 132)."""
        return matrix_to_rot6d(self.local_matrices()).reshape(len(self), NUM_JOINTS * 6)


@dataclass(frozen=True)
class MotionSpec:
    kind: str = "walk"
    duration_s: float = 10.0
    fps: int = 60
    period_s: float = None

    def frames(self):
        return int(round(self.duration_s * self.fps))


# per kind: period (s), hip, knee, shoulder swing, elbow (rad), forward speed (m/s), bounce (m)
_GAITS = {
    "walk": dict(period=1.0, hip=0.45, knee=0.6, shoulder=0.35, elbow=0.3, speed=1.2, bounce=0.02),
    "run": dict(period=0.7, hip=0.8, knee=1.2, shoulder=0.6, elbow=1.1, speed=3.0, bounce=0.05),
    "jump": dict(period=1.2, hip=0.5, knee=1.0, shoulder=0.9, elbow=0.4, speed=0.0, height=0.3),
    "idle": dict(period=4.0, hip=0.0, knee=0.0, shoulder=0.0, elbow=0.0, speed=0.0, bounce=0.0),
}


def gait_parameters(spec, seed):
    """The sampled generator parameters for ``spec`` under ``seed``."""
    if spec.kind not in KINDS:
        raise ConfigError(f"unknown motion kind {spec.kind!r}; expected one of {KINDS}")
    if spec.fps <= 0 or spec.frames() < 2:
        raise ConfigError("motion must span at least 2 frames at a positive fps")
    base = dict(_GAITS[spec.kind])
    if spec.period_s is not None:
        if spec.period_s <= 0:
            raise ConfigError("period must be positive")
        base["period"] = float(spec.period_s)
    rng = np.random.default_rng(seed)
    scale = rng.uniform(0.9, 1.1, size=4)
    for name, s in zip(("hip", "knee", "shoulder", "elbow"), scale):
        base[name] *= s
    base["phase"] = float(rng.uniform(0.0, 2.0 * math.pi))
    base["heading"] = float(rng.uniform(-math.pi, math.pi))
    base["arm_drop"] = float(rng.uniform(1.2, 1.4))
    return base


def knee_angle(t, params, fps, side=0):
    """Closed-form knee flexion for frame indices ``t`` (side 0 left, 1 right)."""
    phi = 2.0 * math.pi * np.asarray(t, dtype=np.float64) / (fps * params["period"]) + params["phase"] + side * math.pi
    if "height" in params:
        # both knees bend together during the ground phase of a jump
        phi = phi - side * math.pi
    return params["knee"] * 0.5 * (1.0 - np.cos(phi))


def _rx(a):
    return np.stack([a, np.zeros_like(a), np.zeros_like(a)], axis=-1)


def _compose(*axis_angles):
    R = axis_angle_to_matrix(axis_angles[0])
    for a in axis_angles[1:]:
        R = R @ axis_angle_to_matrix(a)
    return matrix_to_axis_angle(R)


def synth_motion(spec, seed=0):
    """Procedural clip: phase-locked sinusoidal limb angles, forward root
    drift for walk/run, a repeating ballistic arc for jump."""
    p = gait_parameters(spec, seed)
    F, fps = spec.frames(), spec.fps
    t = np.arange(F, dtype=np.float64)
    phi = 2.0 * math.pi * t / (fps * p["period"]) + p["phase"]
    zero = np.zeros(F)
    rot = np.zeros((F, NUM_JOINTS, 3))

    heading = p["heading"]
    yaw = heading + 0.05 * np.sin(phi) * (p["speed"] > 0)
    rot[:, 0] = np.stack([zero, yaw, zero], axis=-1)
    root = np.zeros((F, 3))
    dist = p["speed"] * t / fps
    root[:, 0] = dist * math.sin(heading)
    root[:, 2] = dist * math.cos(heading)

    if spec.kind == "jump":
        tau = np.mod(phi - p["phase"], 2.0 * math.pi) / (2.0 * math.pi)
        ground = tau < 0.6
        s = np.clip((tau - 0.6) / 0.4, 0.0, 1.0)
        crouch = np.sin(math.pi * np.clip(tau / 0.6, 0.0, 1.0))
        root[:, 1] = PELVIS_HEIGHT + np.where(ground, -0.15 * crouch, 4.0 * p["height"] * s * (1.0 - s))
        hip = -p["hip"] * np.where(ground, crouch, 0.0)
        rot[:, 1] = _rx(hip)
        rot[:, 2] = _rx(hip)
        rot[:, 4] = _rx(knee_angle(t, p, fps, 0))
        rot[:, 5] = _rx(knee_angle(t, p, fps, 1))
        swing = -p["shoulder"] * np.where(ground, -crouch, 2.0 * s * (1.0 - s) * 2.0)
        left_swing, right_swing = swing, swing
    else:
        root[:, 1] = PELVIS_HEIGHT + p.get("bounce", 0.0) * np.cos(2.0 * phi)
        rot[:, 1] = _rx(-p["hip"] * np.sin(phi))
        rot[:, 2] = _rx(p["hip"] * np.sin(phi))
        rot[:, 4] = _rx(knee_angle(t, p, fps, 0))
        rot[:, 5] = _rx(knee_angle(t, p, fps, 1))
        rot[:, 7] = _rx(0.2 * p["hip"] * np.cos(phi))
        rot[:, 8] = _rx(-0.2 * p["hip"] * np.cos(phi))
        rot[:, 3] = _rx(0.05 * p["hip"] * np.sin(2.0 * phi))
        left_swing = p["shoulder"] * np.sin(phi)
        right_swing = -p["shoulder"] * np.sin(phi)

    drop = p["arm_drop"]
    rot[:, 16] = _compose(np.tile([0.0, 0.0, -drop], (F, 1)), np.stack([zero, left_swing, zero], axis=-1))
    rot[:, 17] = _compose(np.tile([0.0, 0.0, drop], (F, 1)), np.stack([zero, -right_swing, zero], axis=-1))
    elbow = p["elbow"] * (1.0 + 0.3 * np.sin(phi))
    rot[:, 18] = np.stack([zero, -elbow, zero], axis=-1)
    rot[:, 19] = np.stack([zero, elbow, zero], axis=-1)
    rot[:, 15] = _rx(0.05 * np.sin(0.5 * phi) * (p["speed"] > 0))

    return MotionClip(fps=fps, root=root, rotations=rot, clip_id=f"{spec.kind}-{seed}")


def derive_sparse_stream(clip, tree):
    """Headset and controller readings: global head and wrist poses from FK."""
    pos, grot = forward_kinematics(clip.local_matrices(), clip.root.astype(np.float64), tree)
    idx = [HEAD, LEFT_WRIST, RIGHT_WRIST]
    return [TrackedFrame(t=i, positions=pos[i, idx], rotations=grot[i, idx]) for i in range(len(clip))]


# ---------------------------------------------------------------------------
# MOTN files


def clip_to_bytes(clip):
    header = HEADER.pack(MAGIC, VERSION, int(clip.fps), len(clip), NUM_JOINTS, 0)
    body = np.concatenate([clip.root, clip.rotations.reshape(len(clip), -1)], axis=1)
    return header + body.astype("<f4").tobytes()


def clip_from_bytes(data, clip_id=""):
    if len(data) < HEADER.size:
        raise FormatError("truncated header", len(data))
    magic, version, fps, frames, joints, _ = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}", 0)
    if version != VERSION:
        raise FormatError(f"unsupported version {version}", 4)
    if fps == 0:
        raise FormatError("fps must be positive", 8)
    if frames < 2:
        raise FormatError(f"clip needs at least 2 frames, header says {frames}", 12)
    if joints != NUM_JOINTS:
        raise FormatError(f"expected {NUM_JOINTS} joints, header says {joints}", 16)
    expected = HEADER.size + frames * FRAME_VALUES * 4
    if len(data) < expected:
        raise FormatError("truncated frame data", len(data))
    if len(data) > expected:
        raise FormatError("trailing bytes after frame data", expected)
    body = np.frombuffer(data, dtype="<f4", offset=HEADER.size).reshape(frames, FRAME_VALUES)
    return MotionClip(
        fps=fps,
        root=body[:, :3].astype(np.float32),
        rotations=body[:, 3:].reshape(frames, NUM_JOINTS, 3).astype(np.float32),
        clip_id=clip_id,
    )


def save_clip(clip, path):
    Path(path).write_bytes(clip_to_bytes(clip))


def load_clip(path):
    path = Path(path)
    return clip_from_bytes(path.read_bytes(), clip_id=path.stem)


# ---------------------------------------------------------------------------
# manifests and splits


@dataclass
class DatasetManifest:
    clips: list  # paths, as given
    splits: list  # "train" / "test", parallel to clips
    seed: int
    fps: int
    ratio: float = 0.9
    root_dir: str = "."

    def paths(self, split):
        base = Path(self.root_dir)
        return [base / c for c, s in zip(self.clips, self.splits) if s == split]

    def to_dict(self):
        return {
            "seed": self.seed,
            "fps": self.fps,
            "ratio": self.ratio,
            "clips": [{"path": str(c), "split": s} for c, s in zip(self.clips, self.splits)],
        }


def split_dataset(clips, ratio=0.9, seed=0, fps=60):
    """Deterministic shuffle, first ceil(ratio * N) to train.

    The test split always keeps at least one clip.
    """
    clips = [str(c) for c in clips]
    n = len(clips)
    if n < 2:
        raise ContractError("need at least 2 clips to split")
    if not 0.0 < ratio < 1.0:
        raise ContractError(f"split ratio must be in (0, 1), got {ratio}")
    order = np.random.default_rng(seed).permutation(n)
    n_train = min(math.ceil(ratio * n), n - 1)
    splits = [""] * n
    for rank, idx in enumerate(order):
        splits[idx] = "train" if rank < n_train else "test"
    return DatasetManifest(clips=clips, splits=splits, seed=seed, fps=fps, ratio=ratio)


def save_manifest(manifest, path):
    Path(path).write_text(json.dumps(manifest.to_dict(), indent=2) + "\n")


def load_manifest(path):
    path = Path(path)
    d = json.loads(path.read_text())
    return DatasetManifest(
        clips=[c["path"] for c in d["clips"]],
        splits=[c["split"] for c in d["clips"]],
        seed=int(d["seed"]),
        fps=int(d["fps"]),
        ratio=float(d.get("ratio", 0.9)),
        root_dir=str(path.parent),
    )


def synth_dataset(out_dir, count, seed=0, duration_s=10.0, fps=60, kinds=KINDS, ratio=0.9):
    """Write ``count`` clips cycling through ``kinds`` plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        clip = synth_motion(MotionSpec(kind=kind, duration_s=duration_s, fps=fps), seed=seed * 100003 + i)
        name = f"{i:04d}_{kind}.motn"
        save_clip(clip, out / name)
        names.append(name)
    manifest = split_dataset(names, ratio=ratio, seed=seed, fps=fps)
    manifest.root_dir = str(out)
    save_manifest(manifest, out / "manifest.json")
    return manifest
