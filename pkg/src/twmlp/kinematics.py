"""22-joint kinematic tree (SMPL joint order, fixed bone offsets) and FK."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .rotmath import rot6d_to_matrix

NUM_JOINTS = 22

JOINT_NAMES = (
    "pelvis",
    "left_hip",
    "right_hip",
    "spine1",
    "left_knee",
    "right_knee",
    "spine2",
    "left_ankle",
    "right_ankle",
    "spine3",
    "left_foot",
    "right_foot",
    "neck",
    "left_collar",
    "right_collar",
    "head",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
)

HEAD = 15
LEFT_WRIST = 20
RIGHT_WRIST = 21

_PARENTS = (-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19)

# y up, x towards the body's left, z forward; meters
_OFFSETS = (
    (0.0, 0.0, 0.0),
    (0.09, -0.08, 0.0),
    (-0.09, -0.08, 0.0),
    (0.0, 0.12, 0.0),
    (0.0, -0.38, 0.0),
    (0.0, -0.38, 0.0),
    (0.0, 0.13, 0.0),
    (0.0, -0.40, 0.0),
    (0.0, -0.40, 0.0),
    (0.0, 0.05, 0.0),
    (0.0, -0.06, 0.12),
    (0.0, -0.06, 0.12),
    (0.0, 0.10, 0.0),
    (0.05, 0.08, 0.0),
    (-0.05, 0.08, 0.0),
    (0.0, 0.10, 0.0),
    (0.15, 0.0, 0.0),
    (-0.15, 0.0, 0.0),
    (0.26, 0.0, 0.0),
    (-0.26, 0.0, 0.0),
    (0.25, 0.0, 0.0),
    (-0.25, 0.0, 0.0),
)


@dataclass(frozen=True)
class KinematicTree:
    names: tuple
    parents: tuple
    offsets: np.ndarray  # (22, 3) in the parent frame

    def __post_init__(self):
        offsets = np.asarray(self.offsets, dtype=np.float64)
        object.__setattr__(self, "offsets", offsets)
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "parents", tuple(int(p) for p in self.parents))
        if len(self.names) != NUM_JOINTS or len(self.parents) != NUM_JOINTS or offsets.shape != (NUM_JOINTS, 3):
            raise InvalidInputError(f"kinematic tree must have exactly {NUM_JOINTS} joints")
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise InvalidInputError("kinematic tree needs a single root at index 0")
        if any(p >= j for j, p in enumerate(self.parents) if j > 0):
            raise InvalidInputError("parents must precede their children")
        if np.any(offsets[0] != 0.0):
            raise InvalidInputError("root offset must be zero")

    def index(self, name):
        return self.names.index(name)


def default_skeleton():
    return KinematicTree(JOINT_NAMES, _PARENTS, np.array(_OFFSETS))


def load_skeleton(path):
    """Read a skeleton file: one ``name parent x y z`` line per joint.

    The root uses ``-`` as its parent. Blank lines and ``#`` comments are
    ignored. Joints must be listed parents-first.
    """
    names, parents, offsets = [], [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise InvalidInputError(f"{path}:{lineno}: expected 'name parent x y z'")
        name, parent = parts[0], parts[1]
        if parent == "-":
            parents.append(-1)
        elif parent in names:
            parents.append(names.index(parent))
        else:
            raise InvalidInputError(f"{path}:{lineno}: unknown parent {parent!r}")
        names.append(name)
        offsets.append([float(v) for v in parts[2:]])
    if len(names) != NUM_JOINTS:
        raise InvalidInputError(f"{path}: expected {NUM_JOINTS} joints, found {len(names)}")
    if parents.count(-1) != 1:
        raise InvalidInputError(f"{path}: expected exactly one root")
    return KinematicTree(tuple(names), tuple(parents), np.array(offsets))


def save_skeleton(tree, path):
    lines = ["# name parent x y z (meters, parent frame)"]
    for j, name in enumerate(tree.names):
        parent = "-" if tree.parents[j] < 0 else tree.names[tree.parents[j]]
        x, y, z = (float(v) for v in tree.offsets[j])
        lines.append(f"{name} {parent} {x!r} {y!r} {z!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def forward_kinematics(rotations, root_translation, tree):
    """Global joint positions and rotations.

    ``rotations`` holds local rotations as (..., 22, 3, 3) matrices or
    (..., 22, 6) / (..., 132) 6D encodings; ``root_translation`` is (..., 3).
    Returns positions (..., 22, 3) and global rotations (..., 22, 3, 3).
    """
    local = _as_matrices(rotations)
    root = np.asarray(root_translation, dtype=np.float64)
    g_rot = np.empty_like(local)
    g_pos = np.empty(local.shape[:-2] + (3,))
    g_rot[..., 0, :, :] = local[..., 0, :, :]
    g_pos[..., 0, :] = root
    for j in range(1, NUM_JOINTS):
        p = tree.parents[j]
        g_rot[..., j, :, :] = g_rot[..., p, :, :] @ local[..., j, :, :]
        g_pos[..., j, :] = g_pos[..., p, :] + g_rot[..., p, :, :] @ tree.offsets[j]
    return g_pos, g_rot


def recover_root_translation(rotations, observed_head, tree):
    """Root translation that puts the FK head exactly on ``observed_head``."""
    local = _as_matrices(rotations)
    zero = np.zeros(local.shape[:-3] + (3,))
    pos, _ = forward_kinematics(local, zero, tree)
    return np.asarray(observed_head, dtype=np.float64) - pos[..., HEAD, :]


def _as_matrices(rotations):
    r = np.asarray(rotations, dtype=np.float64)
    if r.shape[-2:] == (3, 3) and r.shape[-3] == NUM_JOINTS:
        return r
    if r.shape[-1] == NUM_JOINTS * 6:
        r = r.reshape(r.shape[:-1] + (NUM_JOINTS, 6))
    if r.shape[-2:] == (NUM_JOINTS, 6):
        return rot6d_to_matrix(r)
    raise InvalidInputError(f"cannot interpret rotations of shape {r.shape}")
