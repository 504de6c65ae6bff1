"""Rotation conversions: axis-angle, 3x3 matrices and the 6D encoding.

All functions accept arbitrary leading batch dimensions.
"""

import numpy as np

from .errors import DegenerateRotationError, InvalidInputError

_SMALL_ANGLE = 1e-7
_DEGENERATE = 1e-8


def axis_angle_to_matrix(a):
    """Rodrigues formula. ``a`` has shape (..., 3); returns (..., 3, 3)."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[-1:] != (3,):
        raise InvalidInputError(f"axis-angle must end in 3, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidInputError("axis-angle contains non-finite values")

    theta2 = np.sum(a * a, axis=-1)
    theta = np.sqrt(theta2)
    small = theta < _SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    # sin(t)/t and (1-cos t)/t^2 with Taylor fallbacks near zero
    sinc = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    cosc = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))

    x, y, z = a[..., 0], a[..., 1], a[..., 2]
    zero = np.zeros_like(x)
    K = np.stack(
        [
            np.stack([zero, -z, y], axis=-1),
            np.stack([z, zero, -x], axis=-1),
            np.stack([-y, x, zero], axis=-1),
        ],
        axis=-2,
    )
    eye = np.broadcast_to(np.eye(3), K.shape)
    R = eye + sinc[..., None, None] * K + cosc[..., None, None] * (K @ K)
    # exact identity at rest, no rounding residue
    return np.where((theta2 == 0.0)[..., None, None], eye, R)


def matrix_to_axis_angle(R):
    """Inverse of :func:`axis_angle_to_matrix` (used for clip storage)."""
    R = np.asarray(R, dtype=np.float64)
    cos = np.clip((np.trace(R, axis1=-2, axis2=-1) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos)
    w = np.stack(
        [R[..., 2, 1] - R[..., 1, 2], R[..., 0, 2] - R[..., 2, 0], R[..., 1, 0] - R[..., 0, 1]],
        axis=-1,
    )
    sin = np.sin(theta)
    small = theta < 1e-6
    near_pi = theta > np.pi - 1e-4
    scale = np.where(small, 0.5 + theta**2 / 12.0, theta / (2.0 * np.where(small, 1.0, sin)))
    out = w * scale[..., None]
    if np.any(near_pi):
        # axis from the dominant column of (R + I)/2
        B = (R + np.eye(3)) / 2.0
        diag = np.diagonal(B, axis1=-2, axis2=-1)
        idx = np.argmax(diag, axis=-1)
        col = np.take_along_axis(B, idx[..., None, None].repeat(3, axis=-1), axis=-2)[..., 0, :]
        axis = col / np.linalg.norm(col, axis=-1, keepdims=True)
        sign = np.sign(np.sum(axis * w, axis=-1))
        sign = np.where(sign == 0, 1.0, sign)
        pi_est = axis * (sign * theta)[..., None]
        out = np.where(near_pi[..., None], pi_est, out)
    return out


def matrix_to_rot6d(R):
    """First two rows of ``R`` flattened row-major: (..., 3, 3) -> (..., 6)."""
    R = np.asarray(R)
    return R[..., :2, :].reshape(R.shape[:-2] + (6,))


def rot6d_to_matrix(r):
    """Row-wise Gram-Schmidt decode of a 6D rotation."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[-1:] != (6,):
        raise InvalidInputError(f"6D rotation must end in 6, got {r.shape}")
    a, b = r[..., :3], r[..., 3:]
    na = np.linalg.norm(a, axis=-1, keepdims=True)
    if np.any(na <= _DEGENERATE) or not np.all(np.isfinite(r)):
        raise DegenerateRotationError("first 6D row is zero or non-finite")
    row1 = a / na
    b = b - np.sum(b * row1, axis=-1, keepdims=True) * row1
    nb = np.linalg.norm(b, axis=-1, keepdims=True)
    if np.any(nb <= _DEGENERATE):
        raise DegenerateRotationError("6D rows are parallel or second row is zero")
    row2 = b / nb
    row3 = np.cross(row1, row2)
    return np.stack([row1, row2, row3], axis=-2)


def relative_rotation(R_prev, R_cur):
    """inv(R_prev) @ R_cur, using the transpose as the inverse."""
    return np.swapaxes(np.asarray(R_prev), -1, -2) @ np.asarray(R_cur)


def geodesic_angle_deg(Ra, Rb):
    """Angle of the rotation taking ``Ra`` to ``Rb``, in degrees within [0, 180]."""
    M = np.swapaxes(np.asarray(Ra), -1, -2) @ np.asarray(Rb)
    cos = (np.trace(M, axis1=-2, axis2=-1) - 1.0) / 2.0
    # atan2 of sin and cos stays accurate near 0, where arccos loses half the digits
    w = np.stack([M[..., 2, 1] - M[..., 1, 2], M[..., 0, 2] - M[..., 2, 0], M[..., 1, 0] - M[..., 0, 1]], axis=-1)
    sin = np.linalg.norm(w, axis=-1) / 2.0
    return np.degrees(np.arctan2(sin, np.clip(cos, -1.0, 1.0)))


IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
