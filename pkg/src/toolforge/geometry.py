"""Rigid-transform algebra, object keypoints and the keypoint pose distance.

Quaternions are stored scalar-first, ``(w, x, y, z)``, and are renormalized
after every composition. Poses serialize as seven numbers
``[tx, ty, tz, qw, qx, qy, qz]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

# Sign pattern of the four object-frame keypoints; each row is scaled by
# half the keypoint extents. Order matters for observation layouts.
KEYPOINT_SIGNS = np.array(
    [
        [1.0, 1.0, 1.0],
        [1.0, 1.0, -1.0],
        [-1.0, -1.0, 1.0],
        [-1.0, -1.0, -1.0],
    ]
)

# Fixed scales used by the reward and the success metric (metres).
REWARD_KEYPOINT_SCALES = (0.14, 0.03, 0.03)

_IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def _finite(arr: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what} contains non-finite values")
    return arr


def quat_normalize(q) -> np.ndarray:
    q = _finite(np.asarray(q, dtype=float).reshape(4), "quaternion")
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValidationError("quaternion has zero norm")
    return q / n


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a * b``."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]], dtype=float)


def quat_to_matrix(q) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method), ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
    else:
        s = 2.0 * np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
    q = quat_normalize(q)
    return q if q[0] >= 0 else -q


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n < 1e-12:
        return _IDENTITY_Q.copy()
    half = 0.5 * float(angle)
    return np.concatenate([[np.cos(half)], np.sin(half) * axis / n])


def quat_from_rotvec(rv) -> np.ndarray:
    rv = np.asarray(rv, dtype=float)
    angle = np.linalg.norm(rv)
    if angle < 1e-12:
        return quat_normalize(np.concatenate([[1.0], 0.5 * rv]))
    return quat_from_axis_angle(rv / angle, angle)


def quat_to_rotvec(q) -> np.ndarray:
    """Axis-angle vector of ``q`` with angle in ``[0, pi]``."""
    q = np.asarray(q, dtype=float)
    if q[0] < 0:
        q = -q
    v = q[1:]
    s = np.linalg.norm(v)
    if s < 1e-12:
        return 2.0 * v
    angle = 2.0 * np.arctan2(s, q[0])
    return v / s * angle


def rotation_angle(q) -> float:
    """Geodesic angle of the rotation, in ``[0, pi]``."""
    q = np.asarray(q, dtype=float)
    return float(2.0 * np.arctan2(np.linalg.norm(q[1:]), abs(q[0])))


def rotate(q, v) -> np.ndarray:
    return np.asarray(v, dtype=float) @ quat_to_matrix(q).T


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: translation in metres and a unit quaternion (w, x, y, z)."""

    translation: np.ndarray
    rotation: np.ndarray

    def __post_init__(self):
        t = _finite(np.array(self.translation, dtype=float).reshape(3), "translation")
        q = quat_normalize(self.rotation)
        t.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), _IDENTITY_Q)

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, 3], matrix_to_quat(T[:3, :3]))

    @classmethod
    def from_list(cls, values: Sequence[float]) -> "Pose":
        values = list(values)
        if len(values) != 7:
            raise ValidationError(f"pose needs 7 numbers, got {len(values)}")
        return cls(values[:3], values[3:])

    @classmethod
    def from_translation(cls, t) -> "Pose":
        return cls(t, _IDENTITY_Q)

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(translation, quat_from_axis_angle(axis, angle))

    @property
    def matrix(self) -> np.ndarray:
        return quat_to_matrix(self.rotation)

    def as_matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.matrix
        T[:3, 3] = self.translation
        return T

    def to_list(self) -> list[float]:
        return [float(v) for v in np.concatenate([self.translation, self.rotation])]

    def apply(self, points) -> np.ndarray:
        """Map points given in this pose's local frame into the parent frame."""
        return np.asarray(points, dtype=float) @ self.matrix.T + self.translation

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        """Equality up to ``atol``; ``q`` and ``-q`` are the same rotation."""
        if not np.allclose(self.translation, other.translation, atol=atol, rtol=0):
            return False
        return bool(
            np.allclose(self.rotation, other.rotation, atol=atol, rtol=0)
            or np.allclose(self.rotation, -other.rotation, atol=atol, rtol=0)
        )

    def __repr__(self) -> str:
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        return f"Pose(t=[{t}], q=[{q}])"


def compose(a: Pose, b: Pose) -> Pose:
    """``a * b``: express frame ``b`` (given in ``a``) in ``a``'s parent frame."""
    t = a.translation + quat_to_matrix(a.rotation) @ b.translation
    return Pose(t, quat_mul(a.rotation, b.rotation))


def invert(a: Pose) -> Pose:
    qi = quat_conj(a.rotation)
    return Pose(-(quat_to_matrix(qi) @ a.translation), qi)


def relative(a: Pose, b: Pose) -> Pose:
    """Pose of ``b`` expressed in the frame of ``a`` (``a^-1 * b``)."""
    return compose(invert(a), b)


def _check_scales(scales) -> np.ndarray:
    s = _finite(np.asarray(scales, dtype=float).reshape(3), "keypoint scales")
    if np.any(s <= 0):
        raise ValidationError(f"keypoint scales must be positive, got {s.tolist()}")
    return s


def keypoint_offsets(scales) -> np.ndarray:
    """(4, 3) local keypoint offsets ``sign * scales / 2``."""
    return KEYPOINT_SIGNS * (0.5 * _check_scales(scales))


def keypoints_world(pose: Pose, scales=REWARD_KEYPOINT_SCALES) -> np.ndarray:
    return pose.apply(keypoint_offsets(scales))


def keypoint_distance(a: Pose, b: Pose, scales=REWARD_KEYPOINT_SCALES) -> float:
    """Largest displacement between paired keypoints of ``a`` and ``b`` (metres)."""
    offsets = keypoint_offsets(scales)
    diff = a.apply(offsets) - b.apply(offsets)
    return float(np.max(np.linalg.norm(diff, axis=1)))


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Uniformly distributed unit quaternion.

    Uses Shoemake's subgroup algorithm: three uniforms map to a point that is
    uniform on S^3, hence a Haar-uniform rotation.
    """
    u1, u2, u3 = rng.random(3)
    a, b = np.sqrt(1.0 - u1), np.sqrt(u1)
    x, y = a * np.sin(2 * np.pi * u2), a * np.cos(2 * np.pi * u2)
    z, w = b * np.sin(2 * np.pi * u3), b * np.cos(2 * np.pi * u3)
    q = np.array([w, x, y, z])
    return q / np.linalg.norm(q)


def random_unit_vector(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    n = np.linalg.norm(v)
    while n < 1e-9:
        v = rng.normal(size=3)
        n = np.linalg.norm(v)
    return v / n

