"""Rigid-body math: unit quaternions, poses, and named frame transforms.

Quaternions are stored as numpy arrays [w, x, y, z]. All rotations are
right-handed, all frames are expressed in SI units (meters, radians).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

QUAT_IDENTITY = np.array([1.0, 0.0, 0.0, 0.0])


class FrameChainError(ValueError):
    """Raised when composing transforms whose frame names do not chain."""


def quat_normalize(q: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion cannot be normalized")
    return q / n


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a*b (apply b's rotation first, then a's)."""
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector v by quaternion q."""
    w = q[0]
    u = q[1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_from_axis_angle(axis: np.ndarray, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return QUAT_IDENTITY.copy()
    half = 0.5 * angle
    q = np.empty(4)
    q[0] = np.cos(half)
    q[1:] = np.sin(half) * (axis / n)
    return q


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method)."""
    t = np.trace(m)
    if t > 0:
        s = np.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (m[2, 1] - m[1, 2]) / s,
                      (m[0, 2] - m[2, 0]) / s,
                      (m[1, 0] - m[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(m)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(max(m[i, i] - m[j, j] - m[k, k] + 1.0, 0.0)) * 2.0
        q = np.empty(4)
        q[0] = (m[k, j] - m[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (m[j, i] + m[i, j]) / s
        q[1 + k] = (m[k, i] + m[i, k]) / s
    return quat_normalize(q)


def quat_rotation_vector(q: np.ndarray) -> np.ndarray:
    """Minimal axis-angle 3-vector of a unit quaternion (angle * axis)."""
    q = q if q[0] >= 0.0 else -q  # take the short way around
    sin_half = np.linalg.norm(q[1:])
    if sin_half < 1e-12:
        return 2.0 * q[1:]  # small-angle: sin(x) ~ x
    angle = 2.0 * np.arctan2(sin_half, q[0])
    return (angle / sin_half) * q[1:]


def quat_slerp(qa: np.ndarray, qb: np.ndarray, s: float) -> np.ndarray:
    """Spherical linear interpolation from qa (s=0) to qb (s=1)."""
    dot = float(np.dot(qa, qb))
    if dot < 0.0:
        qb = -qb
        dot = -dot
    if dot > 0.9995:
        return quat_normalize(qa + s * (qb - qa))
    theta = np.arccos(np.clip(dot, -1.0, 1.0))
    sin_theta = np.sin(theta)
    return (np.sin((1.0 - s) * theta) / sin_theta) * qa + (np.sin(s * theta) / sin_theta) * qb


def orientation_error(q_goal: np.ndarray, q_current: np.ndarray) -> np.ndarray:
    """Rotation vector taking the current orientation to the goal, in base frame."""
    return quat_rotation_vector(quat_mul(q_goal, quat_conj(q_current)))


def rotation_error_matrix(rot_goal: np.ndarray, rot_current: np.ndarray) -> np.ndarray:
    """Rotation vector of rot_goal @ rot_current^T; matrix-only fast path."""
    m = rot_goal @ rot_current.T
    axis = 0.5 * np.array([m[2, 1] - m[1, 2], m[0, 2] - m[2, 0], m[1, 0] - m[0, 1]])
    sin_angle = np.linalg.norm(axis)
    cos_angle = 0.5 * (m[0, 0] + m[1, 1] + m[2, 2] - 1.0)
    if sin_angle < 1e-9:
        if cos_angle > 0.0:
            return axis * 2.0  # small angle: axis already ~ angle/2 * unit
        # Near pi: recover the axis from the symmetric part.
        diag = np.clip((np.diag(m) + 1.0) / 2.0, 0.0, None)
        axis = np.sqrt(diag)
        axis[1] = np.copysign(axis[1], m[0, 1])
        axis[2] = np.copysign(axis[2], m[0, 2])
        return np.pi * axis / max(np.linalg.norm(axis), 1e-12)
    angle = np.arctan2(sin_angle, cos_angle)
    return (angle / sin_angle) * axis


@dataclass
class Pose:
    """Position (m) plus unit quaternion [w,x,y,z]."""

    position: np.ndarray
    orientation: np.ndarray = field(default_factory=lambda: QUAT_IDENTITY.copy())

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)
        if self.position.shape != (3,):
            raise ValueError(f"position must be a 3-vector, got {self.position.shape}")
        if self.orientation.shape != (4,):
            raise ValueError("orientation must be a quaternion [w,x,y,z]")
        n = np.linalg.norm(self.orientation)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"quaternion norm {n} is not 1")
        if not (np.isfinite(self.position).all() and np.isfinite(self.orientation).all()):
            raise ValueError("pose entries must be finite")

    def copy(self) -> "Pose":
        return Pose(self.position.copy(), self.orientation.copy())

    def to_dict(self) -> dict:
        return {"position_m": self.position.tolist(),
                "quaternion_wxyz": self.orientation.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "Pose":
        return Pose(np.array(d["position_m"], dtype=float),
                    quat_normalize(np.array(d["quaternion_wxyz"], dtype=float)))

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.zeros(3), QUAT_IDENTITY.copy())


@dataclass
class FrameTransform:
    """SE(3) transform mapping points from `source` coordinates to `target`.

    p_target = R(rotation) @ p_source + translation
    """

    rotation: np.ndarray  # unit quaternion [w,x,y,z]
    translation: np.ndarray  # m
    source: str
    target: str

    def __post_init__(self):
        self.rotation = quat_normalize(np.asarray(self.rotation, dtype=float))
        self.translation = np.asarray(self.translation, dtype=float)

    @staticmethod
    def identity(source: str, target: str | None = None) -> "FrameTransform":
        return FrameTransform(QUAT_IDENTITY.copy(), np.zeros(3), source, target or source)

    @staticmethod
    def from_pose(pose: Pose, source: str, target: str) -> "FrameTransform":
        return FrameTransform(pose.orientation.copy(), pose.position.copy(), source, target)

    def as_pose(self) -> Pose:
        return Pose(self.translation.copy(), quat_normalize(self.rotation.copy()))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one point (3,) or many (N,3) into the target frame."""
        pts = np.asarray(points, dtype=float)
        rot = quat_to_matrix(self.rotation)
        if pts.ndim == 1:
            return rot @ pts + self.translation
        return pts @ rot.T + self.translation

    def apply_pose(self, pose: Pose) -> Pose:
        return Pose(self.apply(pose.position),
                    quat_normalize(quat_mul(self.rotation, pose.orientation)))

    def compose(self, inner: "FrameTransform") -> "FrameTransform":
        """self ∘ inner: first map through `inner`, then through `self`."""
        if inner.target != self.source:
            raise FrameChainError(
                f"cannot chain {inner.source}->{inner.target} into {self.source}->{self.target}")
        rot = quat_mul(self.rotation, inner.rotation)
        trans = quat_rotate(self.rotation, inner.translation) + self.translation
        return FrameTransform(rot, trans, inner.source, self.target)

    def inverse(self) -> "FrameTransform":
        rot = quat_conj(self.rotation)
        return FrameTransform(rot, -quat_rotate(rot, self.translation),
                              self.target, self.source)

    def to_dict(self) -> dict:
        return {"quaternion_wxyz": self.rotation.tolist(),
                "translation_m": self.translation.tolist(),
                "source_frame": self.source,
                "target_frame": self.target}

    @staticmethod
    def from_dict(d: dict) -> "FrameTransform":
        return FrameTransform(np.array(d["quaternion_wxyz"], dtype=float),
                              np.array(d["translation_m"], dtype=float),
                              d["source_frame"], d["target_frame"])
