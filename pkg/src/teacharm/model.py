"""Serial-chain arm description and joint-space state.

A chain is a sequence of revolute joints, each placed by a fixed offset
transform from its parent and rotating about a fixed local axis. Link i is
the body rigidly attached downstream of joint i; its mass and center of
mass drive the gravity vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

GRAVITY_M_PER_S2 = 9.81

_EYE3 = np.eye(3)


@dataclass
class ChainModel:
    """Kinematic and inertial description of a revolute serial arm."""

    joint_offsets_t: np.ndarray      # (n,3) translation parent->joint, parent frame
    joint_offsets_rot: np.ndarray    # (n,3,3) fixed rotation parent->joint
    joint_axes: np.ndarray           # (n,3) unit rotation axis, joint local frame
    tool_t: np.ndarray               # (3,) flange->tool-tip translation
    tool_rot: np.ndarray             # (3,3) flange->tool-tip rotation
    q_lim: np.ndarray                # (n,2) hard joint limits, rad
    safety_margin_rad: np.ndarray    # (n,) q_safe = q_lim shrunk by this margin
    link_masses_kg: np.ndarray       # (n,)
    link_com_local: np.ndarray       # (n,3) center of mass, frame after joint i
    joint_inertia_kgm2: np.ndarray   # (n,) diagonal joint-space inertia
    joint_damping_nms: np.ndarray    # (n,) viscous plant friction
    velocity_cap_rad_s: float = 20.0
    name: str = "arm"

    def __post_init__(self):
        for attr in ("joint_offsets_t", "joint_offsets_rot", "joint_axes", "tool_t",
                     "tool_rot", "q_lim", "safety_margin_rad", "link_masses_kg",
                     "link_com_local", "joint_inertia_kgm2", "joint_damping_nms"):
            setattr(self, attr, np.asarray(getattr(self, attr), dtype=float))
        n = self.n_joints
        if n < 1:
            raise ValueError("chain needs at least one joint")
        if np.any(self.joint_inertia_kgm2 <= 0.0):
            raise ValueError("joint inertias must be positive")
        if np.any(self.q_safe[:, 0] >= self.q_safe[:, 1]):
            raise ValueError("safety margins leave no safe band inside q_lim")
        norms = np.linalg.norm(self.joint_axes, axis=1)
        self.joint_axes = self.joint_axes / norms[:, None]
        # Rodrigues terms for each fixed local axis, precomputed once.
        self._axis_cross = np.array([_skew(a) for a in self.joint_axes])
        self._axis_cross2 = np.array([c @ c for c in self._axis_cross])
        self.offsets_rot_identity = bool(
            np.allclose(self.joint_offsets_rot, np.eye(3)[None, :, :], atol=1e-15))
        self.tool_rot_identity = bool(np.allclose(self.tool_rot, np.eye(3), atol=1e-15))

    @property
    def n_joints(self) -> int:
        return self.joint_offsets_t.shape[0]

    @property
    def q_safe(self) -> np.ndarray:
        """(n,2) band inside q_lim where the limit-rejection spring is silent."""
        band = self.q_lim.copy()
        band[:, 0] += self.safety_margin_rad
        band[:, 1] -= self.safety_margin_rad
        return band

    def joint_rotation(self, i: int, angle: float) -> np.ndarray:
        """Rotation matrix of joint i at the given angle (Rodrigues)."""
        out = np.sin(angle) * self._axis_cross[i]
        out += (1.0 - np.cos(angle)) * self._axis_cross2[i]
        out += _EYE3
        return out

    def coriolis(self, q: np.ndarray, qd: np.ndarray) -> np.ndarray:
        """Coriolis/centrifugal joint torque.

        The plant runs a diagonal constant-inertia approximation, so this
        term is identically zero; it stays in the interface so a fuller
        model can replace it and every controller path already carries it.
        """
        return np.zeros(self.n_joints)


def _skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]],
                     [v[2], 0.0, -v[0]],
                     [-v[1], v[0], 0.0]])


@dataclass
class JointState:
    """Joint positions/velocities plus simulation clock."""

    q: np.ndarray        # rad
    qd: np.ndarray       # rad/s
    t: float = 0.0       # s

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.qd = np.asarray(self.qd, dtype=float)
        if self.q.shape != self.qd.shape:
            raise ValueError("q and qd must have matching length")
        if not (np.isfinite(self.q).all() and np.isfinite(self.qd).all()):
            raise ValueError("joint state entries must be finite")

    def copy(self) -> "JointState":
        return JointState(self.q.copy(), self.qd.copy(), self.t)


def make_lab_arm() -> ChainModel:
    """Default 7-DoF desk arm.

    Axes alternate z/y so the chain folds in a vertical plane; with all
    joints at zero the arm points straight up and the tool tip sits at
    (0, 0, 1.30) with identity orientation (documented home pose).
    """
    offsets = np.array([
        [0.0, 0.0, 0.30],
        [0.0, 0.0, 0.08],
        [0.0, 0.0, 0.26],
        [0.0, 0.0, 0.07],
        [0.0, 0.0, 0.26],
        [0.0, 0.0, 0.07],
        [0.0, 0.0, 0.12],
    ])
    axes = np.array([
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
    ])
    n = 7
    # Link i spans from joint i toward joint i+1 (tool for the last link);
    # centers of mass sit halfway along that span.
    com = np.vstack([offsets[1:], [0.0, 0.0, 0.14]]) * 0.5
    return ChainModel(
        joint_offsets_t=offsets,
        joint_offsets_rot=np.array([np.eye(3)] * n),
        joint_axes=axes,
        tool_t=np.array([0.0, 0.0, 0.14]),
        tool_rot=np.eye(3),
        q_lim=np.array([[-2.9, 2.9], [-2.0, 2.0], [-2.9, 2.9], [-2.2, 2.2],
                        [-2.9, 2.9], [-2.2, 2.2], [-3.0, 3.0]]),
        safety_margin_rad=np.full(n, 0.1),
        link_masses_kg=np.array([3.5, 3.0, 2.5, 2.0, 1.5, 1.0, 0.6]),
        link_com_local=com,
        joint_inertia_kgm2=np.array([0.30, 0.30, 0.25, 0.25, 0.12, 0.12, 0.06]),
        joint_damping_nms=np.full(n, 1.0),
        name="lab7",
    )


# Working posture for the lab arm: tool axis exactly vertical (down),
# tip at (0.46, 0, 0.24), all joints well inside their safe bands.
READY_Q = np.array([-0.154509, 0.557883, 0.216356, 1.533138,
                    -0.130300, 1.064729, 0.093281])

# Tool-down orientation the working posture realizes: R = diag(-1, 1, -1).
TOOL_DOWN_QUAT = np.array([0.0, 0.0, 1.0, 0.0])


def make_planar_arm(link_lengths: list[float]) -> ChainModel:
    """Planar chain in the x-y plane, all joints about +z; for analysis work."""
    n = len(link_lengths)
    offsets = np.zeros((n, 3))
    for i, length in enumerate(link_lengths[:-1]):
        offsets[i + 1] = [length, 0.0, 0.0]
    com = np.zeros((n, 3))
    for i, length in enumerate(link_lengths):
        com[i] = [length / 2.0, 0.0, 0.0]
    return ChainModel(
        joint_offsets_t=offsets,
        joint_offsets_rot=np.array([np.eye(3)] * n),
        joint_axes=np.tile([0.0, 0.0, 1.0], (n, 1)),
        tool_t=np.array([link_lengths[-1], 0.0, 0.0]),
        tool_rot=np.eye(3),
        q_lim=np.tile([-np.pi, np.pi], (n, 1)),
        safety_margin_rad=np.full(n, 0.1),
        link_masses_kg=np.ones(n),
        link_com_local=com,
        joint_inertia_kgm2=np.ones(n),
        joint_damping_nms=np.zeros(n),
        name=f"planar{n}",
    )
