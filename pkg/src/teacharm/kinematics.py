"""Forward kinematics, geometric Jacobian, and gravity for serial chains.

`chain_pass` walks the chain once and returns everything the control and
simulation loops need per tick (tool pose, joint frames, link centers of
mass). The public `forward_kinematics` / `geometric_jacobian` entry points
are thin views over it.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fastkin import HAVE_NUMBA, chain_sweep
from .model import GRAVITY_M_PER_S2, ChainModel
from .se3 import Pose, matrix_to_quat


def cross_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product without numpy's axis bookkeeping overhead."""
    c = np.empty_like(a)
    c[:, 0] = a[:, 1] * b[:, 2] - a[:, 2] * b[:, 1]
    c[:, 1] = a[:, 2] * b[:, 0] - a[:, 0] * b[:, 2]
    c[:, 2] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    return c


@dataclass
class ChainPass:
    """One sweep of the chain at a fixed configuration."""

    q: np.ndarray
    ee_position: np.ndarray      # (3,)
    ee_rotation: np.ndarray      # (3,3)
    joint_origins: np.ndarray    # (n,3) world
    joint_axes_world: np.ndarray  # (n,3)
    link_coms_world: np.ndarray  # (n,3)
    link_rotations: np.ndarray   # (n,3,3) world rotation after each joint

    def ee_pose(self) -> Pose:
        return Pose(self.ee_position.copy(), matrix_to_quat(self.ee_rotation))


def chain_pass(model: ChainModel, q: np.ndarray) -> ChainPass:
    q = np.asarray(q, dtype=float)
    n = model.n_joints
    if q.shape != (n,):
        raise ValueError(f"expected {n} joint angles, got shape {q.shape}")
    if HAVE_NUMBA and model.offsets_rot_identity and model.tool_rot_identity:
        origins, axes, coms, rots, ee_p, ee_rot = chain_sweep(model, q)
        return ChainPass(q, ee_p, ee_rot, origins, axes, coms, rots)
    p = np.zeros(3)
    rot = np.eye(3)
    origins = np.empty((n, 3))
    axes = np.empty((n, 3))
    coms = np.empty((n, 3))
    rots = np.empty((n, 3, 3))
    plain_offsets = model.offsets_rot_identity
    for i in range(n):
        p = p + rot @ model.joint_offsets_t[i]
        if not plain_offsets:
            rot = rot @ model.joint_offsets_rot[i]
        origins[i] = p
        axes[i] = rot @ model.joint_axes[i]
        rot = rot @ model.joint_rotation(i, q[i])
        rots[i] = rot
        coms[i] = p + rot @ model.link_com_local[i]
    ee_p = p + rot @ model.tool_t
    ee_rot = rot @ model.tool_rot if not model.tool_rot_identity else rot
    return ChainPass(q, ee_p, ee_rot, origins, axes, coms, rots)


def forward_kinematics(model: ChainModel, q: np.ndarray) -> Pose:
    """Tool-tip pose in the base frame."""
    return chain_pass(model, q).ee_pose()


def geometric_jacobian(model: ChainModel, q: np.ndarray,
                       passed: ChainPass | None = None) -> np.ndarray:
    """6 x n map from joint rates to tool twist [linear; angular], base frame."""
    cp = passed if passed is not None else chain_pass(model, q)
    arm = cp.ee_position - cp.joint_origins          # (n,3)
    jac = np.empty((6, model.n_joints))
    jac[:3] = cross_rows(cp.joint_axes_world, arm).T
    jac[3:] = cp.joint_axes_world.T
    return jac


def point_jacobian(model: ChainModel, cp: ChainPass, point: np.ndarray) -> np.ndarray:
    """3 x n positional Jacobian of a material point rigidly attached to the tool."""
    arm = point - cp.joint_origins
    return cross_rows(cp.joint_axes_world, arm).T


def gravity_torque(model: ChainModel, cp: ChainPass) -> np.ndarray:
    """Generalized gravity G(q): joint torque the arm must resist to hold still.

    G[i] = sum over links at or beyond joint i of m*g * d(com_z)/d(q_i),
    folded into suffix sums: G[i] = g * [z_i x (S_i - M_i p_i)]_z with
    S_i the mass-weighted com sum and M_i the total mass beyond joint i.
    """
    masses = model.link_masses_kg
    weighted = masses[:, None] * cp.link_coms_world
    suffix_mc = np.cumsum(weighted[::-1], axis=0)[::-1]
    suffix_m = np.cumsum(masses[::-1])[::-1]
    lever = suffix_mc - suffix_m[:, None] * cp.joint_origins
    axes = cp.joint_axes_world
    # z-component of axes x lever, written out to stay cheap per substep
    cross_z = axes[:, 0] * lever[:, 1] - axes[:, 1] * lever[:, 0]
    return GRAVITY_M_PER_S2 * cross_z


def solve_ik(model: ChainModel, target: Pose, q0: np.ndarray,
             iterations: int = 200, tol: float = 1e-10) -> np.ndarray | None:
    """Damped least-squares inverse kinematics from the given seed.

    Utility for trial resets and reachability checks, not a controller
    path. Returns None when no solution within joint limits is found.
    """
    from .se3 import quat_to_matrix, rotation_error_matrix
    rot_goal = quat_to_matrix(target.orientation)
    q = np.asarray(q0, dtype=float).copy()
    err = np.empty(6)
    for _ in range(iterations):
        cp = chain_pass(model, q)
        err[:3] = target.position - cp.ee_position
        err[3:] = rotation_error_matrix(rot_goal, cp.ee_rotation)
        if float(np.dot(err, err)) < tol:
            break
        jac = geometric_jacobian(model, q, cp)
        dq = jac.T @ np.linalg.solve(jac @ jac.T + 1e-8 * np.eye(6), err)
        q = q + 0.5 * dq
    cp = chain_pass(model, q)
    err[:3] = target.position - cp.ee_position
    err[3:] = rotation_error_matrix(rot_goal, cp.ee_rotation)
    ok = np.linalg.norm(err[:3]) < 1e-6 and np.linalg.norm(err[3:]) < 1e-6 \
        and np.all(q > model.q_lim[:, 0]) and np.all(q < model.q_lim[:, 1])
    return q if ok else None


def potential_energy(model: ChainModel, cp: ChainPass) -> float:
    """Gravitational potential of all links (J), zero at base height."""
    return GRAVITY_M_PER_S2 * float(
        np.dot(model.link_masses_kg, cp.link_coms_world[:, 2]))


def kinetic_energy(model: ChainModel, qd: np.ndarray) -> float:
    return 0.5 * float(np.dot(model.joint_inertia_kgm2, qd * qd))
