"""Variable Cartesian impedance control with null-space posture and
joint-limit rejection.

The commanded joint torque is the sum of three independently testable
parts: the task-space spring/damper mapped through the Jacobian
transpose (plus gravity/Coriolis compensation), a posture objective
projected into the Jacobian kernel, and a limit-rejection spring that is
also sent through the kernel projector so it cannot disturb the tool.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .kinematics import ChainPass, chain_pass, geometric_jacobian, gravity_torque
from .model import ChainModel, JointState
from .se3 import Pose, orientation_error

# Adaptive damping for the kernel projector: exact solve away from
# singularities, blended regularization inside the threshold.
SINGULARITY_SIGMA = 0.05
SINGULARITY_LAMBDA = 0.1

DEFAULT_K_TRANS_N_PER_M = 600.0
DEFAULT_K_ROT_NM_PER_RAD = 30.0
DEFAULT_STIFFNESS_RATE_PER_S = 5.0


def damping_from_stiffness(stiffness: np.ndarray, effective_mass: np.ndarray) -> np.ndarray:
    """Critically damped diagonal damping: D = 2*sqrt(m_eff*K), 0 when K=0."""
    stiffness = np.asarray(stiffness, dtype=float)
    if np.any(stiffness < 0.0):
        raise ValueError("stiffness entries must be non-negative")
    return 2.0 * np.sqrt(np.asarray(effective_mass, dtype=float) * stiffness)


@dataclass
class ImpedanceGains:
    """Diagonal Cartesian gains plus null-space and slew parameters.

    Damping is always derived from the current stiffness via the
    critical-damping rule; only `update_stiffness` moves the stiffness,
    at rate `stiffness_rate_per_s` toward the target.
    """

    k_trans: np.ndarray = field(
        default_factory=lambda: np.full(3, DEFAULT_K_TRANS_N_PER_M))
    k_rot: np.ndarray = field(
        default_factory=lambda: np.full(3, DEFAULT_K_ROT_NM_PER_RAD))
    k_trans_target: np.ndarray | None = None
    k_rot_target: np.ndarray | None = None
    stiffness_rate_per_s: float = DEFAULT_STIFFNESS_RATE_PER_S
    effective_mass_trans_kg: float = 5.0
    effective_mass_rot_kgm2: float = 0.5
    k_nullspace_nm_per_rad: float = 2.0
    d_nullspace_nms_per_rad: float = 1.5
    k_limit_nm_per_rad: float = 50.0
    d_limit_nms_per_rad: float = 5.0

    def __post_init__(self):
        self.k_trans = np.asarray(self.k_trans, dtype=float)
        self.k_rot = np.asarray(self.k_rot, dtype=float)
        if self.k_trans_target is None:
            self.k_trans_target = self.k_trans.copy()
        if self.k_rot_target is None:
            self.k_rot_target = self.k_rot.copy()
        self.k_trans_target = np.asarray(self.k_trans_target, dtype=float)
        self.k_rot_target = np.asarray(self.k_rot_target, dtype=float)
        for arr in (self.k_trans, self.k_rot, self.k_trans_target, self.k_rot_target):
            if np.any(arr < 0.0):
                raise ValueError("stiffness entries must be non-negative")
        if self.stiffness_rate_per_s <= 0.0:
            raise ValueError("stiffness rate must be positive")

    @property
    def d_trans(self) -> np.ndarray:
        return damping_from_stiffness(self.k_trans, self.effective_mass_trans_kg)

    @property
    def d_rot(self) -> np.ndarray:
        return damping_from_stiffness(self.k_rot, self.effective_mass_rot_kgm2)

    def with_targets(self, k_trans_target=None, k_rot_target=None) -> "ImpedanceGains":
        """New gains with retargeted stiffness; current stiffness untouched."""
        out = replace(self)
        if k_trans_target is not None:
            out.k_trans_target = np.broadcast_to(
                np.asarray(k_trans_target, dtype=float), (3,)).copy()
        if k_rot_target is not None:
            out.k_rot_target = np.broadcast_to(
                np.asarray(k_rot_target, dtype=float), (3,)).copy()
        return out

    def to_dict(self) -> dict:
        return {
            "stiffness_translational_n_per_m": self.k_trans.tolist(),
            "stiffness_rotational_nm_per_rad": self.k_rot.tolist(),
            "stiffness_target_translational_n_per_m": self.k_trans_target.tolist(),
            "stiffness_target_rotational_nm_per_rad": self.k_rot_target.tolist(),
            "stiffness_rate_per_s": self.stiffness_rate_per_s,
            "effective_mass_translational_kg": self.effective_mass_trans_kg,
            "effective_mass_rotational_kgm2": self.effective_mass_rot_kgm2,
            "nullspace_stiffness_nm_per_rad": self.k_nullspace_nm_per_rad,
            "nullspace_damping_nms_per_rad": self.d_nullspace_nms_per_rad,
            "joint_limit_stiffness_nm_per_rad": self.k_limit_nm_per_rad,
            "joint_limit_damping_nms_per_rad": self.d_limit_nms_per_rad,
        }

    @staticmethod
    def from_dict(d: dict) -> "ImpedanceGains":
        return ImpedanceGains(
            k_trans=np.array(d["stiffness_translational_n_per_m"], dtype=float),
            k_rot=np.array(d["stiffness_rotational_nm_per_rad"], dtype=float),
            k_trans_target=np.array(d["stiffness_target_translational_n_per_m"], dtype=float),
            k_rot_target=np.array(d["stiffness_target_rotational_nm_per_rad"], dtype=float),
            stiffness_rate_per_s=d["stiffness_rate_per_s"],
            effective_mass_trans_kg=d["effective_mass_translational_kg"],
            effective_mass_rot_kgm2=d["effective_mass_rotational_kgm2"],
            k_nullspace_nm_per_rad=d["nullspace_stiffness_nm_per_rad"],
            d_nullspace_nms_per_rad=d["nullspace_damping_nms_per_rad"],
            k_limit_nm_per_rad=d["joint_limit_stiffness_nm_per_rad"],
            d_limit_nms_per_rad=d["joint_limit_damping_nms_per_rad"],
        )


def update_stiffness(gains: ImpedanceGains, dt: float) -> ImpedanceGains:
    """One proportional slew step of the stiffness toward its target.

    K <- K + rate*(K_target - K)*dt per diagonal entry; monotone, never
    overshoots, and damping is re-derived from the new stiffness.
    """
    rate = gains.stiffness_rate_per_s
    if rate * dt >= 1.0:
        raise ValueError("stiffness rate times dt must stay below 1")
    new = replace(gains)
    new.k_trans = gains.k_trans + rate * (gains.k_trans_target - gains.k_trans) * dt
    new.k_rot = gains.k_rot + rate * (gains.k_rot_target - gains.k_rot) * dt
    return new


@dataclass
class ControllerCommand:
    """Everything the torque law needs for one tick."""

    x_goal: Pose
    gains: ImpedanceGains
    q_nullspace: np.ndarray
    gripper: str = "hold"  # open | close | hold

    def __post_init__(self):
        self.q_nullspace = np.asarray(self.q_nullspace, dtype=float)
        if self.gripper not in ("open", "close", "hold"):
            raise ValueError(f"unknown gripper command {self.gripper!r}")


def pose_error(x_goal: Pose, cp: ChainPass) -> np.ndarray:
    """6-D error [translation; rotation vector] from current tool pose to goal."""
    err = np.empty(6)
    err[:3] = x_goal.position - cp.ee_position
    from .se3 import matrix_to_quat
    err[3:] = orientation_error(x_goal.orientation, matrix_to_quat(cp.ee_rotation))
    return err


def task_torque(model: ChainModel, state: JointState, cmd: ControllerCommand,
                cp: ChainPass | None = None,
                jac: np.ndarray | None = None) -> np.ndarray:
    """Task-space impedance torque with gravity/Coriolis compensation.

    tau = J^T (K e - D xdot) + C(q, qd) + G(q); bounded near singular
    configurations because no Jacobian inverse is involved.
    """
    if cp is None:
        cp = chain_pass(model, state.q)
    if jac is None:
        jac = geometric_jacobian(model, state.q, cp)
    gains = cmd.gains
    err = pose_error(cmd.x_goal, cp)
    xdot = jac @ state.qd
    k_diag = np.concatenate([gains.k_trans, gains.k_rot])
    d_diag = np.concatenate([gains.d_trans, gains.d_rot])
    force = k_diag * err - d_diag * xdot
    return jac.T @ force + model.coriolis(state.q, state.qd) + gravity_torque(model, cp)


def nullspace_projector(model: ChainModel, jac: np.ndarray) -> np.ndarray:
    """Kernel projector I - J^T (J^T)^+ with the inertia-weighted damped
    pseudoinverse, so projected torques cause no tool acceleration.

    Damping is zero away from singularities (the projector is then exact)
    and blends in below SINGULARITY_SIGMA to keep the inverse bounded.
    """
    n = jac.shape[1]
    w = 1.0 / model.joint_inertia_kgm2
    jw = jac * w[None, :]
    a = jw @ jac.T
    sigma_min = np.linalg.svd(jac, compute_uv=False)[-1]
    if sigma_min < SINGULARITY_SIGMA:
        ratio = 1.0 - sigma_min / SINGULARITY_SIGMA
        a = a + (SINGULARITY_LAMBDA * ratio * ratio) * np.eye(a.shape[0])
    pinv_t = np.linalg.solve(a, jw)  # (J W J^T + lam)^-1 J W
    return np.eye(n) - jac.T @ pinv_t


def nullspace_torque(model: ChainModel, state: JointState, cmd: ControllerCommand,
                     cp: ChainPass | None = None,
                     jac: np.ndarray | None = None,
                     projector: np.ndarray | None = None) -> np.ndarray:
    """Posture spring/damper projected into the Jacobian kernel."""
    if cp is None:
        cp = chain_pass(model, state.q)
    if jac is None:
        jac = geometric_jacobian(model, state.q, cp)
    if projector is None:
        projector = nullspace_projector(model, jac)
    gains = cmd.gains
    raw = (gains.k_nullspace_nm_per_rad * (cmd.q_nullspace - state.q)
           - gains.d_nullspace_nms_per_rad * state.qd)
    return projector @ raw


def joint_limit_torque(model: ChainModel, state: JointState,
                       gains: ImpedanceGains) -> np.ndarray:
    """Per-joint restoring spring/damper toward the safe band, zero inside it.

    The caller is expected to project the result through the kernel
    projector before summing it into the command.
    """
    band = model.q_safe
    tau = np.zeros(model.n_joints)
    below = state.q < band[:, 0]
    above = state.q > band[:, 1]
    tau[below] = (gains.k_limit_nm_per_rad * (band[below, 0] - state.q[below])
                  - gains.d_limit_nms_per_rad * state.qd[below])
    tau[above] = (gains.k_limit_nm_per_rad * (band[above, 1] - state.q[above])
                  - gains.d_limit_nms_per_rad * state.qd[above])
    return tau


def command_torque(model: ChainModel, state: JointState, cmd: ControllerCommand,
                   cp: ChainPass | None = None) -> tuple[np.ndarray, dict]:
    """Full commanded torque: task + null-space + projected limit rejection.

    Returns the torque and its parts for logging/inspection.
    """
    if cp is None:
        cp = chain_pass(model, state.q)
    jac = geometric_jacobian(model, state.q, cp)
    projector = nullspace_projector(model, jac)
    t_task = task_torque(model, state, cmd, cp, jac)
    t_ns = nullspace_torque(model, state, cmd, cp, jac, projector)
    t_lim = projector @ joint_limit_torque(model, state, cmd.gains)
    return t_task + t_ns + t_lim, {"task": t_task, "nullspace": t_ns, "limit": t_lim}
