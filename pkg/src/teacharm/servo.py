"""Closed-loop stepping: impedance servo around the simulated plant.

Goals, gains, and teaching commands change at the 0.01 s session tick;
inside each tick the task-space spring/damper and gravity compensation
are re-evaluated at the plant substep rate (like the fast inner torque
loop of a real torque-controlled arm), while the null-space and
joint-limit terms are held across the tick. A zero-order hold of the
full torque at 100 Hz is closed-loop unstable with critically damped
Cartesian gains on this arm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import Contact, Wrench, contact_forces, contact_wrench
from .control import (ControllerCommand, joint_limit_torque, nullspace_projector,
                      nullspace_torque)
from .dynamics import N_SUBSTEPS, SimInstabilityError, tool_points_world
from .kinematics import (chain_pass, geometric_jacobian, gravity_torque,
                         point_jacobian)
from .model import ChainModel, JointState
from .se3 import quat_to_matrix, rotation_error_matrix
from .world import BoardWorld

UP = np.array([0.0, 0.0, 1.0])


@dataclass
class TickResult:
    state: JointState
    wrench: Wrench
    contacts: list[Contact]
    hard_limit_joints: list[int]
    ee_position: np.ndarray
    ee_rotation: np.ndarray
    torque_parts: dict

    @property
    def hard_limit(self) -> bool:
        return bool(self.hard_limit_joints)


@dataclass
class ServoArm:
    """Arm plant plus the inner impedance servo; stepped once per tick."""

    model: ChainModel
    world: BoardWorld | None
    state: JointState
    probe_offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))
    dt: float = 0.01
    n_substeps: int = N_SUBSTEPS
    gravity_enabled: bool = True
    external_wrench_fn: object = None  # optional fn(points_world) -> (P,3) forces

    def __post_init__(self):
        self.probe_offsets = np.atleast_2d(np.asarray(self.probe_offsets, dtype=float))
        self._chain = chain_pass(self.model, self.state.q)
        self._probe_span = float(np.linalg.norm(self.probe_offsets, axis=1).max())

    @property
    def chain(self):
        return self._chain

    def ee_pose(self):
        return self._chain.ee_pose()

    def set_probe_offsets(self, offsets: np.ndarray):
        self.probe_offsets = np.atleast_2d(np.asarray(offsets, dtype=float))
        self._probe_span = float(np.linalg.norm(self.probe_offsets, axis=1).max())

    def probe_points(self) -> np.ndarray:
        return tool_points_world(self.model, self._chain, self.probe_offsets)

    def tick(self, cmd: ControllerCommand) -> TickResult:
        """Advance one control tick under the given impedance command."""
        model = self.model
        inertia = model.joint_inertia_kgm2
        inv_inertia = 1.0 / inertia
        h = self.dt / self.n_substeps
        lo, hi = model.q_lim[:, 0], model.q_lim[:, 1]
        gains = cmd.gains
        k_diag = np.concatenate([gains.k_trans, gains.k_rot])
        d_diag = np.concatenate([gains.d_trans, gains.d_rot])

        cp = self._chain
        jac0 = geometric_jacobian(model, self.state.q, cp)
        projector = nullspace_projector(model, jac0)
        tau_ns = nullspace_torque(model, self.state, cmd, cp, jac0, projector)
        tau_lim = projector @ joint_limit_torque(model, self.state, gains)
        tau_slow = tau_ns + tau_lim
        rot_goal = quat_to_matrix(cmd.x_goal.orientation)
        goal_p = cmd.x_goal.position

        # Contact can only happen when a probe point can reach the board
        # top or the table plane; skip the contact math otherwise.
        contact_possible = False
        if self.world is not None:
            top_z = self.world.board_pose.position[2] + self.world.height_m
            contact_possible = (self.state.q is not None and
                                cp.ee_position[2] - self._probe_span < top_z + 0.01)

        q = self.state.q
        qd = self.state.qd
        wrench = Wrench(about=cp.ee_position.copy())
        contacts: list[Contact] = []
        hard_set: set[int] = set()
        tau_task_last = np.zeros(model.n_joints)
        err = np.empty(6)

        # Per-point Jacobians and effective masses move little within one
        # tick; evaluate them once and keep contact geometry per substep.
        jacs = None
        masses = None
        if contact_possible or self.external_wrench_fn is not None:
            pts0 = tool_points_world(model, cp, self.probe_offsets)
            jacs = [point_jacobian(model, cp, pt) for pt in pts0]
            masses = np.empty(len(pts0))
            for i, jp in enumerate(jacs):
                u = jp.T @ UP
                denom = float(np.dot(u * u, inv_inertia))
                masses[i] = 1.0 / denom if denom > 1e-12 else 1e6

        for k in range(self.n_substeps):
            sub_cp = cp if k == 0 else chain_pass(model, q)
            jac = jac0 if k == 0 else geometric_jacobian(model, q, sub_cp)

            err[:3] = goal_p - sub_cp.ee_position
            err[3:] = rotation_error_matrix(rot_goal, sub_cp.ee_rotation)
            xdot = jac @ qd
            # Compensation and plant gravity use the same evaluation, so
            # they cancel exactly in free space (no drift at rest).
            gravity = gravity_torque(model, sub_cp) if self.gravity_enabled \
                else np.zeros(model.n_joints)
            tau_task = jac.T @ (k_diag * err - d_diag * xdot)
            tau_task_last = tau_task + gravity
            tau = tau_task + tau_slow + gravity

            tau_ext = np.zeros(model.n_joints)
            if jacs is not None:
                points = tool_points_world(model, sub_cp, self.probe_offsets)
                velocities = np.array([j @ qd for j in jacs])
                if contact_possible:
                    forces, _, pens, codes, _ = contact_forces(
                        points, self.world, velocities, masses, h)
                    for i in range(len(jacs)):
                        if codes[i] != 0:
                            tau_ext += jacs[i].T @ forces[i]
                    if k == self.n_substeps - 1:
                        wrench, contacts = contact_wrench(points, self.world,
                                                          velocities, masses, h)
                if self.external_wrench_fn is not None:
                    forces_ext = self.external_wrench_fn(points, velocities)
                    for jp, f in zip(jacs, forces_ext):
                        tau_ext += jp.T @ f

            qdd = (tau + tau_ext - gravity
                   - model.joint_damping_nms * qd) * inv_inertia
            qd = qd + h * qdd
            q = q + h * qd

            if not np.isfinite(qd).all() or not np.isfinite(q).all():
                raise SimInstabilityError(f"non-finite state at t={self.state.t:.3f}s")
            speed = np.abs(qd)
            if np.any(speed > model.velocity_cap_rad_s):
                worst = int(np.argmax(speed))
                raise SimInstabilityError(
                    f"joint {worst} speed {speed[worst]:.1f} rad/s exceeds cap "
                    f"{model.velocity_cap_rad_s} at t={self.state.t:.3f}s")

            below, above = q < lo, q > hi
            if below.any() or above.any():
                hard_set.update(np.nonzero(below | above)[0].tolist())
                q = np.clip(q, lo, hi)
                qd = qd.copy()
                qd[below | above] = 0.0

        self.state = JointState(q, qd, self.state.t + self.dt)
        self._chain = chain_pass(model, q)
        return TickResult(self.state, wrench, contacts, sorted(hard_set),
                          self._chain.ee_position.copy(),
                          self._chain.ee_rotation.copy(),
                          {"task": tau_task_last, "nullspace": tau_ns, "limit": tau_lim})
