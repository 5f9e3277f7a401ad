"""Torque-level arm simulation: semi-implicit Euler with penalty contact.

The plant uses a diagonal constant joint-space inertia, the exact gravity
vector from the link masses, viscous joint friction, and tool probe
points colliding with the board world. Identical inputs always produce
bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .contact import Contact, Wrench, contact_wrench
from .kinematics import ChainPass, chain_pass, gravity_torque, point_jacobian
from .model import ChainModel, JointState
from .world import BoardWorld

MAX_STEP_S = 0.01

# Physics substeps per commanded-torque interval (zero-order hold). The
# Cartesian damping demanded by the critical-damping rule is too stiff
# for a single 10 ms explicit step on the light wrist joints; the plant
# resolves it at 2.5 ms like a real inner torque loop.
N_SUBSTEPS = 4


class SimInstabilityError(RuntimeError):
    """Integration blew up; the episode must be aborted."""


@dataclass
class StepResult:
    state: JointState
    wrench: Wrench
    contacts: list[Contact]
    hard_limit_joints: list[int] = field(default_factory=list)
    chain: ChainPass | None = None

    @property
    def hard_limit(self) -> bool:
        return bool(self.hard_limit_joints)


def tool_points_world(model: ChainModel, cp: ChainPass,
                      offsets: np.ndarray) -> np.ndarray:
    """World positions of tool-frame probe offsets."""
    return cp.ee_position + offsets @ cp.ee_rotation.T


def step_dynamics(model: ChainModel, state: JointState, tau_cmd: np.ndarray,
                  world: BoardWorld | None, dt: float,
                  probe_offsets: np.ndarray | None = None,
                  gravity_enabled: bool = True,
                  cp: ChainPass | None = None,
                  n_substeps: int = N_SUBSTEPS) -> StepResult:
    """Advance the arm one commanded-torque interval.

    Integrates M qdd + G(q) = tau_cmd + tau_ext - d_plant*qd with
    semi-implicit Euler substeps while tau_cmd is held constant;
    tau_ext maps each probe-point contact force through that point's
    Jacobian.

    Args:
        probe_offsets: (P,3) probe points in the tool frame; defaults to
            the tool tip alone.
        cp: optional chain pass at state.q, reused if the caller already
            computed it this tick.

    Returns:
        StepResult carrying the new state, the contact wrench at the last
        substep, and any hard joint-limit events.

    Raises:
        SimInstabilityError: non-finite state or joint speed above the cap.
    """
    if not 0.0 < dt <= MAX_STEP_S:
        raise ValueError(f"dt must be in (0, {MAX_STEP_S}], got {dt}")
    tau_cmd = np.asarray(tau_cmd, dtype=float)
    if tau_cmd.shape != state.q.shape or not np.isfinite(tau_cmd).all():
        raise ValueError("commanded torque must be finite and match joint count")

    if cp is None:
        cp = chain_pass(model, state.q)
    inertia = model.joint_inertia_kgm2
    inv_inertia = 1.0 / inertia
    h = dt / n_substeps
    up = np.array([0.0, 0.0, 1.0])
    if probe_offsets is None:
        probe_offsets = np.zeros((1, 3))

    q = state.q
    qd = state.qd
    wrench = Wrench(about=cp.ee_position.copy())
    contacts: list[Contact] = []
    hard_set: set[int] = set()
    lo, hi = model.q_lim[:, 0], model.q_lim[:, 1]

    sub_cp = cp
    for k in range(n_substeps):
        if k > 0:
            sub_cp = chain_pass(model, q)
        tau_ext = np.zeros(model.n_joints)
        if world is not None:
            points = tool_points_world(model, sub_cp, probe_offsets)
            jacs = [point_jacobian(model, sub_cp, pt) for pt in points]
            velocities = np.array([j @ qd for j in jacs])
            masses = np.empty(len(points))
            for i, jac in enumerate(jacs):
                u = jac.T @ up
                denom = float(np.dot(u * u, inv_inertia))
                masses[i] = 1.0 / denom if denom > 1e-12 else 1e6
            wrench, contacts = contact_wrench(points, world, velocities, masses, h)
            for c in contacts:
                tau_ext += jacs[c.point_index].T @ c.force

        gravity = gravity_torque(model, sub_cp) if gravity_enabled \
            else np.zeros(model.n_joints)
        qdd = (tau_cmd + tau_ext - gravity - model.joint_damping_nms * qd) * inv_inertia
        qd = qd + h * qdd
        q = q + h * qd

        if not np.isfinite(qd).all() or not np.isfinite(q).all():
            raise SimInstabilityError(
                f"non-finite state at t={state.t:.3f}s; "
                f"|tau_cmd|max={np.abs(tau_cmd).max():.1f}")
        speed = np.abs(qd)
        if np.any(speed > model.velocity_cap_rad_s):
            worst = int(np.argmax(speed))
            raise SimInstabilityError(
                f"joint {worst} speed {speed[worst]:.1f} rad/s exceeds cap "
                f"{model.velocity_cap_rad_s} at t={state.t:.3f}s")

        below, above = q < lo, q > hi
        if below.any() or above.any():
            # Mirrors a safety controller locking the violating joints.
            hard_set.update(np.nonzero(below | above)[0].tolist())
            q = np.clip(q, lo, hi)
            qd = qd.copy()
            qd[below | above] = 0.0

    new_state = JointState(q, qd, state.t + dt)
    return StepResult(new_state, wrench, contacts, sorted(hard_set), cp)


@dataclass
class ArmSim:
    """Owning wrapper: model + world + probe geometry + current state."""

    model: ChainModel
    world: BoardWorld | None
    state: JointState
    probe_offsets: np.ndarray = field(default_factory=lambda: np.zeros((1, 3)))
    dt: float = 0.01
    gravity_enabled: bool = True

    def __post_init__(self):
        self.probe_offsets = np.atleast_2d(np.asarray(self.probe_offsets, dtype=float))
        self._chain = chain_pass(self.model, self.state.q)

    @property
    def chain(self) -> ChainPass:
        return self._chain

    def step(self, tau_cmd: np.ndarray) -> StepResult:
        result = step_dynamics(self.model, self.state, tau_cmd, self.world,
                               self.dt, self.probe_offsets,
                               self.gravity_enabled, cp=self._chain)
        self.state = result.state
        self._chain = chain_pass(self.model, self.state.q)
        return result

    def set_probe_offsets(self, offsets: np.ndarray):
        self.probe_offsets = np.atleast_2d(np.asarray(offsets, dtype=float))

    def probe_points(self) -> np.ndarray:
        return tool_points_world(self.model, self._chain, self.probe_offsets)
