"""Penalty contact between tool probe points and the board/table solid.

The solid is the board box minus its hole voids, plus the table plane
z=0. A probe point penetrating the solid feels a spring force along the
nearest surface normal plus damping; tangential motion is resisted by
viscous friction capped Coulomb-style. The force law itself lives in
`fastcontact.contact_forces_kernel`; this module wraps it with the
reporting types.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fastcontact import SURFACE_NAMES, contact_forces_kernel
from .world import BoardWorld

_ZERO3 = np.zeros((1, 3))
_ONE = np.ones(1)


@dataclass
class Wrench:
    """Net contact force (N) and torque (N·m) on the tool, base frame.

    Torque is taken about `about`, the tool-tip position at evaluation.
    """

    force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    torque: np.ndarray = field(default_factory=lambda: np.zeros(3))
    about: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.force = np.asarray(self.force, dtype=float)
        self.torque = np.asarray(self.torque, dtype=float)
        if not (np.isfinite(self.force).all() and np.isfinite(self.torque).all()):
            raise ValueError("wrench entries must be finite")

    @property
    def vertical_force_n(self) -> float:
        """Upward reaction on the tool; positive while pressing down."""
        return float(self.force[2])


@dataclass
class Contact:
    """One penetrating probe point."""

    point: np.ndarray        # world, m
    normal: np.ndarray       # outward surface normal, world
    penetration_m: float
    force: np.ndarray        # world, N
    surface: str             # 'top' | 'side' | 'hole_wall' | 'hole_floor' | 'table'
    feature: str | None = None
    point_index: int = 0     # which probe point produced this contact


def contact_forces(points: np.ndarray, world: BoardWorld,
                   velocities: np.ndarray | None = None,
                   normal_masses: np.ndarray | None = None,
                   dt: float = 0.01):
    """Raw kernel outputs (forces, normals, penetrations, codes, features)."""
    use_vel = velocities is not None
    vel = velocities if use_vel else _ZERO3
    if normal_masses is None:
        # No mass information: leave the impulse caps inert.
        masses = np.full(points.shape[0], 1e6) if use_vel else _ONE
    else:
        masses = normal_masses
    params = world.contact
    return contact_forces_kernel(
        points, vel, masses, world.rot_world_board, world.board_pose.position,
        world.extents_m, world.hole_centers_x, world.hole_centers_y,
        world.hole_radii, world.hole_depths,
        params.stiffness_n_per_m, params.damping_ns_per_m,
        params.friction_mu, params.tangential_damping_ns_per_m, dt, use_vel)


def contact_wrench(points: np.ndarray, world: BoardWorld,
                   velocities: np.ndarray | None = None,
                   normal_masses: np.ndarray | None = None,
                   dt: float = 0.01) -> tuple[Wrench, list[Contact]]:
    """Contact wrench for a set of probe points.

    Static law: force = k_c * penetration * normal; zero inside hole
    voids above their floors and with no penetration anywhere. With
    velocities given, damping along the normal is added (including the
    integrator-consistent k_c*dt term) and capped so no step can reverse
    the approach velocity; tangential viscous friction is capped at mu
    times the normal force.

    Args:
        points: (N,3) probe positions, base frame.
        world: board world supplying geometry and contact constants.
        velocities: optional (N,3) probe point velocities.
        normal_masses: optional (N,) effective mass of each point along its
            contact normal, used for the damping impulse cap.
        dt: integration step the damping terms are matched to.

    Returns:
        (net wrench about the first point, list of active contacts).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    forces, normals, pens, codes, feats = contact_forces(
        points, world, velocities, normal_masses, dt)

    about = points[0].copy()
    total_force = np.zeros(3)
    total_torque = np.zeros(3)
    contacts: list[Contact] = []
    hole_names = [f.name for f in world.holes()]
    for i in range(points.shape[0]):
        if codes[i] == 0:
            continue
        f = forces[i]
        contacts.append(Contact(
            points[i].copy(), normals[i].copy(), float(pens[i]), f.copy(),
            SURFACE_NAMES[int(codes[i])],
            hole_names[feats[i]] if feats[i] >= 0 else None, i))
        total_force += f
        r = points[i] - about
        total_torque[0] += r[1] * f[2] - r[2] * f[1]
        total_torque[1] += r[2] * f[0] - r[0] * f[2]
        total_torque[2] += r[0] * f[1] - r[1] * f[0]
    return Wrench(total_force, total_torque, about), contacts


def contact_spring_energy(points: np.ndarray, world: BoardWorld) -> float:
    """Stored penalty-spring energy (J) of the probe set; audit helper."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    _, _, pens, codes, _ = contact_forces(points, world)
    k_c = world.contact.stiffness_n_per_m
    return float(0.5 * k_c * np.sum(pens[codes > 0] ** 2))
