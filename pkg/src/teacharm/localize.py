"""Board localization: transform composition, compliant side probing,
line intersection, planar refinement, and trajectory re-targeting.

The visual stage estimates the board pose from cloud registration; two
side probes with zero rotational z-stiffness let the fingertip edge
align flush with the physical faces, and the two contact lines pin down
the planar pose far more accurately than vision alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .control import ControllerCommand, ImpedanceGains, update_stiffness
from .executor import FINGERTIP_OFFSETS, FINGERTIP_RAISE_M, ForceFilter
from .model import TOOL_DOWN_QUAT
from .se3 import (FrameTransform, Pose, quat_from_axis_angle, quat_mul,
                  quat_rotate, quat_slerp)
from .servo import ServoArm
from .trajectory import Trajectory

UNIT_Z = np.array([0.0, 0.0, 1.0])

# Probed faces (board-frame outward normals): the robot-facing x side and
# one y side, both comfortably inside the workspace.
PROBE_SIDES = {
    "x": np.array([-1.0, 0.0, 0.0]),
    "y": np.array([0.0, 1.0, 0.0]),
}


class ProbeFailure(RuntimeError):
    pass


class LineDegeneracyError(ValueError):
    pass


@dataclass
class ProbeResult:
    """Contact line recovered from one compliant side probe."""

    contact_point_m: np.ndarray   # on the face, world frame
    direction: np.ndarray         # unit tangent along the face, world frame
    residual_force_n: np.ndarray  # tool wrench force at stop
    side: str

    def __post_init__(self):
        self.direction = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(self.direction)
        if abs(n - 1.0) > 1e-6:
            raise ValueError("probe line direction must be unit length")


@dataclass
class ProbeParams:
    standoff_m: float = 0.015
    approach_speed_m_s: float = 0.015
    transit_speed_m_s: float = 0.15
    contact_force_n: float = 5.0
    travel_budget_m: float = 0.05
    settle_s: float = 0.35
    pre_slew_s: float = 0.6
    slew_rate_per_s: float = 8.0
    # Measurement imperfections of the recovered line: random noise
    # (encoder/F-T realism, applied only when the caller hands a seeded
    # RNG) plus a systematic inward bias along the face normal (fingertip
    # geometry / edge chamfer error).
    position_noise_m: float = 3.0e-4
    direction_noise_rad: float = 3.0e-3
    normal_bias_m: float = 0.0

    def to_dict(self) -> dict:
        return {
            "standoff_m": self.standoff_m,
            "approach_speed_m_per_s": self.approach_speed_m_s,
            "transit_speed_m_per_s": self.transit_speed_m_s,
            "contact_force_n": self.contact_force_n,
            "travel_budget_m": self.travel_budget_m,
            "settle_s": self.settle_s,
            "pre_slew_s": self.pre_slew_s,
            "slew_rate_per_s": self.slew_rate_per_s,
            "position_noise_m": self.position_noise_m,
            "direction_noise_rad": self.direction_noise_rad,
            "normal_bias_m": self.normal_bias_m,
        }

    @staticmethod
    def from_dict(d: dict) -> "ProbeParams":
        return ProbeParams(
            standoff_m=d["standoff_m"],
            approach_speed_m_s=d["approach_speed_m_per_s"],
            transit_speed_m_s=d["transit_speed_m_per_s"],
            contact_force_n=d["contact_force_n"],
            travel_budget_m=d["travel_budget_m"],
            settle_s=d["settle_s"],
            pre_slew_s=d["pre_slew_s"],
            slew_rate_per_s=d["slew_rate_per_s"],
            position_noise_m=d["position_noise_m"],
            direction_noise_rad=d["direction_noise_rad"],
            normal_bias_m=d.get("normal_bias_m", 0.0),
        )


def compose_board_estimate(t_cam_in_rob: FrameTransform, t_icp: FrameTransform,
                           t_board_start: FrameTransform) -> FrameTransform:
    """New board pose from the registration result.

    board->robot(new) = cam->robot . icp(cam->cam) . robot->cam .
    board->robot(start); pure composition with frame-name checking.
    """
    return (t_cam_in_rob.compose(t_icp)
            .compose(t_cam_in_rob.inverse())
            .compose(t_board_start))


def intersect_lines(p1: np.ndarray, d1: np.ndarray, p2: np.ndarray,
                    d2: np.ndarray, min_angle_deg: float = 10.0) -> np.ndarray:
    """Least-squares closest point of two 3-D lines.

    Exact intersection when the lines are coplanar; raises on
    near-parallel input (angle below min_angle_deg).
    """
    d1 = np.asarray(d1, dtype=float) / np.linalg.norm(d1)
    d2 = np.asarray(d2, dtype=float) / np.linalg.norm(d2)
    p1 = np.asarray(p1, dtype=float)
    p2 = np.asarray(p2, dtype=float)
    dot = float(np.dot(d1, d2))
    if abs(dot) > np.cos(np.radians(min_angle_deg)):
        raise LineDegeneracyError(
            f"probe lines nearly parallel (|cos|={abs(dot):.4f})")
    # closest points: p1 + s d1 and p2 + t d2
    r = p2 - p1
    a = np.array([[1.0, -dot], [dot, -1.0]])
    b = np.array([np.dot(d1, r), np.dot(d2, r)])
    s, t = np.linalg.solve(a, b)
    return 0.5 * (p1 + s * d1 + p2 + t * d2)


def yaw_of(v: np.ndarray) -> float:
    return float(np.arctan2(v[1], v[0]))


def _down_quat_with_x_along(direction_xy: np.ndarray) -> np.ndarray:
    """Tool-down orientation whose tool x-axis points along direction_xy."""
    # TOOL_DOWN maps tool x to world -x; rotate about world z to match.
    psi = yaw_of(direction_xy) - np.pi
    return quat_mul(quat_from_axis_angle(UNIT_Z, psi), TOOL_DOWN_QUAT)


def haptic_probe(estimate: FrameTransform, side: str, arm: ServoArm,
                 gains: ImpedanceGains, q_nullspace: np.ndarray,
                 params: ProbeParams | None = None,
                 rng: np.random.Generator | None = None,
                 on_tick=None) -> ProbeResult:
    """Drive the fingertip edge against one estimated side face.

    Approaches along the face normal with zero rotational z-stiffness so
    contact torques yaw the edge flush against the physical face, then
    reads the aligned fingertips back as a contact line (penetration-
    compensated via the contact force and stiffness).

    Args:
        estimate: board->robot pose estimate to aim at.
        side: 'x' (robot-facing face) or 'y'.
        rng: seeded generator for the line measurement noise; noiseless
            when omitted.

    Raises:
        ProbeFailure: no contact inside the travel budget.
    """
    params = params or ProbeParams()
    if side not in PROBE_SIDES:
        raise ValueError(f"side must be one of {sorted(PROBE_SIDES)}, got {side!r}")
    world = arm.world
    if world is None:
        raise ProbeFailure("no world to probe")
    dt = arm.dt

    normal_board = PROBE_SIDES[side]
    half = world.extents_m[:2] / 2.0
    face_center_board = normal_board * np.array([half[0], half[1], 0.0]) \
        + np.array([0.0, 0.0, 0.75 * world.extents_m[2]])
    n_world = quat_rotate(estimate.rotation, normal_board)
    n_world[2] = 0.0
    n_world /= np.linalg.norm(n_world)
    tangent = np.cross(UNIT_Z, n_world)
    face_center = estimate.apply(face_center_board)
    # The fingertips ride above the tool origin; aim the EE lower so the
    # edge meets the face at the intended height.
    face_center[2] -= FINGERTIP_RAISE_M

    start = face_center + params.standoff_m * n_world
    goal_quat = _down_quat_with_x_along(tangent[:2])
    # Full rotational stiffness while traveling (the yaw must be taken
    # up first); the z component is released only at the standoff.
    probe_gains = gains.with_targets(k_rot_target=np.array([30.0, 30.0, 30.0]))
    probe_gains = replace(probe_gains, stiffness_rate_per_s=params.slew_rate_per_s)

    original_offsets = arm.probe_offsets.copy()
    arm.set_probe_offsets(FINGERTIP_OFFSETS)
    force_filter = ForceFilter(10.0, dt)

    def tick(goal_pos, g):
        nonlocal probe_gains
        probe_gains = update_stiffness(probe_gains, dt)
        cmd = ControllerCommand(Pose(goal_pos, goal_quat), probe_gains,
                                q_nullspace)
        res = arm.tick(cmd)
        if on_tick is not None:
            on_tick(res)
        return res

    try:
        # Route above the board, descend outside the face, let the z
        # rotational stiffness slew away, then creep in until contact.
        safe_z = world.board_pose.position[2] + world.extents_m[2] + 0.05
        from_pos = arm.chain.ee_position.copy()
        from_quat = arm.chain.ee_pose().orientation
        waypoints = [np.array([from_pos[0], from_pos[1], max(safe_z, from_pos[2])]),
                     np.array([start[0], start[1], max(safe_z, start[2])]),
                     start]
        pos_prev = from_pos
        total = sum(np.linalg.norm(b - a) for a, b in
                    zip([from_pos] + waypoints[:-1], waypoints))
        walked = 0.0
        for wp in waypoints:
            seg = float(np.linalg.norm(wp - pos_prev))
            n_seg = max(int(seg / (params.transit_speed_m_s * dt)), 1)
            for i in range(n_seg):
                s = (i + 1) / n_seg
                pos = (1 - s) * pos_prev + s * wp
                frac = (walked + s * seg) / max(total, 1e-9)
                probe_gains = update_stiffness(probe_gains, dt)
                cmd = ControllerCommand(
                    Pose(pos, quat_slerp(from_quat, goal_quat, frac)),
                    probe_gains, q_nullspace)
                res = arm.tick(cmd)
                if on_tick is not None:
                    on_tick(res)
            walked += seg
            pos_prev = wp
        # Let the commanded yaw settle, then free the z rotation.
        for _ in range(int(0.35 / dt)):
            res = tick(start, probe_gains)
        probe_gains = probe_gains.with_targets(
            k_rot_target=np.array([30.0, 30.0, 0.0]))
        for _ in range(int(params.pre_slew_s / dt)):
            res = tick(start, probe_gains)

        travel = 0.0
        contact = False
        goal_pos = start.copy()
        while travel < params.travel_budget_m + params.standoff_m:
            goal_pos = goal_pos - params.approach_speed_m_s * dt * n_world
            travel += params.approach_speed_m_s * dt
            res = tick(goal_pos, probe_gains)
            f_in = force_filter.update(float(np.dot(res.wrench.force, n_world)))
            if f_in >= params.contact_force_n:
                contact = True
                break
        if not contact:
            raise ProbeFailure(
                f"no contact on side {side!r} within "
                f"{params.travel_budget_m * 1000:.0f} mm travel")

        # Hold the attractor; compliance settles the edge flush.
        for _ in range(int(params.settle_s / dt)):
            res = tick(goal_pos, probe_gains)

        tips = arm.probe_points()[:2]
        corrections = np.zeros((2, 3))
        for c in res.contacts:
            if c.point_index < 2:
                corrections[c.point_index] = c.penetration_m * c.normal
        surf = tips + corrections
        direction = surf[1] - surf[0]
        direction /= np.linalg.norm(direction)
        if np.dot(direction, tangent) < 0.0:
            direction = -direction
        point = 0.5 * (surf[0] + surf[1])
        point = point - params.normal_bias_m * n_world
        if rng is not None:
            point = point + rng.normal(0.0, params.position_noise_m, 3) \
                * np.array([1.0, 1.0, 0.0])
            direction = direction + np.cross(
                UNIT_Z, direction) * rng.normal(0.0, params.direction_noise_rad)
            direction /= np.linalg.norm(direction)
        result = ProbeResult(point, direction, res.wrench.force.copy(), side)

        # Retreat so the next motion starts free of the face.
        for i in range(int(params.standoff_m / (0.02 * dt))):
            goal_pos = goal_pos + 0.02 * dt * n_world
            tick(goal_pos, probe_gains)
        return result
    finally:
        arm.set_probe_offsets(original_offsets)


def refine_estimate(estimate: FrameTransform, probe_x: ProbeResult,
                    probe_y: ProbeResult,
                    extents_m: np.ndarray) -> FrameTransform:
    """Planar refinement of the board estimate from two probe lines.

    Yaw comes from the probed edge directions, the origin from the corner
    their intersection pins down; z, roll, and pitch are kept from the
    visual estimate (side probes cannot observe them).
    """
    est_yaw = yaw_of(quat_rotate(estimate.rotation, np.array([1.0, 0.0, 0.0])))

    def wrap(a):
        return (a + np.pi) % (2.0 * np.pi) - np.pi

    def implied_yaw(probe: ProbeResult) -> float:
        # Probe direction approximates the face tangent z x n rotated by
        # the board yaw; compare against the estimate's prediction.
        n_board = PROBE_SIDES[probe.side]
        t_board = np.cross(UNIT_Z, n_board)
        predicted = yaw_of(t_board) + est_yaw
        measured = yaw_of(probe.direction)
        return est_yaw + wrap(measured - predicted)

    yaw = est_yaw + 0.5 * (wrap(implied_yaw(probe_x) - est_yaw)
                           + wrap(implied_yaw(probe_y) - est_yaw))

    corner = intersect_lines(probe_x.contact_point_m, probe_x.direction,
                             probe_y.contact_point_m, probe_y.direction)
    # The corner shared by the two probed faces, in board coordinates.
    corner_board = np.array([PROBE_SIDES[probe_x.side][0] * extents_m[0] / 2.0,
                             PROBE_SIDES[probe_y.side][1] * extents_m[1] / 2.0])
    cos_y, sin_y = np.cos(yaw), np.sin(yaw)
    rot2 = np.array([[cos_y, -sin_y], [sin_y, cos_y]])
    center_xy = corner[:2] - rot2 @ corner_board

    delta_yaw = yaw - est_yaw
    rotation = quat_mul(quat_from_axis_angle(UNIT_Z, delta_yaw), estimate.rotation)
    translation = np.array([center_xy[0], center_xy[1], estimate.translation[2]])
    return FrameTransform(rotation, translation, estimate.source, estimate.target)


def transform_trajectory(traj: Trajectory, t_start: FrameTransform,
                         t_new: FrameTransform) -> Trajectory:
    """Re-target a robot-frame trajectory from the recording board pose to
    a new board pose: x_new = t_new . inverse(t_start) . x.

    Timestamps and gripper commands are untouched; inter-sample distances
    are preserved exactly (rigid motion).
    """
    chain = t_new.compose(t_start.inverse())
    out = traj.copy()
    for s in out.samples:
        s.position = chain.apply(s.position)
        s.orientation = quat_mul(chain.rotation, s.orientation)
    return out
