"""Scripted-teacher demonstrations for the task-board subtasks.

These synthesize the attractor trajectories an operator would teach
kinesthetically: approach from a hover height, act on the feature, and
retreat. Insertion demos end pressed slightly below the feature floor so
the attractor keeps pulling while the search runs. All paths place the
*tool tip or held item tip* over the feature (plumb tool).
"""

from __future__ import annotations

import numpy as np

from .model import TOOL_DOWN_QUAT
from .primitives import Primitive, StiffnessProfile
from .se3 import Pose
from .trajectory import CONTROL_DT_S, Trajectory, record_sample
from .world import BoardWorld

HOVER_ABOVE_M = 0.025
DEMO_SPEED_M_S = 0.03


def _vertical_demo(xy: np.ndarray, z_from: float, z_to: float,
                   t0: float = 0.0, gripper_at_end: str | None = None,
                   dwell_s: float = 0.0) -> list:
    """Samples descending (or rising) at the demo speed, fixed xy."""
    out = []
    z = z_from
    t = t0
    step = DEMO_SPEED_M_S * CONTROL_DT_S
    direction = 1.0 if z_to >= z_from else -1.0
    while True:
        out.append((t, np.array([xy[0], xy[1], z]), "hold"))
        if abs(z - z_to) < 1e-12:
            break
        z = z_to if abs(z_to - z) <= step else z + direction * step
        t += CONTROL_DT_S
    for _ in range(int(dwell_s / CONTROL_DT_S)):
        t += CONTROL_DT_S
        out.append((t, np.array([xy[0], xy[1], z_to]), "hold"))
    if gripper_at_end:
        t += CONTROL_DT_S
        out.append((t, np.array([xy[0], xy[1], z_to]), gripper_at_end))
    return out


def _to_trajectory(samples: list) -> Trajectory:
    traj = Trajectory()
    for t, pos, grip in samples:
        record_sample(traj, Pose(pos, TOOL_DOWN_QUAT.copy()), grip, t)
    return traj


def _chain(*segments) -> list:
    """Concatenate sample segments, re-basing their timestamps."""
    out = []
    t = 0.0
    for seg in segments:
        t_base = t - seg[0][0] if out else 0.0
        for (ts, pos, grip) in seg:
            out.append((ts + t_base, pos, grip))
        t = out[-1][0] + CONTROL_DT_S
    return out


def make_press_demo(world: BoardWorld, button: str,
                    press_below_m: float = 0.008) -> Primitive:
    """Press a button: descend onto it, press, retreat."""
    top = world.feature_top_world(button)
    xy = top[:2]
    hover = top[2] + HOVER_ABOVE_M
    press = top[2] - press_below_m
    samples = _chain(
        _vertical_demo(xy, hover, press, dwell_s=0.5),
        _vertical_demo(xy, press, hover),
    )
    return Primitive(f"press_{button}", _to_trajectory(samples),
                     insertion=False, recording_frame=world.board_pose.copy(),
                     success_feature=button)


def make_pick_demo(world: BoardWorld, item: str) -> Primitive:
    """Grasp an item at its rest feature and lift it clear."""
    top = world.feature_top_world(item)
    xy = top[:2]
    hover = top[2] + HOVER_ABOVE_M
    grasp_z = top[2] + 0.002  # just above the surface, within grasp reach
    samples = _chain(
        _vertical_demo(xy, hover, grasp_z, gripper_at_end="close", dwell_s=0.2),
        _vertical_demo(xy, grasp_z, hover + world.feature(item).item_length_m),
    )
    return Primitive(f"pick_{item}", _to_trajectory(samples),
                     insertion=False, recording_frame=world.board_pose.copy(),
                     success_feature=item)


def make_insert_demo(world: BoardWorld, hole: str, item: str | None = None,
                     press_below_m: float = 0.002,
                     name: str | None = None,
                     release: bool = False,
                     spiral_pitch_m_per_rad: float | None = None) -> Primitive:
    """Insert the held item (or bare tool tip) into a hole feature.

    The demo descends until the tip sits press_below_m below the hole
    floor, which keeps the attractor pressing during a search; optionally
    releases the item once seated.
    """
    feat = world.feature(hole)
    top = world.feature_top_world(hole)
    xy = top[:2]
    tip_len = world.feature(item).item_length_m if item else 0.0
    hover = top[2] + HOVER_ABOVE_M + tip_len
    bottom = top[2] - feat.depth_m - press_below_m + tip_len
    if release:
        samples = _chain(
            _vertical_demo(xy, hover, bottom, dwell_s=0.3),
            _vertical_demo(xy, bottom, bottom, gripper_at_end="open", dwell_s=0.1),
        )
    else:
        samples = _vertical_demo(xy, hover, bottom, dwell_s=0.3)
    return Primitive(name or f"insert_{hole}", _to_trajectory(samples),
                     insertion=True, recording_frame=world.board_pose.copy(),
                     success_feature=hole,
                     exploration_pitch_m_per_rad=spiral_pitch_m_per_rad)


def make_slide_demo(world: BoardWorld, lid: str,
                    press_below_m: float = 0.008) -> Primitive:
    """Slide the case lid: press onto it and drag along its slide axis."""
    feat = world.feature(lid)
    top = world.feature_top_world(lid)
    xy0 = top[:2]
    z_slide = top[2] - press_below_m
    hover = top[2] + HOVER_ABOVE_M
    from .se3 import quat_rotate
    slide3 = quat_rotate(world.board_pose.orientation,
                         np.array([feat.slide_dir[0], feat.slide_dir[1], 0.0]))
    # Slide a little past the required travel, as a demonstrator would,
    # so the tool's friction lag still completes the stroke.
    xy1 = xy0 + slide3[:2] * (feat.slide_travel_m + 0.010)

    descend = _vertical_demo(xy0, hover, z_slide)
    t = descend[-1][0]
    drag = []
    n_steps = max(int(feat.slide_travel_m / (DEMO_SPEED_M_S * CONTROL_DT_S)), 1)
    for i in range(1, n_steps + 1):
        t += CONTROL_DT_S
        s = i / n_steps
        drag.append((t, np.array([(1 - s) * xy0[0] + s * xy1[0],
                                  (1 - s) * xy0[1] + s * xy1[1], z_slide]), "hold"))
    rise = _vertical_demo(xy1, z_slide, hover, t0=t + CONTROL_DT_S)
    samples = descend + drag + rise
    return Primitive(f"slide_{lid}", _to_trajectory(samples),
                     insertion=False, recording_frame=world.board_pose.copy(),
                     success_feature=lid)


def default_task_program(world: BoardWorld) -> list[Primitive]:
    """Reference program touching every feature family on the board."""
    return [
        make_press_demo(world, "blue_button"),
        make_pick_demo(world, "key_rest"),
        make_insert_demo(world, "key_hole", item="key_rest", release=True),
        make_pick_demo(world, "battery_bay"),
        make_insert_demo(world, "battery_deposit", item="battery_bay",
                         release=True, name="place_battery"),
        make_slide_demo(world, "case_lid"),
        make_press_demo(world, "red_button"),
    ]
