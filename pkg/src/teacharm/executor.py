"""Primitive execution: constant-velocity transitions, attractor
streaming, online corrective reshaping, and force-triggered spiral
search for insertion-labelled primitives.

The loop runs at the fixed control tick. Teaching commands arrive
through an ordered queue and at most one is applied per tick, so a
command's effect is visible in the very next state snapshot.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .control import ControllerCommand, ImpedanceGains, update_stiffness
from .dynamics import SimInstabilityError
from .exploration import ExplorationState, exploration_offset, update_exploration
from .primitives import Primitive
from .se3 import Pose, quat_slerp
from .servo import ServoArm, TickResult
from .trajectory import (CONTROL_DT_S, Correction, Trajectory, apply_correction,
                         fit_trajectory, speed_up)
from .world import BoardWorld

# Tool contact geometry (tool frame): a center tip for pressing/insertion
# plus a fingertip pair riding 8 mm higher, used edge-on by the side
# probes. A held item adds its own tip below the center.
FINGERTIP_RAISE_M = 0.008
FINGERTIP_OFFSETS = np.array([[0.02, 0.0, -FINGERTIP_RAISE_M],
                              [-0.02, 0.0, -FINGERTIP_RAISE_M]])
BASE_TOOL_POINTS = np.vstack([[0.0, 0.0, 0.0], FINGERTIP_OFFSETS])

GRASP_REACH_M = 0.01


@dataclass
class ExecutionConfig:
    transition_speed_m_s: float = 0.05
    settle_ticks: int = 30
    correction_increment_m: float = 0.001
    correction_length_scale_m: float = 0.05
    speedup_window_s: float = 0.2
    speedup_factor: float = 2.0
    press_depth_m: float = 0.005
    force_filter_cutoff_hz: float = 25.0
    # Activation needs the force held this many consecutive ticks, so
    # impact transients (e.g. landing on a hole floor) cannot re-trigger
    # the search; release stays single-tick fast.
    activation_debounce_ticks: int = 5
    max_extra_ticks: int = 3000

    def to_dict(self) -> dict:
        return {
            "transition_speed_m_per_s": self.transition_speed_m_s,
            "settle_ticks": self.settle_ticks,
            "correction_increment_m": self.correction_increment_m,
            "correction_length_scale_m": self.correction_length_scale_m,
            "speedup_window_s": self.speedup_window_s,
            "speedup_factor": self.speedup_factor,
            "press_depth_m": self.press_depth_m,
            "force_filter_cutoff_hz": self.force_filter_cutoff_hz,
            "activation_debounce_ticks": self.activation_debounce_ticks,
            "max_extra_ticks": self.max_extra_ticks,
        }

    @staticmethod
    def from_dict(d: dict) -> "ExecutionConfig":
        return ExecutionConfig(
            transition_speed_m_s=d["transition_speed_m_per_s"],
            settle_ticks=d["settle_ticks"],
            correction_increment_m=d["correction_increment_m"],
            correction_length_scale_m=d["correction_length_scale_m"],
            speedup_window_s=d["speedup_window_s"],
            speedup_factor=d["speedup_factor"],
            press_depth_m=d["press_depth_m"],
            force_filter_cutoff_hz=d["force_filter_cutoff_hz"],
            activation_debounce_ticks=d.get("activation_debounce_ticks", 5),
            max_extra_ticks=d["max_extra_ticks"],
        )


class ForceFilter:
    """First-order low-pass on the vertical contact force."""

    def __init__(self, cutoff_hz: float, dt: float):
        tau = 1.0 / (2.0 * np.pi * cutoff_hz)
        self.alpha = dt / (tau + dt)
        self.value = 0.0

    def update(self, x: float) -> float:
        self.value += self.alpha * (x - self.value)
        return self.value


@dataclass
class ToolRig:
    """Tool geometry plus the kinematic gripper.

    Closing within reach of a grippable feature (or a previously placed
    item) attaches a tip extension; opening releases the item at the
    current tip position.
    """

    arm: ServoArm
    world: BoardWorld | None
    held_item: str | None = None
    held_tip_offset: np.ndarray | None = None
    # item name -> world position of its grasp point (set when placed)
    placed_items: dict = field(default_factory=dict)
    item_lengths: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.world is not None:
            for f in self.world.features:
                if f.kind == "pick":
                    self.item_lengths[f.name] = f.item_length_m
        self._apply_offsets()

    def _apply_offsets(self):
        if self.held_tip_offset is None:
            self.arm.set_probe_offsets(BASE_TOOL_POINTS)
        else:
            self.arm.set_probe_offsets(
                np.vstack([BASE_TOOL_POINTS, self.held_tip_offset]))

    def grasp_point(self, item: str) -> np.ndarray | None:
        """World position where the named item can currently be grasped."""
        if item in self.placed_items:
            return np.asarray(self.placed_items[item])
        if self.world is not None:
            for f in self.world.features:
                if f.kind == "pick" and f.name == item:
                    return self.world.feature_top_world(item)
        return None

    def close(self) -> str | None:
        """Grasp the nearest grippable item within reach; returns its name."""
        if self.held_item is not None or self.world is None:
            return None
        tool_tip = self.arm.chain.ee_position
        best = None
        for name, length in self.item_lengths.items():
            at = self.grasp_point(name)
            if at is None:
                continue
            d = float(np.linalg.norm(tool_tip - at))
            if d < GRASP_REACH_M and (best is None or d < best[1]):
                best = (name, d)
        if best is None:
            return None
        name = best[0]
        self.held_item = name
        self.held_tip_offset = np.array([0.0, 0.0, self.item_lengths[name]])
        self.placed_items.pop(name, None)
        self._apply_offsets()
        return name

    def open(self) -> str | None:
        """Release the held item at its current grasp position."""
        if self.held_item is None:
            return None
        name = self.held_item
        self.placed_items[name] = self.arm.chain.ee_position.copy()
        self.held_item = None
        self.held_tip_offset = None
        self._apply_offsets()
        return name

    def tip_position(self) -> np.ndarray:
        """Deepest tool point: held item tip, or the tool tip itself."""
        if self.held_tip_offset is not None:
            return self.arm.probe_points()[-1]
        return self.arm.chain.ee_position.copy()


@dataclass
class StepLog:
    """Per-tick record of one primitive execution."""

    t: list = field(default_factory=list)
    ee_position: list = field(default_factory=list)
    tip_position: list = field(default_factory=list)
    goal_position: list = field(default_factory=list)
    vertical_force_n: list = field(default_factory=list)
    vertical_force_filtered_n: list = field(default_factory=list)
    stiffness_z_n_per_m: list = field(default_factory=list)
    exploration_active: list = field(default_factory=list)
    events: list = field(default_factory=list)  # (tick, kind, detail)

    def append(self, t, ee, tip, goal, fz, fz_f, kz, exploring):
        self.t.append(round(t, 6))
        self.ee_position.append([float(v) for v in ee])
        self.tip_position.append([float(v) for v in tip])
        self.goal_position.append([float(v) for v in goal])
        self.vertical_force_n.append(float(fz))
        self.vertical_force_filtered_n.append(float(fz_f))
        self.stiffness_z_n_per_m.append(float(kz))
        self.exploration_active.append(bool(exploring))

    def event(self, tick: int, kind: str, detail=None):
        self.events.append((tick, kind, detail))

    def to_dict(self) -> dict:
        return {
            "t_s": self.t,
            "ee_position_m": self.ee_position,
            "tip_position_m": self.tip_position,
            "goal_position_m": self.goal_position,
            "vertical_force_n": self.vertical_force_n,
            "vertical_force_filtered_n": self.vertical_force_filtered_n,
            "stiffness_z_n_per_m": self.stiffness_z_n_per_m,
            "exploration_active": self.exploration_active,
            "events": [[t, k, d] for (t, k, d) in self.events],
        }


@dataclass
class PrimitiveReport:
    name: str
    status: str  # ok | hard_limit | unstable | search_exhausted | timeout
    spiral_activations: int
    log: StepLog
    end_tip_position: np.ndarray
    max_feature_force: dict
    lid_travel_m: dict
    gains: ImpedanceGains

    @property
    def completed(self) -> bool:
        return self.status == "ok"


def _feature_force_scan(world: BoardWorld, contacts, tracker: dict,
                        lid_state: dict, tip_prev: np.ndarray | None,
                        tip_now: np.ndarray):
    """Update per-feature force maxima and lid slide progress."""
    if world is None or not contacts:
        return
    rot = world.rot_world_board
    origin = world.board_pose.position
    for c in contacts:
        if c.surface == "hole_floor" and c.feature is not None:
            f_n = float(np.dot(c.force, c.normal))
            tracker[c.feature] = max(tracker.get(c.feature, 0.0), f_n)
        if c.surface != "top":
            continue
        local = rot.T @ (c.point - origin)
        f_n = float(np.dot(c.force, c.normal))
        for feat in world.features:
            if feat.kind not in ("button", "lid"):
                continue
            r = feat.radius_m if feat.kind == "button" else 0.04
            if np.hypot(local[0] - feat.center_xy_m[0],
                        local[1] - feat.center_xy_m[1]) <= r:
                tracker[feat.name] = max(tracker.get(feat.name, 0.0), f_n)
                if feat.kind == "lid" and f_n >= feat.press_force_n \
                        and tip_prev is not None:
                    step = tip_now - tip_prev
                    slide3 = rot @ np.array([feat.slide_dir[0],
                                             feat.slide_dir[1], 0.0])
                    lid_state[feat.name] = lid_state.get(feat.name, 0.0) + \
                        max(0.0, float(np.dot(step, slide3)))


def execute_primitive(primitive: Primitive, rig: ToolRig,
                      gains: ImpedanceGains,
                      exploration: ExplorationState,
                      config: ExecutionConfig | None = None,
                      teach_queue: deque | None = None,
                      q_nullspace: np.ndarray | None = None,
                      on_tick=None) -> PrimitiveReport:
    """Run one primitive to completion on the given arm.

    Phases: (1) constant-velocity attractor ramp from the current pose to
    the primitive start; (2) stream the fitted trajectory at the control
    tick, draining at most one teaching command per tick; (3) for
    insertion primitives, superimpose the spiral search while the
    filtered vertical force stays above the hysteresis band, pressing the
    insertion axis below the contact surface so release is observable.

    Returns a report with the per-tick log and the failure cause, if any.
    """
    config = config or ExecutionConfig()
    arm = rig.arm
    dt = arm.dt
    log = StepLog()
    if q_nullspace is None:
        q_nullspace = arm.state.q.copy()
    gains = gains.with_targets(primitive.stiffness.k_trans,
                               primitive.stiffness.k_rot)
    if primitive.exploration_pitch_m_per_rad is not None:
        exploration = replace(
            exploration, pitch_m_per_rad=primitive.exploration_pitch_m_per_rad)

    interp = fit_trajectory(primitive.trajectory)
    force_filter = ForceFilter(config.force_filter_cutoff_hz, dt)
    feature_force: dict = {}
    lid_travel: dict = {}
    status = "ok"
    tick = 0
    tip_prev = None
    contact_z = None

    def run_tick(goal_pose: Pose, gains_now: ImpedanceGains) -> TickResult:
        nonlocal tick, tip_prev
        cmd = ControllerCommand(goal_pose, gains_now, q_nullspace)
        result = arm.tick(cmd)
        tip_now = rig.tip_position()
        _feature_force_scan(arm.world, result.contacts, feature_force,
                            lid_travel, tip_prev, tip_now)
        tip_prev = tip_now
        if on_tick is not None:
            on_tick(tick, result, goal_pose)
        tick += 1
        return result

    # --- Phase 1: constant-velocity transition to the primitive start.
    start_pose = interp.query_pose(interp.t_start)
    from_pos = arm.chain.ee_position.copy()
    from_quat = arm.chain.ee_pose().orientation
    dist = float(np.linalg.norm(start_pose.position - from_pos))
    n_ramp = max(int(np.ceil(dist / (config.transition_speed_m_s * dt))), 1)
    try:
        for i in range(n_ramp):
            s = (i + 1) / n_ramp
            goal = Pose((1.0 - s) * from_pos + s * start_pose.position,
                        quat_slerp(from_quat, start_pose.orientation, s))
            gains = update_stiffness(gains, dt)
            res = run_tick(goal, gains)
            fz_f = force_filter.update(res.wrench.vertical_force_n)
            log.append(res.state.t, res.ee_position, tip_prev,
                       goal.position, res.wrench.vertical_force_n, fz_f,
                       gains.k_trans[2], False)
            if res.hard_limit:
                raise _HardLimit(res.hard_limit_joints)
        for _ in range(config.settle_ticks):
            gains = update_stiffness(gains, dt)
            res = run_tick(start_pose, gains)
            fz_f = force_filter.update(res.wrench.vertical_force_n)
            log.append(res.state.t, res.ee_position, tip_prev,
                       start_pose.position, res.wrench.vertical_force_n, fz_f,
                       gains.k_trans[2], False)
            if res.hard_limit:
                raise _HardLimit(res.hard_limit_joints)

        # --- Phase 2/3: stream the trajectory, search when insertion.
        t_traj = interp.t_start
        event_cursor = interp.t_start - dt  # first-sample gripper events fire
        extra = 0
        release_z = None
        debounce = 0
        while True:
            playing = t_traj < interp.t_end
            if playing:
                t_next = min(t_traj + dt, interp.t_end)
            else:
                t_next = t_traj

            if teach_queue:
                _apply_teach_command(teach_queue.popleft(), primitive, config,
                                     arm, t_traj, log, tick)
                interp = fit_trajectory(primitive.trajectory)

            pos, quat = interp.query(t_next)
            goal_pos = pos.copy()
            offset2 = exploration.frozen_offset_m
            if exploration.active:
                spiral2, exploration = exploration_offset(exploration, dt)
                offset2 = exploration.frozen_offset_m + spiral2
                goal_pos[2] = contact_z - config.press_depth_m
                release_z = goal_pos[2]
            elif release_z is not None and release_z > goal_pos[2]:
                # Ease the attractor down after a release instead of
                # jumping to the (much deeper) nominal stream.
                release_z -= config.transition_speed_m_s * dt
                goal_pos[2] = max(goal_pos[2], release_z)
            goal_pos[0] += offset2[0]
            goal_pos[1] += offset2[1]
            goal = Pose(goal_pos, quat)

            gains = update_stiffness(gains, dt)
            res = run_tick(goal, gains)
            fz_filtered = force_filter.update(res.wrench.vertical_force_n)

            for action in interp.events_between(event_cursor, t_next):
                name = rig.close() if action == "close" else rig.open()
                log.event(tick, f"gripper_{action}", name)
            event_cursor = t_next

            if primitive.insertion:
                was_active = exploration.active
                above_on = fz_filtered > exploration.activation_force_n
                debounce = debounce + 1 if above_on else 0
                # Freeze on release at the offset the tip actually found,
                # not the lagging attractor offset.
                discovered = tip_prev[:2] - pos[:2]
                if exploration.active or \
                        debounce >= config.activation_debounce_ticks:
                    exploration = update_exploration(exploration, fz_filtered,
                                                     res.ee_position, discovered)
                if exploration.active and not was_active:
                    contact_z = float(res.ee_position[2])
                    log.event(tick, "exploration_on", contact_z)
                elif was_active and not exploration.active:
                    log.event(tick, "exploration_off",
                              exploration.frozen_offset_m.tolist())
                    extra = 0  # settle restarts once the search releases
                if exploration.active and (exploration.radius_exhausted()
                                           or exploration.budget_exhausted()):
                    status = "search_exhausted"

            log.append(res.state.t, res.ee_position, tip_prev, goal.position,
                       res.wrench.vertical_force_n, fz_filtered,
                       gains.k_trans[2], exploration.active)
            if res.hard_limit:
                raise _HardLimit(res.hard_limit_joints)
            if status != "ok":
                break

            t_traj = t_next
            if not playing:
                extra += 1
                still = float(np.abs(res.state.qd).max()) < 0.005
                if not exploration.active and extra >= config.settle_ticks \
                        and (still or extra >= 20 * config.settle_ticks):
                    break
                if extra >= config.max_extra_ticks:
                    status = "timeout"
                    break
    except _HardLimit as e:
        status = "hard_limit"
        log.event(tick, "hard_limit", e.joints)
    except SimInstabilityError as e:
        status = "unstable"
        log.event(tick, "unstable", str(e))

    return PrimitiveReport(primitive.name, status,
                           exploration.activation_count, log,
                           rig.tip_position(), feature_force, lid_travel, gains)


class _HardLimit(Exception):
    def __init__(self, joints):
        self.joints = joints


def _apply_teach_command(item, primitive: Primitive, config: ExecutionConfig,
                         arm: ServoArm, t_traj: float, log: StepLog, tick: int):
    """One queued command: correction increment, speed-up, or gripper."""
    kind = item[0]
    if kind == "correction":
        direction = np.asarray(item[1], dtype=float)
        corr = Correction(direction * config.correction_increment_m,
                          config.correction_length_scale_m,
                          arm.chain.ee_position.copy())
        primitive.trajectory = apply_correction(primitive.trajectory, corr)
        log.event(tick, "correction", direction.tolist())
    elif kind == "speed_up":
        times = primitive.trajectory.times()
        idx = int(np.searchsorted(times, t_traj, side="right")) - 1
        idx = max(0, min(idx, len(primitive.trajectory) - 1))
        primitive.trajectory = speed_up(primitive.trajectory, idx,
                                        config.speedup_window_s,
                                        config.speedup_factor)
        log.event(tick, "speed_up", idx)
    else:
        raise ValueError(f"unknown teach command {kind!r}")
