"""Benchmark scenarios: seeded, deterministic desk-scale analogs of the
board-task evaluations, shared by the CLI and the acceptance suite.

Each bench returns per-trial rows in the report shape
(pose, trial, subtask, success, spiral_activated, failure_cause) plus a
stats dict.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .control import ImpedanceGains
from .exploration import ExplorationState
from .executor import ToolRig, execute_primitive
from .kinematics import solve_ik
from .localize import ProbeParams, haptic_probe, refine_estimate
from .model import READY_Q, JointState, make_lab_arm
from .primitives import Primitive
from .scenarios import default_task_program, make_insert_demo
from .se3 import FrameTransform, Pose, quat_from_axis_angle, quat_mul, quat_rotate
from .servo import ServoArm
from .session import Session, SessionConfig, TeachCommand
from .world import BoardFeature, BoardWorld, make_task_board


@dataclass
class BenchResult:
    name: str
    rows: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    wall_s: float = 0.0

    def write_csv(self, path: str | Path):
        path = Path(path)
        with path.open("w", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=[
                "pose", "trial", "subtask", "success", "spiral_activated",
                "failure_cause"])
            writer.writeheader()
            for row in self.rows:
                writer.writerow(row)


_BENCH_MODEL = make_lab_arm()


def _fresh_rig(world: BoardWorld,
               start_q: np.ndarray | None = None) -> tuple[ServoArm, ToolRig]:
    q = start_q if start_q is not None else READY_Q
    arm = ServoArm(_BENCH_MODEL, world, JointState(q.copy(), np.zeros(7)))
    return arm, ToolRig(arm, world)


def _hold_item(rig: ToolRig, name: str, length_m: float):
    rig.held_item = name
    rig.held_tip_offset = np.array([0.0, 0.0, length_m])
    rig._apply_offsets()


def _uniform_disc(rng: np.random.Generator, radius: float) -> np.ndarray:
    r = radius * np.sqrt(rng.uniform())
    phi = rng.uniform(0.0, 2.0 * np.pi)
    return np.array([r * np.cos(phi), r * np.sin(phi)])


def _insertion_trial(world: BoardWorld, hole_name: str, item_len_m: float,
                     believed_pose: Pose,
                     exploration: ExplorationState,
                     pitch_override: float | None = None) -> dict:
    """Execute one insertion with the board believed at `believed_pose`
    while it truly sits at world.board_pose; success is the seated-tip
    predicate against the true hole."""
    feat = world.feature(hole_name)
    top = world.feature_top_world(hole_name)

    believed = world.with_pose(believed_pose)
    offset = believed.feature_top_world(hole_name)[:2] - top[:2]
    prim = make_insert_demo(believed, hole_name, item=None,
                            spiral_pitch_m_per_rad=pitch_override)
    # The demo above assumes a bare tool; shift for the held item length.
    for s in prim.trajectory.samples:
        s.position[2] += item_len_m

    # Trial reset: spawn at the demo start pose (already holding the item)
    # instead of replaying the long transit from the parking posture.
    start = prim.trajectory.samples[0]
    q_start = solve_ik(_BENCH_MODEL, Pose(start.position, start.orientation),
                       READY_Q)
    arm, rig = _fresh_rig(world, q_start if q_start is not None else READY_Q)
    _hold_item(rig, "bench_item", item_len_m)

    rep = execute_primitive(prim, rig, ImpedanceGains(), exploration,
                            q_nullspace=READY_Q.copy())
    tip = rep.end_tip_position
    lat = float(np.hypot(tip[0] - top[0], tip[1] - top[1]))
    depth = float(top[2] - tip[2])
    seated = depth >= feat.depth_m - 0.001 and lat <= feat.radius_m * 1.2
    success = rep.status == "ok" and seated
    cause = None if success else (
        rep.status if rep.status != "ok" else "not_seated")
    return {"success": success, "spiral": rep.spiral_activations > 0,
            "cause": cause, "ticks": len(rep.log.t),
            "offset_mm": float(np.linalg.norm(offset)) * 1000.0}


def bench_spiral_insertion(n_trials: int = 100, seed: int = 2024,
                           error_radius_m: float = 0.008) -> BenchResult:
    """Key-hole insertion under planar board-estimate errors drawn
    uniformly from a disc; the search has to absorb every draw."""
    t0 = time.perf_counter()
    world = make_task_board()
    rng = np.random.default_rng(seed)
    rows = []
    n_ok = 0
    n_spiral = 0
    for trial in range(n_trials):
        offset = _uniform_disc(rng, error_radius_m)
        believed = Pose(world.board_pose.position
                        + np.array([offset[0], offset[1], 0.0]),
                        world.board_pose.orientation.copy())
        out = _insertion_trial(world, "key_hole", 0.030, believed,
                               ExplorationState())
        n_ok += out["success"]
        n_spiral += out["spiral"]
        rows.append({"pose": "estimate_error", "trial": trial,
                     "subtask": "key_insert", "success": int(out["success"]),
                     "spiral_activated": int(out["spiral"]),
                     "failure_cause": out["cause"] or ""})
    wall = time.perf_counter() - t0
    return BenchResult("spiral_insertion", rows, {
        "trials": n_trials, "successes": n_ok,
        "success_rate": n_ok / n_trials,
        "spiral_rate": n_spiral / n_trials,
        "error_radius_m": error_radius_m,
    }, wall)


# Tight-clearance scenario constants: chosen so the refined haptic
# estimate always lands outside the capture radius (spiraling is always
# required) yet inside the bounded search coverage, while raw visual
# estimates regularly exceed it and run the search out of radius.
ABLATION_SLOT_RADIUS_M = 0.001
ABLATION_PITCH_M_PER_RAD = None  # session default pitch
ABLATION_MAX_RADIUS_M = 0.008
ABLATION_PROBE_POSITION_NOISE_M = 4.0e-4
ABLATION_PROBE_NORMAL_BIAS_M = 2.5e-3
ABLATION_PROBE_DIRECTION_NOISE_RAD = 2.0e-3
ABLATION_VISUAL_SIGMA_M = 0.005
ABLATION_ITEM_LEN_M = 0.024


def _ablation_world() -> BoardWorld:
    world = make_task_board()
    feats = []
    for f in world.features:
        if f.name == "battery_deposit":
            f = BoardFeature(f.name, f.kind, f.center_xy_m,
                             radius_m=ABLATION_SLOT_RADIUS_M,
                             depth_m=f.depth_m)
        feats.append(f)
    return BoardWorld(world.board_pose, world.extents_m, feats, world.contact)


def bench_ablation(n_trials: int = 25, seed: int = 777) -> BenchResult:
    """Tight-clearance battery placement, visual-only vs haptic pipeline.

    The visual stage is modeled as a planar Gaussian estimate error
    (sigma 5 mm, yaw sigma 1 deg); the haptic arm runs both side probes
    from that estimate and refines before executing.
    """
    t0 = time.perf_counter()
    world = _ablation_world()
    true_t = FrameTransform(world.board_pose.orientation.copy(),
                            world.board_pose.position.copy(), "board", "robot")
    probe_params = replace(ProbeParams(),
                           position_noise_m=ABLATION_PROBE_POSITION_NOISE_M,
                           direction_noise_rad=ABLATION_PROBE_DIRECTION_NOISE_RAD,
                           normal_bias_m=ABLATION_PROBE_NORMAL_BIAS_M)
    rng = np.random.default_rng(seed)
    rows = []
    stats = {"trials": n_trials}
    for arm_name in ("visual_only", "haptic"):
        n_ok = 0
        n_spiral = 0
        for trial in range(n_trials):
            visual_err = rng.normal(0.0, ABLATION_VISUAL_SIGMA_M, 2)
            visual_yaw = rng.normal(0.0, np.radians(1.0))
            est = FrameTransform(
                quat_mul(quat_from_axis_angle([0, 0, 1], visual_yaw),
                         true_t.rotation),
                true_t.translation + np.array([visual_err[0],
                                               visual_err[1], 0.0]),
                "board", "robot")
            if arm_name == "haptic":
                arm, _ = _fresh_rig(world)
                gains = ImpedanceGains()
                px = haptic_probe(est, "x", arm, gains, READY_Q.copy(),
                                  probe_params, rng=rng)
                py = haptic_probe(est, "y", arm, gains, READY_Q.copy(),
                                  probe_params, rng=rng)
                est = refine_estimate(est, px, py, world.extents_m)
            out = _insertion_trial(world, "battery_deposit",
                                   ABLATION_ITEM_LEN_M, est.as_pose(),
                                   ExplorationState(
                                       max_radius_m=ABLATION_MAX_RADIUS_M),
                                   pitch_override=ABLATION_PITCH_M_PER_RAD)
            n_ok += out["success"]
            n_spiral += out["spiral"]
            rows.append({"pose": arm_name, "trial": trial,
                         "subtask": "battery_place",
                         "success": int(out["success"]),
                         "spiral_activated": int(out["spiral"]),
                         "failure_cause": out["cause"] or ""})
        stats[f"{arm_name}_success_rate"] = n_ok / n_trials
        stats[f"{arm_name}_spiral_rate"] = n_spiral / n_trials
    stats["wall_s"] = time.perf_counter() - t0
    return BenchResult("ablation", rows, stats, stats["wall_s"])


def bench_localization(n_scenes: int = 50, seed: int = 555,
                       max_shift_m: float = 0.010,
                       max_yaw_deg: float = 5.0) -> BenchResult:
    """Full visual+haptic pipeline over seeded displaced scenes."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    rows = []
    visual_err = []
    refined_err = []
    refined_yaw = []
    wins = 0
    for scene in range(n_scenes):
        shift = _uniform_disc(rng, max_shift_m)
        yaw = rng.uniform(-np.radians(max_yaw_deg), np.radians(max_yaw_deg))
        config = SessionConfig(seed=int(rng.integers(2 ** 31)))
        s = Session(config)
        s.capture_reference()
        new_pose = Pose(np.array([0.48 + shift[0], shift[1], 0.0]),
                        quat_from_axis_angle([0, 0, 1], yaw))
        s.submit(TeachCommand("set_board_pose", {"pose": new_pose.to_dict()}))
        s.tick()
        s.run_localization_pipeline()
        true_xy = new_pose.position[:2]
        v = s.estimates["visual"]
        h = s.estimates["haptic"]
        ve = float(np.linalg.norm(v.translation[:2] - true_xy))
        he = float(np.linalg.norm(h.translation[:2] - true_xy))
        x_axis = quat_rotate(h.rotation, np.array([1.0, 0.0, 0.0]))
        hyaw = abs(float(np.arctan2(x_axis[1], x_axis[0]) - yaw))
        visual_err.append(ve)
        refined_err.append(he)
        refined_yaw.append(hyaw)
        wins += he < ve
        rows.append({"pose": f"scene_{scene}", "trial": scene,
                     "subtask": "localize", "success": int(he < ve),
                     "spiral_activated": 0, "failure_cause": ""})
    wall = time.perf_counter() - t0
    return BenchResult("localization", rows, {
        "scenes": n_scenes,
        "visual_median_m": float(np.median(visual_err)),
        "refined_median_m": float(np.median(refined_err)),
        "refined_median_yaw_rad": float(np.median(refined_yaw)),
        "refined_beats_visual_rate": wins / n_scenes,
    }, wall)


def bench_table1(n_trials: int = 5, seed: int = 99,
                 poses: list | None = None) -> BenchResult:
    """Full board program per pose: one row per (pose, trial, subtask)."""
    t0 = time.perf_counter()
    if poses is None:
        poses = [("reference", None)]
    rows = []
    per_task: dict = {}
    for pose_name, pose in poses:
        for trial in range(n_trials):
            config = SessionConfig(seed=seed + trial)
            s = Session(config)
            s.capture_reference()
            s.adopt_primitives(default_task_program(s.world))
            if pose is not None:
                s.submit(TeachCommand("set_board_pose", {"pose": pose.to_dict()}))
                s.tick()
                s.run_localization_pipeline()
            report = s.run_task_program(list(s.active_primitives))
            for r in report.results:
                rows.append(r.row(pose_name, trial))
                key = (pose_name, r.primitive)
                per_task.setdefault(key, []).append(r.success)
    stats = {f"{pose}/{task}": float(np.mean(oks))
             for (pose, task), oks in per_task.items()}
    wall = time.perf_counter() - t0
    return BenchResult("table1", rows, stats, wall)
