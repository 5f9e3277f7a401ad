"""Teachable sessions: mode state machine, command routing, the
localization pipeline, task-program execution, and persistence.

A session owns the simulated arm, the true world, the operator's board
estimates, and the primitive store. Commands arrive through an ordered
queue; the session applies at most one per tick, so an accepted
command's effect is visible in the next snapshot. Everything is seeded
and deterministic.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .cloud import PointCloud, load_ply, render_cloud, save_ply
from .control import ControllerCommand, ImpedanceGains, update_stiffness
from .dynamics import SimInstabilityError
from .executor import (ExecutionConfig, PrimitiveReport, ToolRig,
                       execute_primitive)
from .exploration import ExplorationState
from .icp import IcpResult, icp_register
from .localize import (ProbeFailure, ProbeParams, compose_board_estimate,
                       haptic_probe, refine_estimate, transform_trajectory)
from .model import READY_Q, JointState, make_lab_arm
from .primitives import Primitive
from .se3 import FrameTransform, Pose, quat_from_axis_angle, quat_mul
from .servo import ServoArm
from .trajectory import Trajectory, record_sample
from .world import BoardWorld, make_task_board

SESSION_SCHEMA_VERSION = 1

MODES = ("idle", "kinesthetic", "execute", "localize")

# Which command kinds each mode accepts (mode safety invariant).
COMMAND_MODES = {
    "start_recording": ("idle",),
    "drag": ("kinesthetic",),
    "gripper": ("kinesthetic", "execute"),
    "stop_recording": ("kinesthetic",),
    "correction": ("execute",),
    "speed_up": ("execute",),
    "start_execution": ("idle",),
    "localize": ("idle",),
    "set_board_pose": ("idle",),
    "capture_reference": ("idle",),
}


class ModeViolation(RuntimeError):
    def __init__(self, kind: str, mode: str):
        super().__init__(f"command {kind!r} not allowed in mode {mode!r}")
        self.kind = kind
        self.mode = mode


class SessionSchemaError(ValueError):
    pass


@dataclass
class TeachCommand:
    kind: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in COMMAND_MODES:
            raise ValueError(f"unknown command kind {self.kind!r}")


@dataclass
class SessionConfig:
    """Everything tunable about a session, persisted with it."""

    seed: int = 0
    gains: ImpedanceGains = field(default_factory=ImpedanceGains)
    execution: ExecutionConfig = field(default_factory=ExecutionConfig)
    probe: ProbeParams = field(default_factory=ProbeParams)
    exploration: ExplorationState = field(default_factory=ExplorationState)
    broadcast_rate_hz: float = 30.0
    halt_on_failure: bool = False
    cloud_noise_sigma_m: float = 0.001
    cloud_density_pts_per_m2: float = 40000.0
    # Believed camera pose (board localization runs through it).
    camera_position_m: tuple = (0.45, 0.0, 0.9)
    # True camera = believed plus this miscalibration (planar + yaw), the
    # systematic error a real extrinsic calibration leaves behind.
    camera_error_m: tuple = (0.004, -0.003)
    camera_error_yaw_rad: float = 0.01
    hand_stiffness_n_per_m: float = 300.0
    hand_damping_ns_per_m: float = 77.0

    def believed_camera(self) -> FrameTransform:
        # Looking straight down: camera z maps to world -z.
        rot = quat_from_axis_angle(np.array([1.0, 0.0, 0.0]), np.pi)
        return FrameTransform(rot, np.array(self.camera_position_m),
                              "camera", "robot")

    def true_camera(self) -> FrameTransform:
        believed = self.believed_camera()
        err_rot = quat_from_axis_angle(np.array([0.0, 0.0, 1.0]),
                                       self.camera_error_yaw_rad)
        trans = believed.translation + np.array(
            [self.camera_error_m[0], self.camera_error_m[1], 0.0])
        return FrameTransform(quat_mul(err_rot, believed.rotation), trans,
                              "camera", "robot")

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "controller": self.gains.to_dict(),
            "execution": self.execution.to_dict(),
            "probe": self.probe.to_dict(),
            "exploration": {
                "activation_force_n": self.exploration.activation_force_n,
                "deactivation_force_n": self.exploration.deactivation_force_n,
                "pitch_m_per_rad": self.exploration.pitch_m_per_rad,
                "angular_rate_rad_per_s": self.exploration.angular_rate_rad_s,
                "max_radius_m": self.exploration.max_radius_m,
            },
            "broadcast_rate_hz": self.broadcast_rate_hz,
            "halt_on_failure": self.halt_on_failure,
            "cloud_noise_sigma_m": self.cloud_noise_sigma_m,
            "cloud_density_pts_per_m2": self.cloud_density_pts_per_m2,
            "camera_position_m": list(self.camera_position_m),
            "camera_error_m": list(self.camera_error_m),
            "camera_error_yaw_rad": self.camera_error_yaw_rad,
            "hand_stiffness_n_per_m": self.hand_stiffness_n_per_m,
            "hand_damping_ns_per_m": self.hand_damping_ns_per_m,
        }

    @staticmethod
    def from_dict(d: dict) -> "SessionConfig":
        ex = d["exploration"]
        return SessionConfig(
            seed=d["seed"],
            gains=ImpedanceGains.from_dict(d["controller"]),
            execution=ExecutionConfig.from_dict(d["execution"]),
            probe=ProbeParams.from_dict(d["probe"]),
            exploration=ExplorationState(
                activation_force_n=ex["activation_force_n"],
                deactivation_force_n=ex["deactivation_force_n"],
                pitch_m_per_rad=ex["pitch_m_per_rad"],
                angular_rate_rad_s=ex["angular_rate_rad_per_s"],
                max_radius_m=ex["max_radius_m"]),
            broadcast_rate_hz=d["broadcast_rate_hz"],
            halt_on_failure=d["halt_on_failure"],
            cloud_noise_sigma_m=d["cloud_noise_sigma_m"],
            cloud_density_pts_per_m2=d["cloud_density_pts_per_m2"],
            camera_position_m=tuple(d["camera_position_m"]),
            camera_error_m=tuple(d["camera_error_m"]),
            camera_error_yaw_rad=d["camera_error_yaw_rad"],
            hand_stiffness_n_per_m=d["hand_stiffness_n_per_m"],
            hand_damping_ns_per_m=d["hand_damping_ns_per_m"],
        )


@dataclass
class SubtaskResult:
    primitive: str
    success: bool
    status: str
    spiral_activated: bool
    spiral_activations: int
    failure_cause: str | None
    report: PrimitiveReport | None = None

    def row(self, pose: str, trial: int) -> dict:
        return {"pose": pose, "trial": trial, "subtask": self.primitive,
                "success": int(self.success),
                "spiral_activated": int(self.spiral_activated),
                "failure_cause": self.failure_cause or ""}


@dataclass
class ProgramReport:
    results: list[SubtaskResult] = field(default_factory=list)

    @property
    def all_succeeded(self) -> bool:
        return all(r.success for r in self.results)

    def summary(self) -> dict:
        return {r.primitive: r.success for r in self.results}

    def log_signature(self) -> list:
        """Deterministic digest of the execution, for reproducibility checks."""
        out = []
        for r in self.results:
            lg = r.report.log if r.report else None
            out.append([r.primitive, r.status, int(r.success),
                        r.spiral_activations,
                        lg.ee_position[-1] if lg and lg.ee_position else None,
                        len(lg.t) if lg else 0,
                        lg.vertical_force_n[-1] if lg and lg.t else None])
        return out


class Session:
    """One teachable workbench session."""

    def __init__(self, config: SessionConfig | None = None,
                 world: BoardWorld | None = None):
        self.config = config or SessionConfig()
        self.model = make_lab_arm()
        self.world = world if world is not None else make_task_board()
        self.q_ready = READY_Q.copy()
        self.arm = ServoArm(self.model, self.world,
                            JointState(self.q_ready.copy(), np.zeros(7)))
        self.rig = ToolRig(self.arm, self.world)
        self.gains = replace(self.config.gains)
        self.rng = np.random.default_rng(self.config.seed)
        self.mode = "idle"
        self.primitives: dict[str, Primitive] = {}
        self.active_primitives: dict[str, Primitive] = {}
        self.estimates: dict[str, FrameTransform] = {}
        self.reference_cloud: PointCloud | None = None
        self.command_queue: deque[TeachCommand] = deque()
        self.events: list = []
        self.tick_count = 0
        self.overlay_rev = 0  # bumps whenever stored trajectories change
        self._recorder: Trajectory | None = None
        self._drag_target: np.ndarray | None = None
        self._drag_quat = None
        self._record_t = 0.0
        self._hold_pose = self.arm.ee_pose()

    # ----- command intake -------------------------------------------------

    def submit(self, cmd: TeachCommand):
        """Queue a command; mode legality is checked when it is applied."""
        self.command_queue.append(cmd)

    def check_mode(self, kind: str):
        if self.mode not in COMMAND_MODES[kind]:
            raise ModeViolation(kind, self.mode)

    def _apply_command(self, cmd: TeachCommand):
        self.check_mode(cmd.kind)
        handler = getattr(self, f"_cmd_{cmd.kind}")
        return handler(**cmd.payload)

    def process_queued(self):
        """Apply at most one queued command; returns (cmd, error or None)."""
        if not self.command_queue:
            return None
        cmd = self.command_queue.popleft()
        try:
            self._apply_command(cmd)
            self.events.append((self.tick_count, "command", cmd.kind))
            return (cmd, None)
        except (ModeViolation, KeyError, ValueError) as e:
            self.events.append((self.tick_count, "rejected", f"{cmd.kind}: {e}"))
            return (cmd, e)

    # ----- mode handlers ----------------------------------------------------

    def _cmd_start_recording(self):
        self.mode = "kinesthetic"
        self._recorder = Trajectory()
        self._record_t = 0.0
        self._drag_target = self.arm.chain.ee_position.copy()
        self._drag_quat = self.arm.ee_pose().orientation.copy()
        # Kinesthetic compliance: stiffness slews to zero in all Cartesian
        # directions; the joint-limit null-space stays active.
        self.gains = self.gains.with_targets(np.zeros(3), np.zeros(3))

    def _cmd_drag(self, target_m):
        self._drag_target = np.asarray(target_m, dtype=float)

    def _cmd_gripper(self, action: str):
        if action == "close":
            item = self.rig.close()
        elif action == "open":
            item = self.rig.open()
        else:
            raise ValueError(f"unknown gripper action {action!r}")
        if self._recorder is not None and self.mode == "kinesthetic" \
                and len(self._recorder) > 0:
            self._recorder.samples[-1].gripper = action
        self.events.append((self.tick_count, f"gripper_{action}", item))

    def _cmd_stop_recording(self, name: str, insertion: bool = False):
        traj = self._recorder
        self._recorder = None
        self.mode = "idle"
        self.gains = self.gains.with_targets(
            self.config.gains.k_trans_target, self.config.gains.k_rot_target)
        self._hold_pose = self.arm.ee_pose()
        if traj is None or len(traj) < 2:
            raise ValueError("recording too short to save")
        prim = Primitive(name, traj, insertion=insertion,
                         recording_frame=self.current_estimate().as_pose())
        self.primitives[name] = prim
        self.active_primitives[name] = prim.copy()
        self.overlay_rev += 1

    def _cmd_set_board_pose(self, pose: dict):
        self.world = self.world.with_pose(Pose.from_dict(pose))
        self.arm.world = self.world
        self.rig.world = self.world

    def _cmd_capture_reference(self):
        self.capture_reference()

    def _cmd_start_execution(self, program):
        # Handled by run_task_program; the command form exists for scripts
        # and the network surface.
        self.run_task_program(list(program))

    def _cmd_localize(self, ablate_icp: bool = False, ablate_haptic: bool = False):
        self.run_localization_pipeline(ablate_icp=ablate_icp,
                                       ablate_haptic=ablate_haptic)

    def _cmd_correction(self, direction):
        # Only reachable outside execution (where the executor drains the
        # queue itself); by then it is a mode violation.
        raise ModeViolation("correction", self.mode)

    def _cmd_speed_up(self):
        raise ModeViolation("speed_up", self.mode)

    # ----- estimates --------------------------------------------------------

    def adopt_primitives(self, prims: list[Primitive]):
        """Install ready-made primitives (scripted-teacher shortcut)."""
        for p in prims:
            self.primitives[p.name] = p
            self.active_primitives[p.name] = p.copy()
        self.overlay_rev += 1

    def current_estimate(self) -> FrameTransform:
        for stage in ("haptic", "visual", "reference"):
            if stage in self.estimates:
                return self.estimates[stage]
        return FrameTransform.from_pose(self.world.board_pose, "board", "robot")

    def capture_reference(self):
        """Record the reference cloud and board frame at teaching time."""
        self.reference_cloud = render_cloud(
            self.world, self.config.true_camera(),
            self.config.cloud_noise_sigma_m,
            seed=int(self.rng.integers(2 ** 31)),
            density_pts_per_m2=self.config.cloud_density_pts_per_m2)
        self.estimates = {"reference": FrameTransform.from_pose(
            self.world.board_pose, "board", "robot")}
        self.events.append((self.tick_count, "reference_captured",
                            len(self.reference_cloud)))

    # ----- kinesthetic / idle ticking ----------------------------------------

    def tick(self):
        """One 0.01 s step of the session outside program execution."""
        self.process_queued()
        dt = self.arm.dt
        self.gains = update_stiffness(self.gains, dt)
        if self.mode == "kinesthetic":
            target = self._drag_target
            k_hand = self.config.hand_stiffness_n_per_m
            d_hand = self.config.hand_damping_ns_per_m
            qd = self.arm.state.qd

            def hand(points, velocities=None):
                forces = np.zeros_like(points)
                v = velocities[0] if velocities is not None else 0.0
                forces[0] = k_hand * (target - points[0]) - d_hand * v
                return forces

            self.arm.external_wrench_fn = hand
            cmd = ControllerCommand(Pose(target, self._drag_quat), self.gains,
                                    self.q_ready)
            res = self.arm.tick(cmd)
            self.arm.external_wrench_fn = None
            self._record_t += dt
            record_sample(self._recorder, self.arm.ee_pose(), "hold",
                          self._record_t)
        else:
            cmd = ControllerCommand(self._hold_pose, self.gains, self.q_ready)
            res = self.arm.tick(cmd)
        self.tick_count += 1
        return res

    # ----- localization pipeline ---------------------------------------------

    def run_localization_pipeline(self, ablate_icp: bool = False,
                                  ablate_haptic: bool = False):
        """Vision + haptics: render, register, compose, probe, refine, and
        re-target every stored primitive to the fresh estimate.

        With ablate_icp the probes start from the stale reference
        estimate; with ablate_haptic the pipeline stops at the visual
        stage. Failures leave the previous estimates untouched.
        """
        if "reference" not in self.estimates or self.reference_cloud is None:
            raise RuntimeError("capture_reference must run before localization")
        previous_mode = self.mode
        self.mode = "localize"
        new_estimates = dict(self.estimates)
        try:
            if not ablate_icp:
                current = render_cloud(
                    self.world, self.config.true_camera(),
                    self.config.cloud_noise_sigma_m,
                    seed=int(self.rng.integers(2 ** 31)),
                    density_pts_per_m2=self.config.cloud_density_pts_per_m2)
                icp = icp_register(self.reference_cloud, current)
                visual = compose_board_estimate(
                    self.config.believed_camera(), icp.transform,
                    new_estimates["reference"])
                new_estimates["visual"] = visual
                self.events.append((self.tick_count, "icp",
                                    {"rms_m": icp.rms_error_m,
                                     "iterations": icp.iterations,
                                     "converged": icp.converged}))
                start_for_probe = visual
            else:
                new_estimates.pop("visual", None)
                start_for_probe = new_estimates["reference"]

            if not ablate_haptic:
                px = haptic_probe(start_for_probe, "x", self.arm, self.gains,
                                  self.q_ready, self.config.probe, rng=self.rng)
                py = haptic_probe(start_for_probe, "y", self.arm, self.gains,
                                  self.q_ready, self.config.probe, rng=self.rng)
                refined = refine_estimate(start_for_probe, px, py,
                                          self.world.extents_m)
                new_estimates["haptic"] = refined
            else:
                new_estimates.pop("haptic", None)
        except (ProbeFailure, SimInstabilityError) as e:
            self.mode = previous_mode
            self.events.append((self.tick_count, "localization_failed", str(e)))
            raise
        finally:
            if self.mode == "localize":
                self.mode = previous_mode
        self.estimates = new_estimates
        self._retarget_primitives()
        self._hold_pose = self.arm.ee_pose()
        return self.current_estimate()

    def _retarget_primitives(self):
        estimate = self.current_estimate()
        self.active_primitives = {}
        for name, prim in self.primitives.items():
            t_start = FrameTransform.from_pose(prim.recording_frame,
                                               "board", "robot")
            moved = prim.copy()
            moved.trajectory = transform_trajectory(prim.trajectory, t_start,
                                                    estimate)
            self.active_primitives[name] = moved
        self.overlay_rev += 1

    # ----- program execution ---------------------------------------------------

    def run_task_program(self, program: list[str],
                         on_tick=None) -> ProgramReport:
        """Execute primitives in order with transitions between them.

        Teaching commands queued during execution are drained by the
        executor one per tick (corrections, speed-ups, gripper).
        """
        for name in program:
            if name not in self.active_primitives:
                raise KeyError(f"primitive {name!r} not loaded")
        report = ProgramReport()
        self.mode = "execute"
        teach_queue: deque = deque()
        try:
            pending = {"n": 0}
            for name in program:
                prim = self.active_primitives[name]
                exploration = replace(self.config.exploration)

                def executor_tick(tick, res, goal):
                    self.tick_count += 1
                    if len(teach_queue) < pending["n"]:
                        # a reshaping command was applied this tick
                        self.overlay_rev += 1
                    self._drain_into(teach_queue)
                    pending["n"] = len(teach_queue)
                    if on_tick is not None:
                        on_tick(self, res, goal)

                try:
                    rep = execute_primitive(
                        prim, self.rig, self.gains, exploration,
                        self.config.execution, teach_queue, self.q_ready,
                        on_tick=executor_tick)
                except SimInstabilityError as e:
                    self.events.append((self.tick_count, "unstable", str(e)))
                    report.results.append(SubtaskResult(
                        name, False, "unstable", False, 0, "instability"))
                    if self.config.halt_on_failure:
                        break
                    continue
                self.gains = rep.gains
                # Corrections have reshaped the stored trajectory too; keep
                # the saved primitive in sync so future runs improve.
                self.primitives[name].trajectory = prim.trajectory
                success, cause = self.evaluate_success(prim, rep)
                report.results.append(SubtaskResult(
                    name, success, rep.status, rep.spiral_activations > 0,
                    rep.spiral_activations, cause, rep))
                if not success and self.config.halt_on_failure:
                    break
        finally:
            self.mode = "idle"
            self._hold_pose = self.arm.ee_pose()
        return report

    def _drain_into(self, teach_queue: deque) -> bool:
        """Route one queued interactive command to the executor."""
        if not self.command_queue:
            return False
        cmd = self.command_queue.popleft()
        try:
            self.check_mode(cmd.kind)
            if cmd.kind == "correction":
                teach_queue.append(("correction",
                                    np.asarray(cmd.payload["direction"], float)))
            elif cmd.kind == "speed_up":
                teach_queue.append(("speed_up",))
            elif cmd.kind == "gripper":
                self._cmd_gripper(**cmd.payload)
            else:
                raise ModeViolation(cmd.kind, self.mode)
            self.events.append((self.tick_count, "command", cmd.kind))
            return True
        except ModeViolation as e:
            self.events.append((self.tick_count, "rejected", str(e)))
            return False

    def evaluate_success(self, prim: Primitive,
                         rep: PrimitiveReport) -> tuple[bool, str | None]:
        """Feature-specific predicate for a finished primitive."""
        if rep.status != "ok":
            return False, rep.status
        feat_name = prim.success_feature
        if feat_name is None:
            return True, None
        feat = self.world.feature(feat_name)
        if feat.kind == "button":
            ok = rep.max_feature_force.get(feat_name, 0.0) >= feat.press_force_n
            return ok, None if ok else "button_force_not_reached"
        if feat.kind == "lid":
            ok = rep.lid_travel_m.get(feat_name, 0.0) >= feat.slide_travel_m * 0.9
            return ok, None if ok else "lid_not_slid"
        if feat.kind == "pick":
            ok = self.rig.held_item == feat_name
            return ok, None if ok else "item_not_grasped"
        if feat.kind == "hole":
            top = self.world.feature_top_world(feat_name)
            placed = [n for n, p in self.rig.placed_items.items()]
            if self.rig.held_item is not None:
                tip = rep.end_tip_position
                lat = float(np.hypot(tip[0] - top[0], tip[1] - top[1]))
                depth = float(top[2] - tip[2])
                ok = depth >= feat.depth_m - 0.001 and lat <= feat.radius_m * 1.2
                return ok, None if ok else "not_seated"
            elif placed:
                # Last released item counts as the placed one.
                name = placed[-1]
                grasp_at = np.asarray(self.rig.placed_items[name])
                item_len = self.rig.item_lengths.get(name, 0.0)
                tip = grasp_at - np.array([0.0, 0.0, item_len])
                lat = float(np.hypot(tip[0] - top[0], tip[1] - top[1]))
                depth = float(top[2] - tip[2])
                ok = lat <= 0.002 and depth >= feat.depth_m - 0.001
                return ok, None if ok else "item_not_in_slot"
            else:
                tip = rep.end_tip_position
                lat = float(np.hypot(tip[0] - top[0], tip[1] - top[1]))
                depth = float(top[2] - tip[2])
                ok = depth >= feat.depth_m - 0.001 and lat <= feat.radius_m * 1.2
                return ok, None if ok else "not_seated"
        return True, None

    # ----- persistence -----------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": SESSION_SCHEMA_VERSION,
            "config": self.config.to_dict(),
            "world": self.world.to_dict(),
            "mode": "idle",
            "rng_state": json.loads(json.dumps(self.rng.bit_generator.state)),
            "joint_state": {"q": self.arm.state.q.tolist(),
                            "qd": self.arm.state.qd.tolist(),
                            "t_s": self.arm.state.t},
            "estimates": {k: v.to_dict() for k, v in self.estimates.items()},
            "primitives": {k: v.to_dict() for k, v in self.primitives.items()},
            "placed_items": {k: list(map(float, v))
                             for k, v in self.rig.placed_items.items()},
            "held_item": self.rig.held_item,
        }

    def save(self, path: str | Path):
        path = Path(path)
        doc = self.to_dict()
        if self.reference_cloud is not None:
            ply = path.with_suffix(path.suffix + ".reference.ply")
            save_ply(self.reference_cloud, ply)
            doc["reference_cloud_ply"] = ply.name
        path.write_text(json.dumps(doc, indent=2, sort_keys=True))

    @staticmethod
    def load(path: str | Path) -> "Session":
        path = Path(path)
        doc = json.loads(path.read_text())
        version = doc.get("schema_version")
        if version != SESSION_SCHEMA_VERSION:
            raise SessionSchemaError(
                f"session schema version {version}, this build reads "
                f"{SESSION_SCHEMA_VERSION}")
        config = SessionConfig.from_dict(doc["config"])
        world = BoardWorld.from_dict(doc["world"])
        s = Session(config, world)
        s.rng.bit_generator.state = doc["rng_state"]
        js = doc["joint_state"]
        s.arm.state = JointState(np.array(js["q"]), np.array(js["qd"]), js["t_s"])
        s.estimates = {k: FrameTransform.from_dict(v)
                       for k, v in doc["estimates"].items()}
        s.primitives = {k: Primitive.from_dict(v)
                        for k, v in doc["primitives"].items()}
        s.rig.placed_items = {k: np.array(v)
                              for k, v in doc["placed_items"].items()}
        if doc.get("held_item"):
            s.rig.held_item = doc["held_item"]
            s.rig.held_tip_offset = np.array(
                [0.0, 0.0, s.rig.item_lengths[doc["held_item"]]])
            s.rig._apply_offsets()
        if doc.get("reference_cloud_ply"):
            s.reference_cloud = load_ply(path.parent / doc["reference_cloud_ply"])
        s._retarget_primitives()
        s._hold_pose = s.arm.ee_pose()
        return s

    # ----- scripted teacher -----------------------------------------------------

    def run_script(self, script: list[dict]) -> list:
        """Replay a command script: [{'at_tick': int, 'command': {...}}].

        Commands are queued at their ticks; the session steps once per
        tick. Blocking commands (execution, localization) advance the
        tick count themselves via their loops.
        """
        pending = sorted(script, key=lambda e: e["at_tick"])
        idx = 0
        horizon = (pending[-1]["at_tick"] + 1) if pending else 0
        while self.tick_count < horizon or self.command_queue:
            while idx < len(pending) and \
                    pending[idx]["at_tick"] <= self.tick_count:
                c = pending[idx]["command"]
                self.submit(TeachCommand(c["kind"], c.get("payload", {})))
                idx += 1
            self.tick()
        return self.events
