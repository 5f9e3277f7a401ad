"""Demonstration trajectories: recording, fitting, reshaping, speed-up.

A trajectory is a time-ordered list of attractor samples (pose + gripper
command) nominally spaced at the 0.01 s control tick. Reshaping follows
the squared-exponential update: every sample position moves by the
feedback vector weighted by exp(-dist^2 / l^2) of its distance from the
application point.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .se3 import Pose, quat_normalize, quat_slerp

CONTROL_DT_S = 0.01

GRIPPER_ACTIONS = ("open", "close", "hold")


class TrajectoryError(ValueError):
    pass


@dataclass
class TrajectorySample:
    t: float
    position: np.ndarray
    orientation: np.ndarray
    gripper: str = "hold"

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float)
        self.orientation = np.asarray(self.orientation, dtype=float)
        if self.gripper not in GRIPPER_ACTIONS:
            raise TrajectoryError(f"unknown gripper action {self.gripper!r}")

    def copy(self) -> "TrajectorySample":
        return TrajectorySample(self.t, self.position.copy(),
                                self.orientation.copy(), self.gripper)


@dataclass
class Trajectory:
    """Ordered attractor samples; timestamps strictly increasing."""

    samples: list[TrajectorySample] = field(default_factory=list)
    dt_nominal: float = CONTROL_DT_S

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        if len(self.samples) < 2:
            return 0.0
        return self.samples[-1].t - self.samples[0].t

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.samples])

    def orientations(self) -> np.ndarray:
        return np.array([s.orientation for s in self.samples])

    def copy(self) -> "Trajectory":
        return Trajectory([s.copy() for s in self.samples], self.dt_nominal)

    def to_dict(self) -> dict:
        return {
            "dt_nominal_s": self.dt_nominal,
            "samples": [
                {"t_s": s.t, "position_m": s.position.tolist(),
                 "quaternion_wxyz": s.orientation.tolist(), "gripper": s.gripper}
                for s in self.samples
            ],
        }

    @staticmethod
    def from_dict(d: dict) -> "Trajectory":
        return Trajectory(
            [TrajectorySample(s["t_s"], np.array(s["position_m"], dtype=float),
                              np.array(s["quaternion_wxyz"], dtype=float),
                              s.get("gripper", "hold"))
             for s in d["samples"]],
            d.get("dt_nominal_s", CONTROL_DT_S))


def record_sample(demo: Trajectory, pose: Pose, gripper: str, t: float) -> Trajectory:
    """Append one demonstrated sample; timestamps must strictly increase."""
    if demo.samples and t <= demo.samples[-1].t:
        raise TrajectoryError(
            f"non-monotone timestamp {t} after {demo.samples[-1].t}")
    demo.samples.append(TrajectorySample(
        t, pose.position.copy(), pose.orientation.copy(), gripper))
    return demo


class TrajectoryInterpolator:
    """Attractor function of time: piecewise-linear positions, slerp
    orientations, exact at the knots; clamped beyond the ends."""

    def __init__(self, traj: Trajectory):
        if len(traj) < 2:
            raise TrajectoryError("need at least 2 samples to fit a trajectory")
        self.t = traj.times()
        self.pos = traj.positions()
        self.quat = np.array([quat_normalize(q) for q in traj.orientations()])
        self.gripper_events = [
            (s.t, s.gripper) for s in traj.samples if s.gripper != "hold"]
        self.t_start = float(self.t[0])
        self.t_end = float(self.t[-1])

    def query(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        if t <= self.t_start:
            return self.pos[0].copy(), self.quat[0].copy()
        if t >= self.t_end:
            return self.pos[-1].copy(), self.quat[-1].copy()
        i = int(np.searchsorted(self.t, t, side="right")) - 1
        span = self.t[i + 1] - self.t[i]
        s = (t - self.t[i]) / span
        pos = (1.0 - s) * self.pos[i] + s * self.pos[i + 1]
        quat = quat_slerp(self.quat[i], self.quat[i + 1], s)
        return pos, quat

    def query_pose(self, t: float) -> Pose:
        pos, quat = self.query(t)
        return Pose(pos, quat_normalize(quat))

    def events_between(self, t_prev: float, t_now: float) -> list[str]:
        """Gripper actions recorded in (t_prev, t_now]."""
        return [g for (te, g) in self.gripper_events if t_prev < te <= t_now]


def fit_trajectory(demo: Trajectory) -> TrajectoryInterpolator:
    """Fit the attractor function; linear interpolation per translation
    axis and spherical interpolation between orientation samples.

    The regressor seam other estimators could fill (splines, GP) is this
    function's return contract: anything with `query(t)`.
    """
    return TrajectoryInterpolator(demo)


@dataclass
class Correction:
    """One increment of directional feedback.

    feedback_m: Cartesian shift applied at full weight (m).
    length_scale_m: spatial reach of the reshaping.
    application_point_m: position the feedback was given at.
    """

    feedback_m: np.ndarray
    length_scale_m: float
    application_point_m: np.ndarray
    max_feedback_m: float = 0.005

    def __post_init__(self):
        self.feedback_m = np.asarray(self.feedback_m, dtype=float)
        self.application_point_m = np.asarray(self.application_point_m, dtype=float)
        if self.length_scale_m <= 0.0:
            raise TrajectoryError("length scale must be positive")
        if np.linalg.norm(self.feedback_m) > self.max_feedback_m + 1e-12:
            raise TrajectoryError(
                f"feedback increment {np.linalg.norm(self.feedback_m)} m exceeds "
                f"the {self.max_feedback_m} m cap")


def apply_correction(traj: Trajectory, correction: Correction) -> Trajectory:
    """Reshape the whole trajectory by squared-exponentially weighted feedback.

    Every sample position gains feedback * exp(-|p - x|^2 / l^2);
    orientations, timestamps, and gripper commands are untouched.
    """
    if not traj.samples:
        raise TrajectoryError("cannot correct an empty trajectory")
    pos = traj.positions()
    diff = pos - correction.application_point_m
    weights = np.exp(-(diff * diff).sum(axis=1) / correction.length_scale_m ** 2)
    shifted = pos + weights[:, None] * correction.feedback_m
    out = traj.copy()
    for s, p in zip(out.samples, shifted):
        s.position = p
    return out


def speed_up(traj: Trajectory, current_index: int, window_s: float,
             factor: float) -> Trajectory:
    """Locally speed the motion up by removing samples ahead of the cursor.

    floor(window/dt * (1 - 1/factor)) samples are deleted, evenly strided
    over the next window_s seconds; at least 2 samples always survive in
    the window. Remaining timestamps are re-indexed to the uniform grid,
    so the edited stretch plays `factor` times faster.
    """
    if factor <= 1.0:
        removable = 0
    else:
        removable = int(np.floor(window_s / traj.dt_nominal * (1.0 - 1.0 / factor)))
    n = len(traj)
    if current_index < 0 or current_index >= n:
        raise TrajectoryError(f"index {current_index} outside trajectory of {n}")
    window_n = int(round(window_s / traj.dt_nominal))
    available = min(window_n, n - 1 - current_index)
    n_remove = min(removable, max(available - 2, 0))
    out = traj.copy()
    if n_remove <= 0:
        return out
    offsets = {int(np.floor(k * available / n_remove)) for k in range(n_remove)}
    doomed = {current_index + 1 + off for off in offsets}
    survivors = [s for j, s in enumerate(out.samples) if j not in doomed]
    t0 = survivors[0].t
    for k, s in enumerate(survivors):
        s.t = t0 + k * traj.dt_nominal
    out.samples = survivors
    return out
