"""Task-board world: a rigid box on a table with holes, buttons, and
grippable items, plus the penalty-contact constants.

The board frame has its origin at the center of the bottom face (resting
on the table plane z=0), z up; the top face sits at z = height_m. Hole
features are cylindrical voids sunk into the top face.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .se3 import FrameTransform, Pose

WORLD_SCHEMA_VERSION = 1


class WorldSchemaError(ValueError):
    pass


@dataclass
class BoardFeature:
    """One named feature on the board top face.

    kind:
      hole   - cylindrical void (radius_m, depth_m); insertion target
      button - press pad; pressed when normal force >= press_force_n
      lid    - slide region; slid when normal force >= press_force_n is
               held while the tool travels slide_travel_m along slide_dir
      pick   - rest position of a grippable item; grasping within 1 cm
               attaches a tool-tip extension of item_length_m
    """

    name: str
    kind: str
    center_xy_m: np.ndarray
    radius_m: float = 0.0
    depth_m: float = 0.0
    press_force_n: float = 0.0
    slide_dir: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    slide_travel_m: float = 0.0
    item_length_m: float = 0.0

    def __post_init__(self):
        self.center_xy_m = np.asarray(self.center_xy_m, dtype=float)
        self.slide_dir = np.asarray(self.slide_dir, dtype=float)
        if self.kind not in ("hole", "button", "lid", "pick"):
            raise WorldSchemaError(f"unknown feature kind {self.kind!r}")
        if self.kind == "hole" and self.radius_m <= 0.0:
            raise WorldSchemaError(f"hole {self.name!r} needs a positive radius")

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "center_xy_m": self.center_xy_m.tolist(),
            "radius_m": self.radius_m,
            "depth_m": self.depth_m,
            "press_force_n": self.press_force_n,
            "slide_dir": self.slide_dir.tolist(),
            "slide_travel_m": self.slide_travel_m,
            "item_length_m": self.item_length_m,
        }

    @staticmethod
    def from_dict(d: dict) -> "BoardFeature":
        return BoardFeature(
            name=d["name"], kind=d["kind"],
            center_xy_m=np.array(d["center_xy_m"], dtype=float),
            radius_m=d.get("radius_m", 0.0), depth_m=d.get("depth_m", 0.0),
            press_force_n=d.get("press_force_n", 0.0),
            slide_dir=np.array(d.get("slide_dir", [1.0, 0.0]), dtype=float),
            slide_travel_m=d.get("slide_travel_m", 0.0),
            item_length_m=d.get("item_length_m", 0.0),
        )


@dataclass
class ContactParams:
    stiffness_n_per_m: float = 1.0e4
    damping_ns_per_m: float = 50.0
    friction_mu: float = 0.3
    tangential_damping_ns_per_m: float = 30.0

    def to_dict(self) -> dict:
        return {
            "stiffness_n_per_m": self.stiffness_n_per_m,
            "damping_ns_per_m": self.damping_ns_per_m,
            "friction_mu": self.friction_mu,
            "tangential_damping_ns_per_m": self.tangential_damping_ns_per_m,
        }

    @staticmethod
    def from_dict(d: dict) -> "ContactParams":
        return ContactParams(**d)


@dataclass
class BoardWorld:
    """Board pose, extents, features, and contact constants."""

    board_pose: Pose
    extents_m: np.ndarray            # (Lx, Ly, height)
    features: list[BoardFeature] = field(default_factory=list)
    contact: ContactParams = field(default_factory=ContactParams)

    def __post_init__(self):
        self.extents_m = np.asarray(self.extents_m, dtype=float)
        if np.any(self.extents_m <= 0.0):
            raise WorldSchemaError("board extents must be positive")
        if self.contact.stiffness_n_per_m <= 0.0:
            raise WorldSchemaError("contact stiffness must be positive")
        half = self.extents_m[:2] / 2.0
        for f in self.features:
            if np.any(np.abs(f.center_xy_m) > half):
                raise WorldSchemaError(
                    f"feature {f.name!r} lies outside the board extents")
        # Hot-loop caches; treat the pose as immutable (use with_pose to move).
        from .se3 import quat_to_matrix
        self.rot_world_board = quat_to_matrix(self.board_pose.orientation)
        self._holes = [f for f in self.features if f.kind == "hole"]
        self.hole_centers_x = np.array([f.center_xy_m[0] for f in self._holes])
        self.hole_centers_y = np.array([f.center_xy_m[1] for f in self._holes])
        self.hole_radii = np.array([f.radius_m for f in self._holes])
        self.hole_depths = np.array([f.depth_m for f in self._holes])

    @property
    def height_m(self) -> float:
        return float(self.extents_m[2])

    def board_from_robot(self) -> FrameTransform:
        return FrameTransform.from_pose(self.board_pose, "board", "robot").inverse()

    def robot_from_board(self) -> FrameTransform:
        return FrameTransform.from_pose(self.board_pose, "board", "robot")

    def feature(self, name: str) -> BoardFeature:
        for f in self.features:
            if f.name == name:
                return f
        raise KeyError(f"no feature named {name!r}")

    def holes(self) -> list[BoardFeature]:
        return self._holes

    def feature_top_world(self, name: str) -> np.ndarray:
        """World position of a feature's center on the top face."""
        f = self.feature(name)
        local = np.array([f.center_xy_m[0], f.center_xy_m[1], self.height_m])
        return self.robot_from_board().apply(local)

    def with_pose(self, pose: Pose) -> "BoardWorld":
        return BoardWorld(pose.copy(), self.extents_m.copy(),
                          list(self.features), self.contact)

    def to_dict(self) -> dict:
        return {
            "schema_version": WORLD_SCHEMA_VERSION,
            "board_pose": self.board_pose.to_dict(),
            "extents_m": self.extents_m.tolist(),
            "features": [f.to_dict() for f in self.features],
            "contact": self.contact.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "BoardWorld":
        version = d.get("schema_version")
        if version != WORLD_SCHEMA_VERSION:
            raise WorldSchemaError(
                f"world schema version {version}, this build reads {WORLD_SCHEMA_VERSION}")
        return BoardWorld(
            board_pose=Pose.from_dict(d["board_pose"]),
            extents_m=np.array(d["extents_m"], dtype=float),
            features=[BoardFeature.from_dict(f) for f in d["features"]],
            contact=ContactParams.from_dict(d["contact"]),
        )

    def save(self, path: str | Path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @staticmethod
    def load(path: str | Path) -> "BoardWorld":
        return BoardWorld.from_dict(json.loads(Path(path).read_text()))


def make_task_board(position=(0.48, 0.0, 0.0), yaw_rad: float = 0.0) -> BoardWorld:
    """Robothon-style desk board: buttons, key hole, battery bay, ports."""
    from .se3 import quat_from_axis_angle
    pose = Pose(np.asarray(position, dtype=float),
                quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw_rad))
    features = [
        BoardFeature("blue_button", "button", (-0.09, 0.06), radius_m=0.008,
                     press_force_n=4.0),
        BoardFeature("red_button", "button", (-0.09, -0.06), radius_m=0.008,
                     press_force_n=4.0),
        BoardFeature("key_rest", "pick", (-0.03, 0.08), item_length_m=0.030),
        BoardFeature("key_hole", "hole", (0.0, 0.05), radius_m=0.001, depth_m=0.012),
        BoardFeature("ethernet_port", "hole", (0.05, -0.05), radius_m=0.002,
                     depth_m=0.015),
        BoardFeature("battery_bay", "pick", (0.09, 0.03), item_length_m=0.024),
        BoardFeature("battery_deposit", "hole", (0.09, -0.05), radius_m=0.001,
                     depth_m=0.010),
        BoardFeature("case_lid", "lid", (0.03, 0.00), press_force_n=2.5,
                     slide_dir=(1.0, 0.0), slide_travel_m=0.03),
    ]
    return BoardWorld(pose, np.array([0.30, 0.22, 0.06]), features)
