"""Movement primitives: named trajectory segments with stiffness
profiles and insertion labels, persisted one JSON document per primitive
(`<name>.primitive.json`)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .se3 import Pose
from .trajectory import Trajectory

PRIMITIVE_SCHEMA_VERSION = 1


class PrimitiveSchemaError(ValueError):
    pass


@dataclass
class StiffnessProfile:
    """Cartesian stiffness targets a primitive runs with."""

    k_trans: np.ndarray = field(default_factory=lambda: np.full(3, 600.0))
    k_rot: np.ndarray = field(default_factory=lambda: np.full(3, 30.0))

    def __post_init__(self):
        self.k_trans = np.asarray(self.k_trans, dtype=float)
        self.k_rot = np.asarray(self.k_rot, dtype=float)

    def to_dict(self) -> dict:
        return {"translational_n_per_m": self.k_trans.tolist(),
                "rotational_nm_per_rad": self.k_rot.tolist()}

    @staticmethod
    def from_dict(d: dict) -> "StiffnessProfile":
        return StiffnessProfile(np.array(d["translational_n_per_m"], dtype=float),
                                np.array(d["rotational_nm_per_rad"], dtype=float))


@dataclass
class Primitive:
    """One saved task segment."""

    name: str
    trajectory: Trajectory
    insertion: bool = False
    stiffness: StiffnessProfile = field(default_factory=StiffnessProfile)
    recording_frame: Pose = field(default_factory=Pose.identity)
    exploration_pitch_m_per_rad: float | None = None  # per-task spiral override
    success_feature: str | None = None  # board feature the segment targets

    def __post_init__(self):
        if not self.name:
            raise PrimitiveSchemaError("primitive needs a non-empty name")

    def copy(self) -> "Primitive":
        return Primitive(self.name, self.trajectory.copy(), self.insertion,
                         StiffnessProfile(self.stiffness.k_trans.copy(),
                                          self.stiffness.k_rot.copy()),
                         self.recording_frame.copy(),
                         self.exploration_pitch_m_per_rad,
                         self.success_feature)

    def to_dict(self) -> dict:
        return {
            "schema_version": PRIMITIVE_SCHEMA_VERSION,
            "name": self.name,
            "insertion_task": self.insertion,
            "stiffness_profile": self.stiffness.to_dict(),
            "recording_frame": self.recording_frame.to_dict(),
            "exploration_pitch_m_per_rad": self.exploration_pitch_m_per_rad,
            "success_feature": self.success_feature,
            "trajectory": self.trajectory.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "Primitive":
        version = d.get("schema_version")
        if version != PRIMITIVE_SCHEMA_VERSION:
            raise PrimitiveSchemaError(
                f"primitive schema version {version}, this build reads "
                f"{PRIMITIVE_SCHEMA_VERSION}")
        return Primitive(
            name=d["name"],
            trajectory=Trajectory.from_dict(d["trajectory"]),
            insertion=d["insertion_task"],
            stiffness=StiffnessProfile.from_dict(d["stiffness_profile"]),
            recording_frame=Pose.from_dict(d["recording_frame"]),
            exploration_pitch_m_per_rad=d.get("exploration_pitch_m_per_rad"),
            success_feature=d.get("success_feature"),
        )

    def save(self, directory: str | Path) -> Path:
        path = Path(directory) / f"{self.name}.primitive.json"
        path.write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))
        return path

    @staticmethod
    def load(path: str | Path) -> "Primitive":
        return Primitive.from_dict(json.loads(Path(path).read_text()))


def load_primitive_dir(directory: str | Path) -> dict[str, Primitive]:
    """All primitives in a directory, keyed by name."""
    out: dict[str, Primitive] = {}
    for path in sorted(Path(directory).glob("*.primitive.json")):
        p = Primitive.load(path)
        if p.name in out:
            raise PrimitiveSchemaError(f"duplicate primitive name {p.name!r}")
        out[p.name] = p
    return out
