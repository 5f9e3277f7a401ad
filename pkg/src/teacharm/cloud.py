"""Synthetic point clouds of the task board and ASCII PLY persistence.

Stands in for an RGB-D capture: samples the board faces visible from the
camera, expresses the points in the camera frame, and adds i.i.d.
Gaussian noise per coordinate. Deterministic for a fixed seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .se3 import FrameTransform
from .world import BoardWorld


class CloudError(ValueError):
    pass


@dataclass
class PointCloud:
    points: np.ndarray          # (N,3) m
    frame: str
    normals: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise CloudError("points must be (N,3)")

    def __len__(self) -> int:
        return self.points.shape[0]

    def validate_for_registration(self):
        if len(self) < 3:
            raise CloudError("registration needs at least 3 points")
        spread = np.linalg.svd(self.points - self.points.mean(0),
                               compute_uv=False)
        if spread[1] < 1e-9:
            raise CloudError("registration needs non-collinear points")

    def transformed(self, t: FrameTransform) -> "PointCloud":
        if t.source != self.frame:
            raise CloudError(f"cloud in {self.frame!r}, transform reads {t.source!r}")
        normals = None
        if self.normals is not None:
            from .se3 import quat_to_matrix
            normals = self.normals @ quat_to_matrix(t.rotation).T
        return PointCloud(t.apply(self.points), t.target, normals)


def _board_faces(world: BoardWorld):
    """(center, normal, u_axis, v_axis, half_u, half_v) per face, board frame."""
    lx, ly, h = world.extents_m
    ex, ey, ez = np.eye(3)
    return [
        (np.array([0.0, 0.0, h]), ez, ex, ey, lx / 2, ly / 2),          # top
        (np.array([lx / 2, 0.0, h / 2]), ex, ey, ez, ly / 2, h / 2),    # +x
        (np.array([-lx / 2, 0.0, h / 2]), -ex, ey, ez, ly / 2, h / 2),  # -x
        (np.array([0.0, ly / 2, h / 2]), ey, ex, ez, lx / 2, h / 2),    # +y
        (np.array([0.0, -ly / 2, h / 2]), -ey, ex, ez, lx / 2, h / 2),  # -y
    ]


def render_cloud(world: BoardWorld, camera: FrameTransform,
                 noise_sigma_m: float = 0.0, seed: int = 0,
                 density_pts_per_m2: float = 40000.0) -> PointCloud:
    """Sample the board faces visible from the camera.

    Args:
        camera: camera pose in the robot frame (source 'camera',
            target 'robot').
        noise_sigma_m: standard deviation of the per-coordinate noise.
        seed: RNG seed; identical seeds give identical clouds.

    Returns:
        cloud in the camera frame (with outward normals, camera frame).

    Raises:
        CloudError: negative sigma or no face visible from the camera.
    """
    if noise_sigma_m < 0.0:
        raise CloudError("noise sigma must be non-negative")
    if camera.source != "camera" or camera.target != "robot":
        raise CloudError("camera transform must map camera -> robot")
    rng = np.random.default_rng(seed)
    robot_from_board = world.robot_from_board()
    cam_position_board = world.board_from_robot().apply(camera.translation)

    pts = []
    nrm = []
    for center, normal, u, v, hu, hv in _board_faces(world):
        if float(np.dot(normal, cam_position_board - center)) <= 0.0:
            continue
        n_pts = max(int(density_pts_per_m2 * (2 * hu) * (2 * hv)), 8)
        uu = rng.uniform(-hu, hu, n_pts)
        vv = rng.uniform(-hv, hv, n_pts)
        pts.append(center + uu[:, None] * u + vv[:, None] * v)
        nrm.append(np.tile(normal, (n_pts, 1)))
    if not pts:
        raise CloudError("board fully occluded from this camera pose")
    board_pts = np.vstack(pts)
    board_nrm = np.vstack(nrm)

    robot_pts = robot_from_board.apply(board_pts)
    cam_from_robot = camera.inverse()
    cam_pts = cam_from_robot.apply(robot_pts)
    if noise_sigma_m > 0.0:
        cam_pts = cam_pts + rng.normal(0.0, noise_sigma_m, cam_pts.shape)
    from .se3 import quat_to_matrix
    rot = quat_to_matrix(cam_from_robot.rotation) @ quat_to_matrix(
        robot_from_board.rotation)
    return PointCloud(cam_pts, "camera", board_nrm @ rot.T)


def save_ply(cloud: PointCloud, path: str | Path):
    """ASCII PLY with a comment recording the frame name."""
    lines = [
        "ply", "format ascii 1.0", f"comment frame {cloud.frame}",
        f"element vertex {len(cloud)}",
        "property double x", "property double y", "property double z",
    ]
    has_normals = cloud.normals is not None
    if has_normals:
        lines += ["property double nx", "property double ny", "property double nz"]
    lines.append("end_header")
    for i in range(len(cloud)):
        row = list(cloud.points[i])
        if has_normals:
            row += list(cloud.normals[i])
        lines.append(" ".join(repr(float(x)) for x in row))
    Path(path).write_text("\n".join(lines) + "\n")


def load_ply(path: str | Path) -> PointCloud:
    text = Path(path).read_text().splitlines()
    frame = "unknown"
    n_vertex = 0
    props = 0
    i = 0
    for i, line in enumerate(text):
        if line.startswith("comment frame "):
            frame = line.split(" ", 2)[2]
        elif line.startswith("element vertex"):
            n_vertex = int(line.split()[-1])
        elif line.startswith("property"):
            props += 1
        elif line == "end_header":
            break
    rows = [list(map(float, r.split())) for r in text[i + 1:i + 1 + n_vertex]]
    data = np.array(rows)
    normals = data[:, 3:6] if props >= 6 else None
    return PointCloud(data[:, :3], frame, normals)
