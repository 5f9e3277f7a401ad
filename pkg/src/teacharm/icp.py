"""Rigid point-to-point ICP registration.

Alternates nearest-neighbor correspondence with the closed-form SVD
(Kabsch) alignment until the mean-squared correspondence error stops
improving. The correspondence RMS is non-increasing across iterations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .cloud import PointCloud
from .se3 import FrameTransform, matrix_to_quat


class IcpDegenerateError(ValueError):
    pass


@dataclass
class IcpResult:
    transform: FrameTransform
    rms_error_m: float
    iterations: int
    converged: bool
    rms_history: list


def best_fit_rigid(source: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rotation and translation mapping source onto target."""
    mu_s = source.mean(axis=0)
    mu_t = target.mean(axis=0)
    cov = (source - mu_s).T @ (target - mu_t)
    u, s, vt = np.linalg.svd(cov)
    if s[1] < 1e-15:
        raise IcpDegenerateError("degenerate covariance: points nearly collinear")
    d = np.sign(np.linalg.det(vt.T @ u.T))
    rot = vt.T @ np.diag([1.0, 1.0, d]) @ u.T
    return rot, mu_t - rot @ mu_s


def icp_register(source: PointCloud, target: PointCloud,
                 init: FrameTransform | None = None,
                 max_iterations: int = 60, tolerance: float = 1e-10) -> IcpResult:
    """Register the source cloud onto the target cloud.

    Args:
        init: initial guess mapping source-frame points into the target
            frame; identity within the shared frame when omitted.
        max_iterations: correspondence/alignment rounds before giving up.
        tolerance: stop once the mean-squared error improves by less.

    Returns:
        IcpResult whose transform maps source points onto the target in
        the clouds' common frame; `converged` is False when the iteration
        cap was hit (the estimate is still usable).
    """
    source.validate_for_registration()
    target.validate_for_registration()
    if init is None:
        init = FrameTransform.identity(source.frame, target.frame)
    if init.source != source.frame or init.target != target.frame:
        raise IcpDegenerateError(
            f"init transform {init.source}->{init.target} does not chain "
            f"{source.frame}->{target.frame}")

    tree = cKDTree(target.points)
    pts = init.apply(source.points)
    rot_total = np.eye(3)
    from .se3 import quat_to_matrix
    rot_total = quat_to_matrix(init.rotation)
    t_total = init.translation.copy()

    history = []
    prev_mse = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        dists, idx = tree.query(pts)
        mse = float(np.mean(dists ** 2))
        history.append(float(np.sqrt(mse)))
        if prev_mse - mse < tolerance:
            converged = True
            break
        prev_mse = mse
        rot, trans = best_fit_rigid(pts, target.points[idx])
        pts = pts @ rot.T + trans
        rot_total = rot @ rot_total
        t_total = rot @ t_total + trans

    dists, _ = tree.query(pts)
    rms = float(np.sqrt(np.mean(dists ** 2)))
    transform = FrameTransform(matrix_to_quat(rot_total), t_total,
                               source.frame, target.frame)
    return IcpResult(transform, rms, iterations, converged, history)
