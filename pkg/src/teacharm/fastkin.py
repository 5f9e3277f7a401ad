"""JIT-compiled chain sweep for the simulation hot loop.

Falls back to the plain numpy walk when numba is unavailable or when the
chain carries non-identity fixed offset rotations (the default arms do
not). Results are bit-identical to the fallback path.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a normal install here
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap


@njit(cache=True)
def _chain_sweep(q, offsets_t, axis_cross, axis_cross2, axes_local,
                 com_local, tool_t):  # pragma: no cover - compiled
    n = q.shape[0]
    origins = np.empty((n, 3))
    axes_w = np.empty((n, 3))
    coms = np.empty((n, 3))
    rots = np.empty((n, 3, 3))
    p = np.zeros(3)
    rot = np.eye(3)
    eye = np.eye(3)
    for i in range(n):
        p = p + rot @ offsets_t[i]
        origins[i] = p
        axes_w[i] = rot @ axes_local[i]
        s = np.sin(q[i])
        c = 1.0 - np.cos(q[i])
        rot = rot @ (eye + s * axis_cross[i] + c * axis_cross2[i])
        rots[i] = rot
        coms[i] = p + rot @ com_local[i]
    ee_p = p + rot @ tool_t
    return origins, axes_w, coms, rots, ee_p, rot


def chain_sweep(model, q: np.ndarray):
    """(origins, axes_world, coms, rots, ee_p, ee_rot) for identity-offset chains."""
    return _chain_sweep(q, model.joint_offsets_t, model._axis_cross,
                        model._axis_cross2, model.joint_axes,
                        model.link_com_local, model.tool_t)
