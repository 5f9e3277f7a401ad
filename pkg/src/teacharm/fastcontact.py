"""JIT-compiled penalty-contact force law.

One implementation serves both the reporting path (`contact.contact_wrench`
builds Contact objects from these outputs) and the simulation hot loop
(which consumes the raw force array). Surface codes: 0 free, 1 top,
2 side, 3 hole wall, 4 hole floor, 5 table.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap

SURFACE_NAMES = {1: "top", 2: "side", 3: "hole_wall", 4: "hole_floor", 5: "table"}


@njit(cache=True)
def contact_forces_kernel(points, velocities, masses, rot_wb, origin, ext,
                          hole_cx, hole_cy, hole_r, hole_floor,
                          k_c, d_c, mu, d_t, dt, use_velocity):
    """Per-point contact forces against the board solid and table plane."""
    n = points.shape[0]
    n_holes = hole_cx.shape[0]
    forces = np.zeros((n, 3))
    normals = np.zeros((n, 3))
    pens = np.zeros(n)
    codes = np.zeros(n, np.int64)
    feats = np.full(n, -1, np.int64)
    hx = ext[0] / 2.0
    hy = ext[1] / 2.0
    hz = ext[2]

    for i in range(n):
        px, py, pz = points[i, 0], points[i, 1], points[i, 2]
        dx = px - origin[0]
        dy = py - origin[1]
        dz = pz - origin[2]
        # board frame: rot_wb^T @ (p - origin)
        bx = rot_wb[0, 0] * dx + rot_wb[1, 0] * dy + rot_wb[2, 0] * dz
        by = rot_wb[0, 1] * dx + rot_wb[1, 1] * dy + rot_wb[2, 1] * dz
        bz = rot_wb[0, 2] * dx + rot_wb[1, 2] * dy + rot_wb[2, 2] * dz

        pen = 0.0
        code = 0
        feat = -1
        nbx = 0.0
        nby = 0.0
        nbz = 0.0
        if -hx <= bx <= hx and -hy <= by <= hy and 0.0 <= bz <= hz:
            # inside the box: resolve against holes, then nearest face
            in_void = False
            best = 1e18
            for j in range(n_holes):
                ddx = bx - hole_cx[j]
                ddy = by - hole_cy[j]
                lat = np.sqrt(ddx * ddx + ddy * ddy)
                floor_z = hz - hole_floor[j]
                if lat < hole_r[j]:
                    if bz >= floor_z:
                        in_void = True
                    else:
                        pen = floor_z - bz
                        nbz = 1.0
                        code = 4
                        feat = j
                        best = -1.0  # fixed choice
                    break
                elif bz > floor_z:
                    wall = lat - hole_r[j]
                    if wall < best:
                        best = wall
                        pen = wall
                        nbx = -ddx / lat
                        nby = -ddy / lat
                        nbz = 0.0
                        code = 3
                        feat = j
                else:
                    # beside the bore, below its floor: the nearest bore
                    # surface is the floor/wall corner ring
                    dr = lat - hole_r[j]
                    dz_c = floor_z - bz
                    corner = np.sqrt(dr * dr + dz_c * dz_c)
                    if corner < best and corner > 1e-12:
                        best = corner
                        pen = corner
                        nbx = -(ddx / lat) * (dr / corner)
                        nby = -(ddy / lat) * (dr / corner)
                        nbz = dz_c / corner
                        code = 3
                        feat = j
            if not in_void and code != 4:
                d_top = hz - bz
                if d_top < best:
                    best = d_top
                    pen = d_top
                    nbx, nby, nbz = 0.0, 0.0, 1.0
                    code = 1
                    feat = -1
                if hx - bx < best:
                    best = hx - bx
                    pen = best
                    nbx, nby, nbz = 1.0, 0.0, 0.0
                    code = 2
                    feat = -1
                if bx + hx < best:
                    best = bx + hx
                    pen = best
                    nbx, nby, nbz = -1.0, 0.0, 0.0
                    code = 2
                    feat = -1
                if hy - by < best:
                    best = hy - by
                    pen = best
                    nbx, nby, nbz = 0.0, 1.0, 0.0
                    code = 2
                    feat = -1
                if by + hy < best:
                    best = by + hy
                    pen = best
                    nbx, nby, nbz = 0.0, -1.0, 0.0
                    code = 2
                    feat = -1
            if in_void:
                code = 0
        elif pz < 0.0:
            pen = -pz
            code = 5
        if code == 0:
            continue

        # normal to world frame
        if code == 5:
            nx, ny, nz = 0.0, 0.0, 1.0
        else:
            nx = rot_wb[0, 0] * nbx + rot_wb[0, 1] * nby + rot_wb[0, 2] * nbz
            ny = rot_wb[1, 0] * nbx + rot_wb[1, 1] * nby + rot_wb[1, 2] * nbz
            nz = rot_wb[2, 0] * nbx + rot_wb[2, 1] * nby + rot_wb[2, 2] * nbz

        if use_velocity:
            vx, vy, vz = velocities[i, 0], velocities[i, 1], velocities[i, 2]
            v_n = vx * nx + vy * ny + vz * nz
            pen_rate = -v_n
            d_tot = d_c + k_c * dt
            if pen_rate > 0.0:
                f_damp = d_tot * pen_rate
                cap = masses[i] * pen_rate / dt - k_c * pen
                if cap < 0.0:
                    cap = 0.0
                if f_damp > cap:
                    f_damp = cap
            else:
                f_damp = d_tot * pen_rate
            f_n = k_c * pen + f_damp
            if f_n < 0.0:
                f_n = 0.0
            fx = f_n * nx
            fy = f_n * ny
            fz = f_n * nz
            tvx = vx - v_n * nx
            tvy = vy - v_n * ny
            tvz = vz - v_n * nz
            speed_t = np.sqrt(tvx * tvx + tvy * tvy + tvz * tvz)
            if speed_t > 1e-9 and f_n > 0.0:
                # Hole bores are smooth: near-frictionless walls, so pegs
                # slide down freely; outer faces keep the full friction.
                mu_here = mu * 0.05 if code == 3 else mu
                f_t = d_t * speed_t
                coulomb = mu_here * f_n
                if f_t > coulomb:
                    f_t = coulomb
                imp = masses[i] * speed_t / dt
                if f_t > imp:
                    f_t = imp
                scale = f_t / speed_t
                fx -= scale * tvx
                fy -= scale * tvy
                fz -= scale * tvz
        else:
            f_n = k_c * pen
            fx = f_n * nx
            fy = f_n * ny
            fz = f_n * nz

        forces[i, 0] = fx
        forces[i, 1] = fy
        forces[i, 2] = fz
        normals[i, 0] = nx
        normals[i, 1] = ny
        normals[i, 2] = nz
        pens[i] = pen
        codes[i] = code
        feats[i] = feat
    return forces, normals, pens, codes, feats
