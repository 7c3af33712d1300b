"""Pure-numpy renderer backend.

Expression-for-expression twin of the compiled kernel: same association
order, same guard thresholds, first containing triangle in mesh index
order, nearest texel at floor(u + 0.5).  Outputs are byte-identical to
the compiled backend on every input.
"""

from __future__ import annotations

import numpy as np

BARY_TOL = 1e-12


def render_into(out, x0, y0, x1, y1, fx, fy, cx, cy, rot, origin, normal,
                plane_num, erot, etrans, tx3, ty3, a11, a12, a21, a22,
                bx0, bx1, by0, by1, d1, d2, d3, grid_x0, grid_y0,
                grid_inv_cw, grid_inv_ch, grid_cells, cell_start, cell_tris,
                texture):
    h = y1 - y0
    w = x1 - x0
    u = np.arange(x0, x1, dtype=float)[None, :] + np.zeros((h, 1))
    v = np.arange(y0, y1, dtype=float)[:, None] + np.zeros((1, w))

    # projector ray through each pixel, rotated into the world frame
    dxp = (u - cx) / fx
    dyp = (v - cy) / fy
    dx = rot[0, 0] * dxp + rot[0, 1] * dyp + rot[0, 2]
    dy = rot[1, 0] * dxp + rot[1, 1] * dyp + rot[1, 2]
    dz = rot[2, 0] * dxp + rot[2, 1] * dyp + rot[2, 2]

    nd = normal[0] * dx + normal[1] * dy + normal[2] * dz
    safe = np.abs(nd) >= 1e-15
    t = np.where(safe, plane_num / np.where(safe, nd, 1.0), 0.0)
    valid = safe & (t > 1e-9)

    # plane hit in the estimated face frame, keeping only (x, y)
    wx = origin[0] + t * dx
    wy = origin[1] + t * dy
    wz = origin[2] + t * dz
    vx = wx - etrans[0]
    vy = wy - etrans[1]
    vz = wz - etrans[2]
    lx = (erot[0, 0] * vx + erot[1, 0] * vy + erot[2, 0] * vz).ravel()
    ly = (erot[0, 1] * vx + erot[1, 1] * vy + erot[2, 1] * vz).ravel()

    ntri = len(tx3)
    npix = h * w
    tri_of = np.full(npix, -1, dtype=np.int64)
    lam1 = np.zeros(npix)
    lam2 = np.zeros(npix)
    lam3 = np.zeros(npix)
    remaining = np.nonzero(valid.ravel())[0]
    for ti in range(ntri):
        if remaining.size == 0:
            break
        px = lx[remaining]
        py = ly[remaining]
        near = ((px >= bx0[ti]) & (px <= bx1[ti])
                & (py >= by0[ti]) & (py <= by1[ti]))
        if not near.any():
            continue
        cand = remaining[near]
        ddx = lx[cand] - tx3[ti]
        ddy = ly[cand] - ty3[ti]
        l1 = a11[ti] * ddx + a12[ti] * ddy
        l2 = a21[ti] * ddx + a22[ti] * ddy
        l3 = 1.0 - l1 - l2
        inside = (l1 >= -BARY_TOL) & (l2 >= -BARY_TOL) & (l3 >= -BARY_TOL)
        hit = cand[inside]
        tri_of[hit] = ti
        lam1[hit] = l1[inside]
        lam2[hit] = l2[inside]
        lam3[hit] = l3[inside]
        remaining = np.concatenate([remaining[~near], cand[~inside]])

    got = np.nonzero(tri_of >= 0)[0]
    if got.size == 0:
        return
    ti = tri_of[got]
    mu = lam1[got] * d1[ti, 0] + lam2[got] * d2[ti, 0] + lam3[got] * d3[ti, 0]
    mv = lam1[got] * d1[ti, 1] + lam2[got] * d2[ti, 1] + lam3[got] * d3[ti, 1]
    tix = np.floor(mu + 0.5).astype(np.int64)
    tiy = np.floor(mv + 0.5).astype(np.int64)
    th, tw = texture.shape[0], texture.shape[1]
    inb = (tix >= 0) & (tix < tw) & (tiy >= 0) & (tiy < th)
    got = got[inb]
    rows = got // w + y0
    cols = got % w + x0
    out[rows, cols, :] = texture[tiy[inb], tix[inb], :]
