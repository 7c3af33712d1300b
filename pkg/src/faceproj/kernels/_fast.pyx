# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled renderer backend.

Grid-accelerated triangle lookup, but numerically the exact twin of the
numpy reference: same association order, same guard thresholds, first
containing triangle in mesh index order, nearest texel at floor(u + 0.5).
Built with floating-point contraction disabled so both backends round
identically.
"""

from libc.math cimport fabs, floor

# keep in sync with kernels/reference.py
DEF BARY_TOL = 1e-12


def render_into(unsigned char[:, :, ::1] out,
                Py_ssize_t x0, Py_ssize_t y0, Py_ssize_t x1, Py_ssize_t y1,
                double fx, double fy, double cx, double cy,
                const double[:, ::1] rot, const double[::1] origin,
                const double[::1] normal,
                double plane_num, const double[:, ::1] erot,
                const double[::1] etrans,
                const double[::1] tx3, const double[::1] ty3,
                const double[::1] a11, const double[::1] a12,
                const double[::1] a21, const double[::1] a22,
                const double[::1] bx0, const double[::1] bx1,
                const double[::1] by0, const double[::1] by1,
                const double[:, ::1] d1, const double[:, ::1] d2,
                const double[:, ::1] d3,
                double grid_x0, double grid_y0,
                double grid_inv_cw, double grid_inv_ch, int grid_cells,
                const int[::1] cell_start, const int[::1] cell_tris,
                const unsigned char[:, :, ::1] texture):
    cdef:
        Py_ssize_t px, py, ch, s, s_end, icx, icy, tix, tiy
        Py_ssize_t th = texture.shape[0]
        Py_ssize_t tw = texture.shape[1]
        Py_ssize_t nch = out.shape[2]
        int ti, best
        double u, v, dxp, dyp, dx, dy, dz, nd, t
        double wx, wy, wz, vx, vy, vz, lx, ly
        double ddx, ddy, l1, l2, l3, b1, b2, b3, mu, mv
        double r00 = rot[0, 0], r01 = rot[0, 1], r02 = rot[0, 2]
        double r10 = rot[1, 0], r11 = rot[1, 1], r12 = rot[1, 2]
        double r20 = rot[2, 0], r21 = rot[2, 1], r22 = rot[2, 2]
        double e00 = erot[0, 0], e01 = erot[0, 1]
        double e10 = erot[1, 0], e11 = erot[1, 1]
        double e20 = erot[2, 0], e21 = erot[2, 1]
        double ox = origin[0], oy = origin[1], oz = origin[2]
        double n0 = normal[0], n1 = normal[1], n2 = normal[2]
        double ex = etrans[0], ey = etrans[1], ez = etrans[2]

    with nogil:
        for py in range(y0, y1):
            v = <double>py
            dyp = (v - cy) / fy
            for px in range(x0, x1):
                u = <double>px
                dxp = (u - cx) / fx
                dx = r00 * dxp + r01 * dyp + r02
                dy = r10 * dxp + r11 * dyp + r12
                dz = r20 * dxp + r21 * dyp + r22
                nd = n0 * dx + n1 * dy + n2 * dz
                if not (fabs(nd) >= 1e-15):
                    continue
                t = plane_num / nd
                if not (t > 1e-9):
                    continue
                wx = ox + t * dx
                wy = oy + t * dy
                wz = oz + t * dz
                vx = wx - ex
                vy = wy - ey
                vz = wz - ez
                lx = e00 * vx + e10 * vy + e20 * vz
                ly = e01 * vx + e11 * vy + e21 * vz

                icx = <Py_ssize_t>((lx - grid_x0) * grid_inv_cw)
                if icx < 0:
                    icx = 0
                elif icx >= grid_cells:
                    icx = grid_cells - 1
                icy = <Py_ssize_t>((ly - grid_y0) * grid_inv_ch)
                if icy < 0:
                    icy = 0
                elif icy >= grid_cells:
                    icy = grid_cells - 1

                best = -1
                s_end = cell_start[icy * grid_cells + icx + 1]
                for s in range(cell_start[icy * grid_cells + icx], s_end):
                    ti = cell_tris[s]
                    if lx < bx0[ti] or lx > bx1[ti] or ly < by0[ti] or ly > by1[ti]:
                        continue
                    ddx = lx - tx3[ti]
                    ddy = ly - ty3[ti]
                    l1 = a11[ti] * ddx + a12[ti] * ddy
                    l2 = a21[ti] * ddx + a22[ti] * ddy
                    l3 = 1.0 - l1 - l2
                    if l1 >= -BARY_TOL and l2 >= -BARY_TOL and l3 >= -BARY_TOL:
                        best = ti
                        b1 = l1
                        b2 = l2
                        b3 = l3
                        break
                if best < 0:
                    continue
                mu = b1 * d1[best, 0] + b2 * d2[best, 0] + b3 * d3[best, 0]
                mv = b1 * d1[best, 1] + b2 * d2[best, 1] + b3 * d3[best, 1]
                tix = <Py_ssize_t>floor(mu + 0.5)
                tiy = <Py_ssize_t>floor(mv + 0.5)
                if tix < 0 or tix >= tw or tiy < 0 or tiy >= th:
                    continue
                for ch in range(nch):
                    out[py, px, ch] = texture[tiy, tix, ch]
