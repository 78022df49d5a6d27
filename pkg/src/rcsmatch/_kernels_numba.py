"""Numba @njit implementations of the hot kernels.

Twin of _kernels_numpy; same candidate sets, tie-breaks and per-element
arithmetic are mandatory. Kept single-threaded with fixed summation order
so repeated runs are bit-identical.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from .shbasis import (
    SH_C0, SH_C1, SH_C2_XY, SH_C2_ZZ, SH_C2_XX,
    SH_C3_0, SH_C3_1, SH_C3_2, SH_C3_3, SH_C3_4,
)

_CELL_OFFSET = 1 << 20


@njit(cache=True)
def _basis16(x, y, z, out):
    xx = x * x
    yy = y * y
    zz = z * z
    out[0] = SH_C0
    out[1] = SH_C1 * y
    out[2] = SH_C1 * z
    out[3] = SH_C1 * x
    out[4] = SH_C2_XY * x * y
    out[5] = SH_C2_XY * y * z
    out[6] = SH_C2_ZZ * (3.0 * zz - 1.0)
    out[7] = SH_C2_XY * x * z
    out[8] = SH_C2_XX * (xx - yy)
    out[9] = SH_C3_0 * y * (3.0 * xx - yy)
    out[10] = SH_C3_1 * x * y * z
    out[11] = SH_C3_2 * y * (4.0 * zz - xx - yy)
    out[12] = SH_C3_3 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    out[13] = SH_C3_2 * x * (4.0 * zz - xx - yy)
    out[14] = SH_C3_4 * z * (xx - yy)
    out[15] = SH_C3_0 * x * (xx - 3.0 * yy)


@njit(cache=True)
def _basis_grad16(x, y, z, out):
    # raw polynomial gradients; caller projects onto the tangent plane
    xx = x * x
    yy = y * y
    zz = z * z
    for i in range(16):
        out[i, 0] = 0.0
        out[i, 1] = 0.0
        out[i, 2] = 0.0
    out[1, 1] = SH_C1
    out[2, 2] = SH_C1
    out[3, 0] = SH_C1
    out[4, 0] = SH_C2_XY * y
    out[4, 1] = SH_C2_XY * x
    out[5, 1] = SH_C2_XY * z
    out[5, 2] = SH_C2_XY * y
    out[6, 2] = SH_C2_ZZ * 6.0 * z
    out[7, 0] = SH_C2_XY * z
    out[7, 2] = SH_C2_XY * x
    out[8, 0] = SH_C2_XX * 2.0 * x
    out[8, 1] = -SH_C2_XX * 2.0 * y
    out[9, 0] = SH_C3_0 * 6.0 * x * y
    out[9, 1] = SH_C3_0 * 3.0 * (xx - yy)
    out[10, 0] = SH_C3_1 * y * z
    out[10, 1] = SH_C3_1 * x * z
    out[10, 2] = SH_C3_1 * x * y
    out[11, 0] = -SH_C3_2 * 2.0 * x * y
    out[11, 1] = SH_C3_2 * (4.0 * zz - xx - 3.0 * yy)
    out[11, 2] = SH_C3_2 * 8.0 * y * z
    out[12, 0] = -SH_C3_3 * 6.0 * x * z
    out[12, 1] = -SH_C3_3 * 6.0 * y * z
    out[12, 2] = SH_C3_3 * (6.0 * zz - 3.0 * xx - 3.0 * yy)
    out[13, 0] = SH_C3_2 * (4.0 * zz - 3.0 * xx - yy)
    out[13, 1] = -SH_C3_2 * 2.0 * x * y
    out[13, 2] = SH_C3_2 * 8.0 * x * z
    out[14, 0] = SH_C3_4 * 2.0 * x * z
    out[14, 1] = -SH_C3_4 * 2.0 * y * z
    out[14, 2] = SH_C3_4 * (xx - yy)
    out[15, 0] = SH_C3_0 * 3.0 * (xx - yy)
    out[15, 1] = -SH_C3_0 * 6.0 * x * y


@njit(cache=True)
def sh_basis_many(dirs):
    n = dirs.shape[0]
    out = np.empty((n, 16))
    for i in range(n):
        _basis16(dirs[i, 0], dirs[i, 1], dirs[i, 2], out[i])
    return out


@njit(cache=True)
def sh_basis_gradient_many(dirs):
    n = dirs.shape[0]
    out = np.empty((n, 16, 3))
    for i in range(n):
        x = dirs[i, 0]
        y = dirs[i, 1]
        z = dirs[i, 2]
        _basis_grad16(x, y, z, out[i])
        for b in range(16):
            radial = out[i, b, 0] * x + out[i, b, 1] * y + out[i, b, 2] * z
            out[i, b, 0] -= radial * x
            out[i, b, 1] -= radial * y
            out[i, b, 2] -= radial * z
    return out


@njit(cache=True)
def _find_cell(cell_codes, code):
    lo = 0
    hi = cell_codes.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if cell_codes[mid] < code:
            lo = mid + 1
        else:
            hi = mid
    if lo < cell_codes.shape[0] and cell_codes[lo] == code:
        return lo
    return -1


@njit(cache=True)
def associate_many(pts, voxel, radius, means, cell_codes, cell_starts, cell_members):
    n = pts.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    r2 = radius * radius
    off = _CELL_OFFSET
    for i in range(n):
        ci = np.int64(np.floor(pts[i, 0] / voxel))
        cj = np.int64(np.floor(pts[i, 1] / voxel))
        ck = np.int64(np.floor(pts[i, 2] / voxel))
        best = np.inf
        best_idx = np.int64(-1)
        for di in range(-1, 2):
            for dj in range(-1, 2):
                for dk in range(-1, 2):
                    code = (((ci + di + off) << 42)
                            | ((cj + dj + off) << 21)
                            | (ck + dk + off))
                    c = _find_cell(cell_codes, code)
                    if c < 0:
                        continue
                    for m in range(cell_starts[c], cell_starts[c + 1]):
                        g = cell_members[m]
                        dx = pts[i, 0] - means[g, 0]
                        dy = pts[i, 1] - means[g, 1]
                        dz = pts[i, 2] - means[g, 2]
                        d2 = dx * dx + dy * dy + dz * dz
                        if d2 < best or (d2 == best and g < best_idx):
                            best = d2
                            best_idx = g
        if best_idx >= 0 and best <= r2:
            out[i] = best_idx
    return out


@njit(cache=True)
def accumulate_terms(pts, rcs, assoc, R, t, means, inv_covs, medians, scales,
                     coeffs, cauchy_c, with_rcs):
    H_geo = np.zeros((6, 6))
    g_geo = np.zeros(6)
    H_rot = np.zeros((3, 3))
    g_rot = np.zeros(3)
    geo_sq = 0.0
    rho_sum = 0.0
    rcs_sq = 0.0
    n_geo = 0
    n_rcs = 0
    c2 = cauchy_c * cauchy_c
    basis = np.empty(16)
    grad = np.empty((16, 3))

    for i in range(pts.shape[0]):
        g = assoc[i]
        if g < 0:
            continue
        n_geo += 1
        px = pts[i, 0]
        py = pts[i, 1]
        pz = pts[i, 2]
        # rotated point (no translation); its skew is the rotation Jacobian
        ax = R[0, 0] * px + R[0, 1] * py + R[0, 2] * pz
        ay = R[1, 0] * px + R[1, 1] * py + R[1, 2] * pz
        az = R[2, 0] * px + R[2, 1] * py + R[2, 2] * pz
        e0 = ax + t[0] - means[g, 0]
        e1 = ay + t[1] - means[g, 1]
        e2 = az + t[2] - means[g, 2]
        M = inv_covs[g]
        me0 = M[0, 0] * e0 + M[0, 1] * e1 + M[0, 2] * e2
        me1 = M[1, 0] * e0 + M[1, 1] * e1 + M[1, 2] * e2
        me2 = M[2, 0] * e0 + M[2, 1] * e1 + M[2, 2] * e2
        geo_sq += e0 * me0 + e1 * me1 + e2 * me2
        g_geo[0] += me0
        g_geo[1] += me1
        g_geo[2] += me2
        # cross(a, me)
        g_geo[3] += ay * me2 - az * me1
        g_geo[4] += az * me0 - ax * me2
        g_geo[5] += ax * me1 - ay * me0
        # S = skew(a); top-left M, top-right -M S, bottom-right S^T M S
        for r_ in range(3):
            for c_ in range(3):
                H_geo[r_, c_] += M[r_, c_]
        # MS columns: (M S)[:, 0] = M @ (0, az, -ay) etc.
        ms00 = M[0, 1] * az - M[0, 2] * ay
        ms10 = M[1, 1] * az - M[1, 2] * ay
        ms20 = M[2, 1] * az - M[2, 2] * ay
        ms01 = -M[0, 0] * az + M[0, 2] * ax
        ms11 = -M[1, 0] * az + M[1, 2] * ax
        ms21 = -M[2, 0] * az + M[2, 2] * ax
        ms02 = M[0, 0] * ay - M[0, 1] * ax
        ms12 = M[1, 0] * ay - M[1, 1] * ax
        ms22 = M[2, 0] * ay - M[2, 1] * ax
        H_geo[0, 3] -= ms00
        H_geo[0, 4] -= ms01
        H_geo[0, 5] -= ms02
        H_geo[1, 3] -= ms10
        H_geo[1, 4] -= ms11
        H_geo[1, 5] -= ms12
        H_geo[2, 3] -= ms20
        H_geo[2, 4] -= ms21
        H_geo[2, 5] -= ms22
        # S^T (M S): row r_ of S^T is column r_ of S
        H_geo[3, 3] += az * ms10 - ay * ms20
        H_geo[3, 4] += az * ms11 - ay * ms21
        H_geo[3, 5] += az * ms12 - ay * ms22
        H_geo[4, 3] += -az * ms00 + ax * ms20
        H_geo[4, 4] += -az * ms01 + ax * ms21
        H_geo[4, 5] += -az * ms02 + ax * ms22
        H_geo[5, 3] += ay * ms00 - ax * ms10
        H_geo[5, 4] += ay * ms01 - ax * ms11
        H_geo[5, 5] += ay * ms02 - ax * ms12

        if not with_rcs:
            continue
        y = (rcs[i] - medians[g]) / scales[g]
        if abs(y) > 1.0:
            continue
        # v = p + R^T (t - mu), the sensor-frame point-minus-center vector
        w0 = t[0] - means[g, 0]
        w1 = t[1] - means[g, 1]
        w2 = t[2] - means[g, 2]
        v0 = px + R[0, 0] * w0 + R[1, 0] * w1 + R[2, 0] * w2
        v1 = py + R[0, 1] * w0 + R[1, 1] * w1 + R[2, 1] * w2
        v2 = pz + R[0, 2] * w0 + R[1, 2] * w1 + R[2, 2] * w2
        nv = np.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
        if nv <= 1e-9:
            continue
        u0 = v0 / nv
        u1 = v1 / nv
        u2 = v2 / nv
        s = 1.0
        if u0 > 0.0:
            s = -1.0
            u0 = -u0
            u1 = -u1
            u2 = -u2
        _basis16(u0, u1, u2, basis)
        pred = 0.0
        for b in range(16):
            pred += coeffs[g, b] * basis[b]
        r = pred - y
        wc = 1.0 / (1.0 + r * r / c2)
        _basis_grad16(u0, u1, u2, grad)
        cg0 = 0.0
        cg1 = 0.0
        cg2 = 0.0
        for b in range(16):
            radial = grad[b, 0] * u0 + grad[b, 1] * u1 + grad[b, 2] * u2
            cg0 += coeffs[g, b] * (grad[b, 0] - radial * u0)
            cg1 += coeffs[g, b] * (grad[b, 1] - radial * u1)
            cg2 += coeffs[g, b] * (grad[b, 2] - radial * u2)
        f = s / nv
        d0 = f * cg0
        d1 = f * cg1
        d2_ = f * cg2
        # J = drdv @ (R^T skew(w)); A = R^T S_w computed column-wise
        a00 = R[1, 0] * w2 - R[2, 0] * w1
        a10 = R[1, 1] * w2 - R[2, 1] * w1
        a20 = R[1, 2] * w2 - R[2, 2] * w1
        a01 = -R[0, 0] * w2 + R[2, 0] * w0
        a11 = -R[0, 1] * w2 + R[2, 1] * w0
        a21 = -R[0, 2] * w2 + R[2, 2] * w0
        a02 = R[0, 0] * w1 - R[1, 0] * w0
        a12 = R[0, 1] * w1 - R[1, 1] * w0
        a22 = R[0, 2] * w1 - R[1, 2] * w0
        J0 = d0 * a00 + d1 * a10 + d2_ * a20
        J1 = d0 * a01 + d1 * a11 + d2_ * a21
        J2 = d0 * a02 + d1 * a12 + d2_ * a22
        H_rot[0, 0] += wc * J0 * J0
        H_rot[0, 1] += wc * J0 * J1
        H_rot[0, 2] += wc * J0 * J2
        H_rot[1, 0] += wc * J1 * J0
        H_rot[1, 1] += wc * J1 * J1
        H_rot[1, 2] += wc * J1 * J2
        H_rot[2, 0] += wc * J2 * J0
        H_rot[2, 1] += wc * J2 * J1
        H_rot[2, 2] += wc * J2 * J2
        wr = wc * r
        g_rot[0] += wr * J0
        g_rot[1] += wr * J1
        g_rot[2] += wr * J2
        rho_sum += c2 * np.log1p(r * r / c2)
        rcs_sq += r * r
        n_rcs += 1

    return H_geo, g_geo, geo_sq, n_geo, H_rot, g_rot, rho_sum, rcs_sq, n_rcs
