"""Vectorized numpy implementations of the hot kernels.

Fallback path for when numba is unavailable or disabled. Semantics must
match _kernels_numba exactly (same candidate sets, same tie-breaks, same
per-element arithmetic); summation order may differ, so cross-backend
comparisons are close to but not bitwise equal.
"""

from __future__ import annotations

import numpy as np

from .shbasis import (
    SH_C0, SH_C1, SH_C2_XY, SH_C2_ZZ, SH_C2_XX,
    SH_C3_0, SH_C3_1, SH_C3_2, SH_C3_3, SH_C3_4,
)

_ASSOC_CHUNK = 2048


def sh_basis_many(dirs: np.ndarray) -> np.ndarray:
    """(N, 16) basis values; input rows are assumed unit."""
    x = dirs[:, 0]
    y = dirs[:, 1]
    z = dirs[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    b = np.empty((dirs.shape[0], 16))
    b[:, 0] = SH_C0
    b[:, 1] = SH_C1 * y
    b[:, 2] = SH_C1 * z
    b[:, 3] = SH_C1 * x
    b[:, 4] = SH_C2_XY * x * y
    b[:, 5] = SH_C2_XY * y * z
    b[:, 6] = SH_C2_ZZ * (3.0 * zz - 1.0)
    b[:, 7] = SH_C2_XY * x * z
    b[:, 8] = SH_C2_XX * (xx - yy)
    b[:, 9] = SH_C3_0 * y * (3.0 * xx - yy)
    b[:, 10] = SH_C3_1 * x * y * z
    b[:, 11] = SH_C3_2 * y * (4.0 * zz - xx - yy)
    b[:, 12] = SH_C3_3 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    b[:, 13] = SH_C3_2 * x * (4.0 * zz - xx - yy)
    b[:, 14] = SH_C3_4 * z * (xx - yy)
    b[:, 15] = SH_C3_0 * x * (xx - 3.0 * yy)
    return b


def sh_basis_gradient_many(dirs: np.ndarray) -> np.ndarray:
    """(N, 16, 3) tangent-projected basis gradients; rows assumed unit."""
    n = dirs.shape[0]
    x = dirs[:, 0]
    y = dirs[:, 1]
    z = dirs[:, 2]
    xx, yy, zz = x * x, y * y, z * z
    zero = np.zeros(n)
    g = np.empty((n, 16, 3))
    g[:, 0] = 0.0
    g[:, 1, 0], g[:, 1, 1], g[:, 1, 2] = zero, np.full(n, SH_C1), zero
    g[:, 2, 0], g[:, 2, 1], g[:, 2, 2] = zero, zero, np.full(n, SH_C1)
    g[:, 3, 0], g[:, 3, 1], g[:, 3, 2] = np.full(n, SH_C1), zero, zero
    g[:, 4, 0], g[:, 4, 1], g[:, 4, 2] = SH_C2_XY * y, SH_C2_XY * x, zero
    g[:, 5, 0], g[:, 5, 1], g[:, 5, 2] = zero, SH_C2_XY * z, SH_C2_XY * y
    g[:, 6, 0], g[:, 6, 1], g[:, 6, 2] = zero, zero, SH_C2_ZZ * 6.0 * z
    g[:, 7, 0], g[:, 7, 1], g[:, 7, 2] = SH_C2_XY * z, zero, SH_C2_XY * x
    g[:, 8, 0], g[:, 8, 1], g[:, 8, 2] = SH_C2_XX * 2.0 * x, -SH_C2_XX * 2.0 * y, zero
    g[:, 9, 0], g[:, 9, 1], g[:, 9, 2] = SH_C3_0 * 6.0 * x * y, SH_C3_0 * 3.0 * (xx - yy), zero
    g[:, 10, 0], g[:, 10, 1], g[:, 10, 2] = SH_C3_1 * y * z, SH_C3_1 * x * z, SH_C3_1 * x * y
    g[:, 11, 0] = -SH_C3_2 * 2.0 * x * y
    g[:, 11, 1] = SH_C3_2 * (4.0 * zz - xx - 3.0 * yy)
    g[:, 11, 2] = SH_C3_2 * 8.0 * y * z
    g[:, 12, 0] = -SH_C3_3 * 6.0 * x * z
    g[:, 12, 1] = -SH_C3_3 * 6.0 * y * z
    g[:, 12, 2] = SH_C3_3 * (6.0 * zz - 3.0 * xx - 3.0 * yy)
    g[:, 13, 0] = SH_C3_2 * (4.0 * zz - 3.0 * xx - yy)
    g[:, 13, 1] = -SH_C3_2 * 2.0 * x * y
    g[:, 13, 2] = SH_C3_2 * 8.0 * x * z
    g[:, 14, 0], g[:, 14, 1], g[:, 14, 2] = SH_C3_4 * 2.0 * x * z, -SH_C3_4 * 2.0 * y * z, SH_C3_4 * (xx - yy)
    g[:, 15, 0], g[:, 15, 1], g[:, 15, 2] = SH_C3_0 * 3.0 * (xx - yy), -SH_C3_0 * 6.0 * x * y, zero
    radial = np.einsum("nbi,ni->nb", g, dirs)
    g -= radial[:, :, None] * dirs[:, None, :]
    return g


def associate_many(pts, voxel, radius, means, cell_codes, cell_starts, cell_members):
    """Nearest Gaussian per point over the 27-cell neighborhood.

    The CSR table is ignored here; a Chebyshev-distance-1 mask on cell
    coordinates selects the identical candidate set. Ties on squared
    distance resolve to the lowest Gaussian index.
    """
    n = pts.shape[0]
    out = np.full(n, -1, dtype=np.int64)
    if n == 0 or means.shape[0] == 0:
        return out
    r2 = radius * radius
    cells_p = np.floor(pts / voxel).astype(np.int64)
    cells_g = np.floor(means / voxel).astype(np.int64)
    for a in range(0, n, _ASSOC_CHUNK):
        b = min(a + _ASSOC_CHUNK, n)
        cheb = np.all(np.abs(cells_p[a:b, None, :] - cells_g[None, :, :]) <= 1, axis=-1)
        diff = pts[a:b, None, :] - means[None, :, :]
        d2 = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1] + diff[..., 2] * diff[..., 2]
        d2 = np.where(cheb, d2, np.inf)
        j = np.argmin(d2, axis=1)
        dmin = d2[np.arange(b - a), j]
        out[a:b] = np.where(dmin <= r2, j, -1)
    return out


def _skew_many(v):
    n = v.shape[0]
    s = np.zeros((n, 3, 3))
    s[:, 0, 1] = -v[:, 2]
    s[:, 0, 2] = v[:, 1]
    s[:, 1, 0] = v[:, 2]
    s[:, 1, 2] = -v[:, 0]
    s[:, 2, 0] = -v[:, 1]
    s[:, 2, 1] = v[:, 0]
    return s


def accumulate_terms(pts, rcs, assoc, R, t, means, inv_covs, medians, scales,
                     coeffs, cauchy_c, with_rcs):
    """Raw geometric and RCS normal-equation sums at one linearization.

    Returns (H_geo 6x6, g_geo 6, geo_sq_sum, n_geo,
             H_rot 3x3, g_rot 3, rcs_rho_sum, rcs_sq_sum, n_rcs).
    Geometric residuals use the decoupled retraction (R <- exp(phi) R,
    t <- t + rho): de/drho = I, de/dphi = -[R p]_x. RCS residuals carry
    the Cauchy IRLS weight and only fill the rotation block.
    """
    H_geo = np.zeros((6, 6))
    g_geo = np.zeros(6)
    H_rot = np.zeros((3, 3))
    g_rot = np.zeros(3)
    sel = assoc >= 0
    idx = assoc[sel]
    n_geo = int(idx.shape[0])
    if n_geo == 0:
        return H_geo, g_geo, 0.0, 0, H_rot, g_rot, 0.0, 0.0, 0

    p = pts[sel]
    a = p @ R.T
    e = (a + t) - means[idx]
    M = inv_covs[idx]
    me = np.einsum("nij,nj->ni", M, e)
    geo_sq = float(np.einsum("ni,ni->", e, me))
    S = _skew_many(a)
    MS = np.einsum("nij,njk->nik", M, S)
    H_geo[:3, :3] = M.sum(axis=0)
    H_geo[:3, 3:] = -MS.sum(axis=0)
    H_geo[3:, :3] = H_geo[:3, 3:].T
    H_geo[3:, 3:] = np.einsum("nji,njk->ik", S, MS)
    g_geo[:3] = me.sum(axis=0)
    g_geo[3:] = np.cross(a, me).sum(axis=0)

    rho_sum = 0.0
    rcs_sq = 0.0
    n_rcs = 0
    if with_rcs:
        y = (rcs[sel] - medians[idx]) / scales[idx]
        v = p + (t - means[idx]) @ R  # row @ R == R^T (t - mu)
        nv = np.sqrt(v[:, 0] * v[:, 0] + v[:, 1] * v[:, 1] + v[:, 2] * v[:, 2])
        keep = (np.abs(y) <= 1.0) & (nv > 1e-9)
        n_rcs = int(np.count_nonzero(keep))
        if n_rcs:
            vk = v[keep]
            nvk = nv[keep]
            gk = idx[keep]
            u = vk / nvk[:, None]
            s = np.where(u[:, 0] > 0.0, -1.0, 1.0)
            u = u * s[:, None]
            B = sh_basis_many(u)
            r = np.einsum("ni,ni->n", coeffs[gk], B) - y[keep]
            c2 = cauchy_c * cauchy_c
            wc = 1.0 / (1.0 + r * r / c2)
            G = sh_basis_gradient_many(u)
            cg = np.einsum("ni,nij->nj", coeffs[gk], G)
            drdv = (s / nvk)[:, None] * cg
            A = np.einsum("ij,njk->nik", R.T, _skew_many(t - means[gk]))
            J = np.einsum("ni,nij->nj", drdv, A)
            H_rot[:] = np.einsum("n,ni,nj->ij", wc, J, J)
            g_rot[:] = ((wc * r)[:, None] * J).sum(axis=0)
            rho_sum = float((c2 * np.log1p(r * r / c2)).sum())
            rcs_sq = float((r * r).sum())

    return H_geo, g_geo, geo_sq, n_geo, H_rot, g_rot, rho_sum, rcs_sq, n_rcs
