"""Real spherical-harmonic basis through degree 3.

Fully-normalized real convention with the degree-1 row ordered
proportional to (y, z, x); index(l, m) = l^2 + l + m, 16 values total.
Scalar reference implementations live here; the batched hot paths are in
the kernel backends and must agree with these to the last few ulp.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from .geometry import Pose, quat_rotate, quat_conj

N_SH = 16
MAX_DEGREE = 3

# sqrt-of-rational normalization constants, degree 0..3
SH_C0 = 0.28209479177387814   # 1/(2 sqrt(pi))
SH_C1 = 0.4886025119029199    # sqrt(3/(4 pi))
SH_C2_XY = 1.0925484305920792  # sqrt(15/(4 pi)),  xy / yz / xz rows
SH_C2_ZZ = 0.31539156525252005  # (1/4) sqrt(5/pi), 3z^2 - 1 row
SH_C2_XX = 0.5462742152960396   # (1/4) sqrt(15/pi), x^2 - y^2 row
SH_C3_0 = 0.5900435899266435   # (1/4) sqrt(35/(2 pi)), y(3x^2-y^2) and x(x^2-3y^2)
SH_C3_1 = 2.890611442640554    # (1/2) sqrt(105/pi), xyz
SH_C3_2 = 0.4570457994644658   # (1/4) sqrt(21/(2 pi)), y(4z^2-x^2-y^2) and x(...)
SH_C3_3 = 0.3731763325901154   # (1/4) sqrt(7/pi), z(2z^2-3x^2-3y^2)
SH_C3_4 = 1.445305721320277    # (1/4) sqrt(105/pi), z(x^2-y^2)


class DegenerateDirectionError(ValueError):
    """Point and Gaussian center coincide; no incidence direction exists."""


class IncidenceDirection(NamedTuple):
    """Unit direction in the sensor frame, folded into the x <= 0 hemisphere."""

    dir: np.ndarray
    flipped: bool


def sh_index(l: int, m: int) -> int:
    return l * l + l + m


def _unit_or_raise(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64).reshape(3)
    n = float(np.linalg.norm(d))
    if abs(n - 1.0) > 1e-3:
        raise ValueError(f"direction norm {n} too far from 1")
    if abs(n - 1.0) > 1e-12:
        return d / n
    return d


def eval_sh_basis(direction) -> np.ndarray:
    """All 16 basis values at a unit direction (normalized if within 1e-3)."""
    x, y, z = _unit_or_raise(direction)
    xx, yy, zz = x * x, y * y, z * z
    b = np.empty(N_SH)
    b[0] = SH_C0
    b[1] = SH_C1 * y
    b[2] = SH_C1 * z
    b[3] = SH_C1 * x
    b[4] = SH_C2_XY * x * y
    b[5] = SH_C2_XY * y * z
    b[6] = SH_C2_ZZ * (3.0 * zz - 1.0)
    b[7] = SH_C2_XY * x * z
    b[8] = SH_C2_XX * (xx - yy)
    b[9] = SH_C3_0 * y * (3.0 * xx - yy)
    b[10] = SH_C3_1 * x * y * z
    b[11] = SH_C3_2 * y * (4.0 * zz - xx - yy)
    b[12] = SH_C3_3 * z * (2.0 * zz - 3.0 * xx - 3.0 * yy)
    b[13] = SH_C3_2 * x * (4.0 * zz - xx - yy)
    b[14] = SH_C3_4 * z * (xx - yy)
    b[15] = SH_C3_0 * x * (xx - 3.0 * yy)
    return b


def eval_sh_basis_many(dirs: np.ndarray) -> np.ndarray:
    """(N, 16) basis matrix for an (N, 3) array of unit directions."""
    from . import kernels

    dirs = np.ascontiguousarray(np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
    return kernels.sh_basis_many(dirs)


def sh_basis_gradient(direction) -> np.ndarray:
    """(16, 3) tangent-projected gradient of each basis value.

    Row i is d b_i(normalize(v)) / dv evaluated at the unit direction,
    i.e. the raw polynomial gradient pushed through (I - d d^T)/|v|.
    """
    d = _unit_or_raise(direction)
    x, y, z = d
    xx, yy, zz = x * x, y * y, z * z
    g = np.zeros((N_SH, 3))
    g[1] = (0.0, SH_C1, 0.0)
    g[2] = (0.0, 0.0, SH_C1)
    g[3] = (SH_C1, 0.0, 0.0)
    g[4] = (SH_C2_XY * y, SH_C2_XY * x, 0.0)
    g[5] = (0.0, SH_C2_XY * z, SH_C2_XY * y)
    g[6] = (0.0, 0.0, SH_C2_ZZ * 6.0 * z)
    g[7] = (SH_C2_XY * z, 0.0, SH_C2_XY * x)
    g[8] = (SH_C2_XX * 2.0 * x, -SH_C2_XX * 2.0 * y, 0.0)
    g[9] = (SH_C3_0 * 6.0 * x * y, SH_C3_0 * 3.0 * (xx - yy), 0.0)
    g[10] = (SH_C3_1 * y * z, SH_C3_1 * x * z, SH_C3_1 * x * y)
    g[11] = (-SH_C3_2 * 2.0 * x * y, SH_C3_2 * (4.0 * zz - xx - 3.0 * yy), SH_C3_2 * 8.0 * y * z)
    g[12] = (-SH_C3_3 * 6.0 * x * z, -SH_C3_3 * 6.0 * y * z, SH_C3_3 * (6.0 * zz - 3.0 * xx - 3.0 * yy))
    g[13] = (SH_C3_2 * (4.0 * zz - 3.0 * xx - yy), -SH_C3_2 * 2.0 * x * y, SH_C3_2 * 8.0 * x * z)
    g[14] = (SH_C3_4 * 2.0 * x * z, -SH_C3_4 * 2.0 * y * z, SH_C3_4 * (xx - yy))
    g[15] = (SH_C3_0 * 3.0 * (xx - yy), -SH_C3_0 * 6.0 * x * y, 0.0)
    # project through the normalization Jacobian (I - d d^T), |v| = 1
    return g - np.outer(g @ d, d)


def incidence_direction(point_world, gaussian_mean_world, sensor_pose: Pose) -> IncidenceDirection:
    """Point-minus-center direction in the sensor frame, x-flipped.

    The difference is rotated into the sensor frame and normalized; if its
    x component is positive the whole vector is negated so the direction
    always faces the radar (x <= 0). An exact x = 0 is left unflipped.
    """
    diff = np.asarray(point_world, dtype=np.float64) - np.asarray(gaussian_mean_world, dtype=np.float64)
    v = quat_rotate(quat_conj(sensor_pose.q), diff)
    n = float(np.linalg.norm(v))
    if n <= 1e-9:
        raise DegenerateDirectionError("point coincides with the Gaussian center")
    d = v / n
    if d[0] > 0.0:
        return IncidenceDirection(-d, True)
    return IncidenceDirection(d, False)


def predict_rcs(coeffs: np.ndarray, direction) -> float:
    """Normalized RCS prediction: coefficients dotted with the basis."""
    d = direction.dir if isinstance(direction, IncidenceDirection) else direction
    return float(np.asarray(coeffs, dtype=np.float64).reshape(N_SH) @ eval_sh_basis(d))
