"""SE(3) pose algebra and radar scan containers.

Quaternions are stored (w, x, y, z) with the canonical sign w >= 0;
rotation matrices are computed on demand. All containers are immutable
values, so they can be shared freely across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

# Below this angle exp/log switch to first-order expressions.
SMALL_ANGLE = 1e-8
# Wider window for the series coefficients that cancel catastrophically
# in their closed forms ((theta - sin theta)/theta^3 and the log V-inverse
# coefficient); the 1e-8 branch alone is not enough to hold 1e-9 round trips.
SERIES_ANGLE = 1e-2


class DegenerateRotationError(ValueError):
    """Rotation angle too close to pi for a stable logarithm."""


def _as_vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.float64).reshape(3)
    return v


def skew(v) -> np.ndarray:
    """3x3 skew matrix S with S @ x = v x x."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


# ---------------------------------------------------------------------------
# quaternion helpers (w, x, y, z)
# ---------------------------------------------------------------------------

def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array([
        aw * bw - ax * bx - ay * by - az * bz,
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
    ])


def quat_conj(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate a 3-vector by a unit quaternion."""
    w = q[0]
    u = q[1:]
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    wx, wy, wz = w * x, w * y, w * z
    return np.array([
        [1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)],
        [2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)],
        [2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)],
    ])


def quat_from_rotvec(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    if theta < SMALL_ANGLE:
        # sin(theta/2)/theta -> 1/2 as theta -> 0
        half_sinc = 0.5 - theta * theta / 48.0
        return np.array([1.0 - theta * theta / 8.0,
                         half_sinc * phi[0], half_sinc * phi[1], half_sinc * phi[2]])
    s = math.sin(0.5 * theta) / theta
    return np.array([math.cos(0.5 * theta), s * phi[0], s * phi[1], s * phi[2]])


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadarPoint:
    """One radar return in the sensor frame.

    position is in meters, doppler is the radial velocity in m/s
    (negative when closing), rcs in dBsm.
    """

    position: np.ndarray
    doppler: float
    rcs: float

    def __post_init__(self):
        p = _as_vec3(self.position)
        if not np.all(np.isfinite(p)):
            raise ValueError("radar point position must be finite")
        if float(np.linalg.norm(p)) <= 0.0:
            raise ValueError("radar return at the sensor origin is invalid")
        p.flags.writeable = False
        object.__setattr__(self, "position", p)


@dataclass(frozen=True)
class Scan:
    """A single radar scan, stored column-wise for fast numerics."""

    positions: np.ndarray  # (N, 3) sensor frame, m
    doppler: np.ndarray    # (N,) m/s
    rcs: np.ndarray        # (N,) dBsm
    timestamp: float = 0.0

    def __post_init__(self):
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64).reshape(-1, 3))
        dop = np.ascontiguousarray(np.asarray(self.doppler, dtype=np.float64).reshape(-1))
        rcs = np.ascontiguousarray(np.asarray(self.rcs, dtype=np.float64).reshape(-1))
        if not (len(pos) == len(dop) == len(rcs)):
            raise ValueError("scan arrays must share the same length")
        if not np.all(np.isfinite(pos)):
            raise ValueError("scan positions must be finite")
        if len(pos) and np.any(np.einsum("ij,ij->i", pos, pos) <= 0.0):
            raise ValueError("scan contains a return at the sensor origin")
        for a in (pos, dop, rcs):
            a.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "doppler", dop)
        object.__setattr__(self, "rcs", rcs)

    def __len__(self) -> int:
        return len(self.positions)

    def point(self, i: int) -> RadarPoint:
        return RadarPoint(self.positions[i].copy(), float(self.doppler[i]), float(self.rcs[i]))

    def subset(self, mask) -> "Scan":
        mask = np.asarray(mask)
        return Scan(self.positions[mask], self.doppler[mask], self.rcs[mask], self.timestamp)

    @classmethod
    def from_points(cls, points, timestamp: float = 0.0) -> "Scan":
        pts = list(points)
        return cls(
            np.array([p.position for p in pts], dtype=np.float64).reshape(-1, 3),
            np.array([p.doppler for p in pts], dtype=np.float64),
            np.array([p.rcs for p in pts], dtype=np.float64),
            timestamp,
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform world <- sensor: x_world = R @ x_sensor + t."""

    q: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    t: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        q = np.asarray(self.q, dtype=np.float64).reshape(4).copy()
        t = _as_vec3(self.t).copy()
        n2 = float(q @ q)
        if not math.isfinite(n2) or n2 <= 0.0:
            raise ValueError("quaternion must be finite and nonzero")
        # Renormalize only when drift is detectable; keeps already-unit
        # quaternions bit-stable through no-op compositions.
        if abs(n2 - 1.0) > 1e-14:
            q /= math.sqrt(n2)
        if q[0] < 0.0:
            q = -q
        q.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "t", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.q)


@dataclass(frozen=True)
class Twist:
    """se(3) tangent vector: rho is the translational part, phi rotational."""

    rho: np.ndarray
    phi: np.ndarray

    def __post_init__(self):
        rho = _as_vec3(self.rho)
        phi = _as_vec3(self.phi)
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(phi))):
            raise ValueError("twist components must be finite")
        rho.flags.writeable = False
        phi.flags.writeable = False
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "phi", phi)

    @property
    def vec(self) -> np.ndarray:
        return np.concatenate([self.rho, self.phi])

    @classmethod
    def from_vec(cls, v) -> "Twist":
        v = np.asarray(v, dtype=np.float64).reshape(6)
        return cls(v[:3], v[3:])

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))


# ---------------------------------------------------------------------------
# group operations
# ---------------------------------------------------------------------------

def compose(a: Pose, b: Pose) -> Pose:
    """a then b seen from a's frame: (a o b) x = a(b(x))."""
    return Pose(quat_mul(a.q, b.q), quat_rotate(a.q, b.t) + a.t)


def inverse(p: Pose) -> Pose:
    qi = quat_conj(p.q)
    return Pose(qi, -quat_rotate(qi, p.t))


def transform_point(p: Pose, x) -> np.ndarray:
    return quat_rotate(p.q, _as_vec3(x)) + p.t


def transform_points(p: Pose, xs: np.ndarray) -> np.ndarray:
    """Batched transform_point for an (N, 3) array."""
    xs = np.asarray(xs, dtype=np.float64).reshape(-1, 3)
    return xs @ p.rotation_matrix().T + p.t


def _left_jacobian(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    S = skew(phi)
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        a1 = 0.5 - t2 / 24.0 + t2 * t2 / 720.0
        a2 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0
    else:
        # 2 sin^2(t/2)/t^2 avoids the 1 - cos(t) cancellation
        sh = math.sin(0.5 * theta)
        a1 = 2.0 * sh * sh / (theta * theta)
        a2 = (theta - math.sin(theta)) / (theta ** 3)
    return np.eye(3) + a1 * S + a2 * (S @ S)


def _left_jacobian_inv(phi: np.ndarray) -> np.ndarray:
    theta = float(np.linalg.norm(phi))
    S = skew(phi)
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        b2 = 1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    else:
        # 1/t^2 - cot(t/2)/(2t), stable towards t = pi
        b2 = 1.0 / (theta * theta) - 1.0 / (2.0 * theta * math.tan(0.5 * theta))
    return np.eye(3) - 0.5 * S + b2 * (S @ S)


def se3_exp(xi: Twist) -> Pose:
    """SE(3) exponential: Rodrigues rotation, left Jacobian on rho."""
    q = quat_from_rotvec(xi.phi)
    t = _left_jacobian(xi.phi) @ xi.rho
    return Pose(q, t)


def se3_log(p: Pose) -> Twist:
    """Inverse of se3_exp; raises for rotations within 1e-6 of pi."""
    qw = float(p.q[0])
    qv = p.q[1:]
    nv = float(np.linalg.norm(qv))
    theta = 2.0 * math.atan2(nv, qw)
    if math.pi - theta < 1e-6:
        raise DegenerateRotationError(f"rotation angle {theta} too close to pi")
    if theta < SMALL_ANGLE:
        phi = 2.0 * qv
    else:
        phi = (theta / nv) * qv
    rho = _left_jacobian_inv(phi) @ p.t
    return Twist(rho, phi)


def pose_error(estimate: Pose, truth: Pose) -> tuple[float, float]:
    """(translation error in meters, geodesic rotation error in degrees)."""
    dt = float(np.linalg.norm(estimate.t - truth.t))
    if np.array_equal(estimate.q, truth.q):
        return dt, 0.0
    q_rel = quat_mul(quat_conj(truth.q), estimate.q)
    ang = 2.0 * math.atan2(float(np.linalg.norm(q_rel[1:])), abs(float(q_rel[0])))
    return dt, math.degrees(ang)
