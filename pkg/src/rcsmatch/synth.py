"""Synthetic radar scenes with planted view-dependent RCS fields.

The generator is the oracle for the acceptance suite: surfaces carry
known SH coefficient vectors, trajectories have analytic ego-velocity,
Doppler obeys the static-point equation exactly up to injected noise,
and dynamic points are labeled. Planted RCS is evaluated at the same
point-minus-anchor, x-flipped sensor-frame direction the model builder
uses, so plant-and-recover comparisons are fair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose, Scan, quat_from_rotvec
from .shbasis import N_SH, eval_sh_basis

FOV_HALF_ANGLE = math.radians(60.0)  # 120 degree forward field of view
MIN_RANGE = 0.1


class EmptyScanError(RuntimeError):
    """No surface point visible from the requested pose."""


@dataclass(frozen=True)
class Surface:
    kind: str                      # plane | sphere | cylinder
    center: np.ndarray
    axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))
    radius: float = 1.0            # sphere / cylinder
    half_extents: tuple[float, float] = (1.0, 1.0)  # plane spans; cylinder (half_length, -)
    rcs_field: np.ndarray = field(default_factory=lambda: np.zeros(N_SH))
    rcs_noise_sigma: float = 0.5

    def __post_init__(self):
        if self.kind not in ("plane", "sphere", "cylinder"):
            raise ValueError(f"unknown surface kind {self.kind!r}")
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        object.__setattr__(self, "axis", axis / np.linalg.norm(axis))
        object.__setattr__(self, "rcs_field",
                           np.asarray(self.rcs_field, dtype=np.float64).reshape(N_SH))
        if self.rcs_noise_sigma < 0:
            raise ValueError("rcs_noise_sigma must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    surfaces: tuple[Surface, ...]
    extent: float = 30.0

    def __post_init__(self):
        if not self.surfaces:
            raise ValueError("a scene needs at least one surface")
        object.__setattr__(self, "surfaces", tuple(self.surfaces))


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "line"             # line | arc
    speed: float = 1.0             # m/s
    duration: float = 10.0         # s
    scan_rate: float = 2.0         # Hz
    arc_radius: float = 10.0       # m, arc only

    def __post_init__(self):
        if self.kind not in ("line", "arc"):
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        if self.scan_rate <= 0:
            raise ValueError("scan_rate must be positive")


def _orthobasis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    u = np.cross(axis, helper)
    u /= np.linalg.norm(u)
    return u, np.cross(axis, u)


def generate_trajectory(spec: TrajectorySpec) -> list[tuple[Pose, np.ndarray]]:
    """Poses sampled at scan_rate with analytic sensor-frame ego-velocity."""
    n = int(round(spec.duration * spec.scan_rate))
    out = []
    for k in range(n):
        t = k / spec.scan_rate
        if spec.kind == "line":
            pose = Pose(t=np.array([spec.speed * t, 0.0, 0.0]))
            ego = np.array([spec.speed, 0.0, 0.0])
        else:
            omega = spec.speed / spec.arc_radius
            yaw = omega * t
            pos = spec.arc_radius * np.array([math.sin(yaw), 1.0 - math.cos(yaw), 0.0])
            pose = Pose(quat_from_rotvec(np.array([0.0, 0.0, yaw])), pos)
            v_world = spec.speed * np.array([math.cos(yaw), math.sin(yaw), 0.0])
            ego = pose.rotation_matrix().T @ v_world
        out.append((pose, ego))
    return out


def _sample_surface(surface: Surface, rng: np.random.Generator) -> np.ndarray:
    if surface.kind == "plane":
        u, v = _orthobasis(surface.axis)
        a = rng.uniform(-surface.half_extents[0], surface.half_extents[0])
        b = rng.uniform(-surface.half_extents[1], surface.half_extents[1])
        return surface.center + a * u + b * v
    if surface.kind == "sphere":
        d = rng.normal(size=3)
        n = np.linalg.norm(d)
        while n < 1e-12:
            d = rng.normal(size=3)
            n = np.linalg.norm(d)
        return surface.center + surface.radius * d / n
    u, v = _orthobasis(surface.axis)
    theta = rng.uniform(0.0, 2.0 * math.pi)
    h = rng.uniform(-surface.half_extents[0], surface.half_extents[0])
    return (surface.center + h * surface.axis
            + surface.radius * (math.cos(theta) * u + math.sin(theta) * v))


def planted_rcs(surface: Surface, point_world, sensor_pose: Pose) -> float:
    """Noise-free planted RCS at the model-convention incidence direction."""
    rot = sensor_pose.rotation_matrix()
    v = rot.T @ (np.asarray(point_world, dtype=np.float64) - surface.center)
    n = float(np.linalg.norm(v))
    if n < 1e-9:
        return float(surface.rcs_field[0] * eval_sh_basis([-1.0, 0.0, 0.0])[0])
    u = v / n
    if u[0] > 0.0:
        u = -u
    return float(surface.rcs_field @ eval_sh_basis(u))


def render_scan(scene: SceneSpec, pose: Pose, ego_velocity, n_points: int,
                dynamic_fraction: float = 0.0, seed: int = 0,
                sigma_pos: float = 0.02, sigma_doppler: float = 0.05,
                timestamp: float = 0.0) -> tuple[Scan, np.ndarray]:
    """One radar scan plus per-point dynamic labels.

    Points are rejection-sampled from the scene surfaces until n_points
    fall inside the forward field of view. Static Doppler follows
    d = -(p/|p|) . ego_velocity; dynamic points get an extra radial
    offset of 1 to 3 m/s with random sign.
    """
    rng = np.random.default_rng(seed)
    ego = np.asarray(ego_velocity, dtype=np.float64).reshape(3)
    rot = pose.rotation_matrix()
    cos_fov = math.cos(FOV_HALF_ANGLE)
    positions, dopplers, rcs_vals, dynamic = [], [], [], []
    attempts = 0
    max_attempts = 1000 * max(n_points, 1)
    while len(positions) < n_points and attempts < max_attempts:
        attempts += 1
        surface = scene.surfaces[int(rng.integers(len(scene.surfaces)))]
        p_world = _sample_surface(surface, rng) + rng.normal(0.0, sigma_pos, size=3)
        p_sensor = rot.T @ (p_world - pose.t)
        rng_norm = float(np.linalg.norm(p_sensor))
        if rng_norm < MIN_RANGE or p_sensor[0] / rng_norm < cos_fov:
            continue
        value = planted_rcs(surface, p_world, pose) \
            + rng.normal(0.0, surface.rcs_noise_sigma)
        dop = float(-(p_sensor / rng_norm) @ ego) + rng.normal(0.0, sigma_doppler)
        is_dynamic = rng.uniform() < dynamic_fraction
        if is_dynamic:
            dop += float(2 * rng.integers(2) - 1) * rng.uniform(1.0, 3.0)
        positions.append(p_sensor)
        dopplers.append(dop)
        rcs_vals.append(value)
        dynamic.append(is_dynamic)
    if not positions:
        raise EmptyScanError("no surface sample fell inside the field of view")
    scan = Scan(np.array(positions), np.array(dopplers), np.array(rcs_vals), timestamp)
    return scan, np.array(dynamic, dtype=bool)


def render_sequence(scene: SceneSpec, trajectory, n_points: int,
                    dynamic_fraction: float = 0.0, seed: int = 0,
                    sigma_pos: float = 0.02, sigma_doppler: float = 0.05):
    """Scans along a trajectory; per-scan seeds derive from the master seed."""
    scans, labels = [], []
    for k, (pose, ego) in enumerate(trajectory):
        scan_seed = int(np.random.SeedSequence([seed, k]).generate_state(1)[0])
        scan, lab = render_scan(scene, pose, ego, n_points, dynamic_fraction,
                                scan_seed, sigma_pos, sigma_doppler,
                                timestamp=k / 1.0)
        scans.append(scan)
        labels.append(lab)
    return scans, labels


# ---------------------------------------------------------------------------
# scene presets
# ---------------------------------------------------------------------------

def _field(seed: int, strength: float = 1.5, degree: int = 3) -> np.ndarray:
    """Deterministic planted coefficient vector, tapering with degree."""
    rng = np.random.default_rng(seed)
    coeffs = np.zeros(N_SH)
    for l in range(degree + 1):
        for m in range(-l, l + 1):
            coeffs[l * l + l + m] = rng.normal(0.0, strength / (1.0 + l))
    return coeffs


def demo_scene() -> SceneSpec:
    """Box-room layout: floor, two walls, a sphere and a cylinder."""
    return SceneSpec(surfaces=(
        Surface("plane", center=[10.0, 0.0, -1.0], axis=[0.0, 0.0, 1.0],
                half_extents=(8.0, 4.0), rcs_field=_field(11), rcs_noise_sigma=0.5),
        Surface("plane", center=[10.0, 4.0, 0.5], axis=[0.0, 1.0, 0.0],
                half_extents=(8.0, 1.5), rcs_field=_field(12), rcs_noise_sigma=0.5),
        Surface("plane", center=[10.0, -4.0, 0.5], axis=[0.0, 1.0, 0.0],
                half_extents=(8.0, 1.5), rcs_field=_field(13), rcs_noise_sigma=0.5),
        Surface("sphere", center=[8.0, 1.5, 0.3], radius=0.8,
                rcs_field=_field(14), rcs_noise_sigma=0.5),
        Surface("cylinder", center=[12.0, -1.5, 0.0], axis=[0.0, 0.0, 1.0],
                radius=0.5, half_extents=(1.2, 0.0),
                rcs_field=_field(15), rcs_noise_sigma=0.5),
    ), extent=20.0)


def corridor_scene(length: float = 30.0, rcs_noise_sigma: float = 0.1) -> SceneSpec:
    """Long corridor of planes: strong view-dependent RCS, weak geometry."""
    half = length / 2.0
    return SceneSpec(surfaces=(
        Surface("plane", center=[half, 3.0, 0.5], axis=[0.0, 1.0, 0.0],
                half_extents=(half, 1.5), rcs_field=_field(21, strength=2.5),
                rcs_noise_sigma=rcs_noise_sigma),
        Surface("plane", center=[half, -3.0, 0.5], axis=[0.0, 1.0, 0.0],
                half_extents=(half, 1.5), rcs_field=_field(22, strength=2.5),
                rcs_noise_sigma=rcs_noise_sigma),
        Surface("plane", center=[half, 0.0, -1.0], axis=[0.0, 0.0, 1.0],
                half_extents=(half, 3.0), rcs_field=_field(23, strength=2.5),
                rcs_noise_sigma=rcs_noise_sigma),
    ), extent=length + 5.0)


SCENES = {"demo": demo_scene, "corridor": corridor_scene}
