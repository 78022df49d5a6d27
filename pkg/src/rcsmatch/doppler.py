"""RANSAC + least-squares ego-velocity estimation from per-point Doppler.

A static return at bearing u seen from a sensor moving with velocity v
measures doppler d = -u . v, so three well-spread static points pin v.
Dynamic points violate the relation and are rejected as RANSAC outliers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import Scan


class EgoVelocityError(RuntimeError):
    """Doppler consensus below the configured minimum."""


@dataclass(frozen=True)
class DopplerRansacParams:
    iterations: int = 100
    inlier_threshold: float = 0.2   # m/s
    min_inlier_ratio: float = 0.3


@dataclass(frozen=True)
class EgoVelocityEstimate:
    velocity: np.ndarray      # (3,) m/s, sensor frame
    inlier_mask: np.ndarray   # (N,) bool
    inlier_ratio: float


def _bearings(scan: Scan) -> np.ndarray:
    p = scan.positions
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def estimate_ego_velocity(scan: Scan,
                          params: DopplerRansacParams = DopplerRansacParams(),
                          seed: int = 0) -> EgoVelocityEstimate:
    """RANSAC over 3-point bearing systems, then LSQ refit on the consensus.

    Raises EgoVelocityError when fewer than 3 points are available, the
    bearing matrix is rank deficient, or no candidate reaches
    min_inlier_ratio.
    """
    n = len(scan)
    if n < 3:
        raise EgoVelocityError(f"need at least 3 points, got {n}")
    u = _bearings(scan)
    if np.linalg.matrix_rank(u) < 3:
        raise EgoVelocityError("bearing matrix is rank deficient")
    d = scan.doppler

    rng = np.random.default_rng(seed)
    best_count = -1
    best_mask = None
    for _ in range(params.iterations):
        idx = rng.choice(n, size=3, replace=False)
        a = u[idx]
        if abs(np.linalg.det(a)) < 1e-6:
            continue
        v = np.linalg.solve(a, -d[idx])
        mask = np.abs(d + u @ v) < params.inlier_threshold
        count = int(np.count_nonzero(mask))
        if count > best_count:
            best_count = count
            best_mask = mask

    if best_mask is None or best_count / n < params.min_inlier_ratio:
        raise EgoVelocityError(
            f"no consensus: best inlier ratio {max(best_count, 0) / n:.3f} "
            f"< {params.min_inlier_ratio}")

    v_ref, *_ = np.linalg.lstsq(u[best_mask], -d[best_mask], rcond=None)
    mask = np.abs(d + u @ v_ref) < params.inlier_threshold
    return EgoVelocityEstimate(v_ref, mask, float(np.count_nonzero(mask)) / n)


def filter_dynamic(scan: Scan, est: EgoVelocityEstimate) -> Scan:
    """Keep only inlier (static) points, preserving order."""
    if len(est.inlier_mask) != len(scan):
        raise ValueError("inlier mask not aligned with scan")
    return scan.subset(est.inlier_mask)
