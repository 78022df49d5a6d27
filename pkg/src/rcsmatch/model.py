"""Gaussian-RCS scene model construction.

Scans are merged under known poses, partitioned into a uniform voxel
grid, and each sufficiently populated cell yields one Gaussian carrying
sample mean/covariance plus a normalized-RCS spherical-harmonic fit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .geometry import Pose, Scan, transform_points
from .shbasis import N_SH, DegenerateDirectionError, incidence_direction

# Keeps covariances of fully degenerate clusters strictly positive definite;
# the relative eigen_floor alone maps a zero matrix to zero.
EIGEN_ABS_FLOOR = 1e-9
# Below this the median-to-extreme scale is treated as degenerate.
SCALE_EPS = 1e-6


class EmptyModelError(RuntimeError):
    """No voxel cell produced a Gaussian."""


class ModelFormatError(ValueError):
    """Model file malformed or of an unknown version."""


@dataclass(frozen=True)
class BuildConfig:
    voxel_size: float = 1.0
    min_points_per_gaussian: int = 10
    max_degree: int = 3
    eigen_floor: float = 1e-3


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray          # (3,) world, m
    covariance: np.ndarray    # (3, 3) SPD, m^2
    point_count: int
    rcs_median: float         # dBsm
    rcs_scale: float          # dBsm, > 0
    sh_coeffs: np.ndarray     # (16,) normalized-RCS SH coefficients
    fitted_degree: int


@dataclass(frozen=True)
class RcsStats:
    median: float
    scale: float
    inlier_mask: np.ndarray   # (N,) bool over the raw sequence
    normalized: np.ndarray    # inlier values mapped into [-1, 1]


@dataclass
class ModelArrays:
    """Flat, kernel-friendly view of a GaussianModel."""

    means: np.ndarray         # (G, 3)
    inv_covs: np.ndarray      # (G, 3, 3)
    medians: np.ndarray       # (G,)
    scales: np.ndarray        # (G,)
    coeffs: np.ndarray        # (G, 16)
    cell_codes: np.ndarray    # (C,) sorted int64
    cell_starts: np.ndarray   # (C + 1,) CSR offsets
    cell_members: np.ndarray  # (G,) Gaussian indices grouped by cell


@dataclass
class GaussianModel:
    gaussians: list[Gaussian]
    voxel_size: float
    spatial_index: dict[tuple[int, int, int], list[int]] = field(default_factory=dict)
    _packed: ModelArrays | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if self.voxel_size <= 0:
            raise ValueError("voxel_size must be positive")
        if not self.spatial_index:
            self.spatial_index = _index_from_means(
                np.array([g.mean for g in self.gaussians]), self.voxel_size)

    def __len__(self) -> int:
        return len(self.gaussians)

    def packed(self) -> ModelArrays:
        if self._packed is None:
            means = np.ascontiguousarray([g.mean for g in self.gaussians])
            covs = np.ascontiguousarray([g.covariance for g in self.gaussians])
            cells = np.floor(means / self.voxel_size).astype(np.int64)
            codes = kernels.encode_cells(cells)
            order = np.argsort(codes, kind="stable")
            sorted_codes = codes[order]
            unique_codes, starts = np.unique(sorted_codes, return_index=True)
            starts = np.append(starts, len(order)).astype(np.int64)
            self._packed = ModelArrays(
                means=means,
                inv_covs=np.ascontiguousarray(np.linalg.inv(covs)),
                medians=np.array([g.rcs_median for g in self.gaussians]),
                scales=np.array([g.rcs_scale for g in self.gaussians]),
                coeffs=np.ascontiguousarray([g.sh_coeffs for g in self.gaussians]),
                cell_codes=unique_codes,
                cell_starts=starts,
                cell_members=order.astype(np.int64),
            )
        return self._packed


def _index_from_means(means: np.ndarray, voxel_size: float) -> dict:
    index: dict[tuple[int, int, int], list[int]] = {}
    for i, m in enumerate(np.atleast_2d(means)):
        if m.shape[-1] != 3:
            break
        cell = tuple(int(c) for c in np.floor(m / voxel_size))
        index.setdefault(cell, []).append(i)
    return index


# ---------------------------------------------------------------------------
# pipeline stages
# ---------------------------------------------------------------------------

def merge_scans(scans, poses) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World-frame fusion of scans under known poses.

    Returns (points_world (M, 3), rcs (M,), pose_index (M,)); the pose
    index remembers each point's originating sensor pose, which the SH
    fit later needs to recover sensor-frame incidence directions.
    """
    scans = list(scans)
    poses = list(poses)
    if len(scans) != len(poses):
        raise ValueError(f"{len(scans)} scans vs {len(poses)} poses")
    pts, rcs, src = [], [], []
    for i, (scan, pose) in enumerate(zip(scans, poses)):
        pts.append(transform_points(pose, scan.positions))
        rcs.append(scan.rcs)
        src.append(np.full(len(scan), i, dtype=np.int64))
    if not pts:
        return np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64)
    return np.concatenate(pts), np.concatenate(rcs), np.concatenate(src)


def voxel_partition(points: np.ndarray, voxel_size: float) -> dict[tuple[int, int, int], np.ndarray]:
    """Map floor(p / voxel) cells to the point indices they contain."""
    if voxel_size <= 0:
        raise ValueError("voxel_size must be positive")
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    cells = np.floor(points / voxel_size).astype(np.int64)
    codes = kernels.encode_cells(cells)
    order = np.argsort(codes, kind="stable")
    sorted_codes = codes[order]
    unique_codes, starts = np.unique(sorted_codes, return_index=True)
    bounds = np.append(starts, len(order))
    out = {}
    for u, a, b in zip(unique_codes, bounds[:-1], bounds[1:]):
        members = order[a:b]
        cell = tuple(int(c) for c in cells[members[0]])
        out[cell] = members
    return out


def fit_gaussian(points: np.ndarray, eigen_floor: float = 1e-3) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and eigenvalue-floored sample covariance (ddof = 1)."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    n = len(points)
    if n < 2:
        raise ValueError("need at least 2 points for a covariance")
    mean = points.mean(axis=0)
    d = points - mean
    cov = d.T @ d / (n - 1)
    w, v = np.linalg.eigh(cov)
    floor = max(eigen_floor * float(w[-1]), EIGEN_ABS_FLOOR)
    w = np.maximum(w, floor)
    cov = (v * w) @ v.T
    return mean, 0.5 * (cov + cov.T)


def rcs_statistics(raw_rcs) -> RcsStats:
    """Median/scale normalization of raw RCS values into [-1, 1].

    The scale is the smaller of the median-to-minimum and median-to-maximum
    distances; values beyond it are outliers. A near-zero scale (constant
    input) degrades to scale 1 with everything kept.
    """
    values = np.asarray(raw_rcs, dtype=np.float64).reshape(-1)
    if len(values) == 0:
        raise ValueError("empty RCS sequence")
    m = float(np.median(values))
    s = float(min(m - values.min(), values.max() - m))
    if s < SCALE_EPS:
        mask = np.ones(len(values), dtype=bool)
        return RcsStats(m, 1.0, mask, values - m)
    mask = (values >= m - s) & (values <= m + s)
    return RcsStats(m, s, mask, (values[mask] - m) / s)


def fit_sh_coefficients(dirs, normalized_rcs, max_degree: int = 3) -> tuple[np.ndarray, int]:
    """Ridge least-squares SH fit of normalized RCS against directions.

    The degree is reduced until the coefficient count is at most half the
    sample count, so sparse Gaussians get low-order fits; unused higher-
    degree coefficients stay exactly zero.
    """
    d = np.asarray([getattr(x, "dir", x) for x in dirs], dtype=np.float64).reshape(-1, 3)
    y = np.asarray(normalized_rcs, dtype=np.float64).reshape(-1)
    n = len(y)
    if n == 0:
        raise ValueError("no samples to fit")
    if len(d) != n:
        raise ValueError("directions and targets not aligned")
    if not 0 <= max_degree <= 3:
        raise ValueError("max_degree must be in 0..3")
    degree = 0
    for cand in range(max_degree, -1, -1):
        if (cand + 1) ** 2 <= max(1.0, n / 2.0):
            degree = cand
            break
    k = (degree + 1) ** 2
    a = kernels.sh_basis_many(d)[:, :k]
    gram = a.T @ a + 1e-8 * np.eye(k)
    coeffs = np.zeros(N_SH)
    coeffs[:k] = np.linalg.solve(gram, a.T @ y)
    return coeffs, degree


def build_model(scans, poses, config: BuildConfig = BuildConfig()) -> GaussianModel:
    """Full pipeline: merge, partition, fit geometry + RCS per cell.

    RCS outliers and degenerate-direction points are excluded from the SH
    fit only; they still count toward the Gaussian's geometry and size.
    Cells are processed in sorted coordinate order so the output is
    independent of any upstream ordering.
    """
    poses = list(poses)
    points, rcs, src = merge_scans(scans, poses)
    cells = voxel_partition(points, config.voxel_size)
    gaussians = []
    for cell in sorted(cells):
        members = cells[cell]
        if len(members) < config.min_points_per_gaussian:
            continue
        cell_pts = points[members]
        mean, cov = fit_gaussian(cell_pts, config.eigen_floor)
        stats = rcs_statistics(rcs[members])
        dirs, targets = [], []
        for pt_idx, value in zip(members[stats.inlier_mask], stats.normalized):
            try:
                inc = incidence_direction(points[pt_idx], mean, poses[src[pt_idx]])
            except DegenerateDirectionError:
                continue
            dirs.append(inc.dir)
            targets.append(value)
        if dirs:
            coeffs, degree = fit_sh_coefficients(dirs, targets, config.max_degree)
        else:
            coeffs, degree = np.zeros(N_SH), 0
        gaussians.append(Gaussian(
            mean=mean, covariance=cov, point_count=len(members),
            rcs_median=stats.median, rcs_scale=stats.scale,
            sh_coeffs=coeffs, fitted_degree=degree))
    if not gaussians:
        raise EmptyModelError("no voxel cell reached min_points_per_gaussian")
    return GaussianModel(gaussians, config.voxel_size)


# ---------------------------------------------------------------------------
# serialization: line-oriented text, 17 significant digits (round-trip exact)
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_model(model: GaussianModel, path) -> None:
    lines = [f"gaussmodel v1 voxel={_fmt(model.voxel_size)}"]
    for g in model.gaussians:
        c = g.covariance
        fields = (
            [_fmt(v) for v in g.mean]
            + [_fmt(c[0, 0]), _fmt(c[0, 1]), _fmt(c[0, 2]),
               _fmt(c[1, 1]), _fmt(c[1, 2]), _fmt(c[2, 2])]
            + [str(g.point_count), _fmt(g.rcs_median), _fmt(g.rcs_scale),
               str(g.fitted_degree)]
            + [_fmt(v) for v in g.sh_coeffs]
        )
        lines.append(" ".join(fields))
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def load_model(path) -> GaussianModel:
    with open(path) as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines:
        raise ModelFormatError("empty model file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "gaussmodel" or header[1] != "v1" \
            or not header[2].startswith("voxel="):
        raise ModelFormatError(f"bad header: {lines[0]!r}")
    voxel = float(header[2][len("voxel="):])
    gaussians = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 29:
            raise ModelFormatError(f"expected 29 fields, got {len(parts)}")
        vals = [float(p) for p in parts]
        cu = vals[3:9]
        cov = np.array([[cu[0], cu[1], cu[2]],
                        [cu[1], cu[3], cu[4]],
                        [cu[2], cu[4], cu[5]]])
        gaussians.append(Gaussian(
            mean=np.array(vals[0:3]), covariance=cov,
            point_count=int(vals[9]), rcs_median=vals[10], rcs_scale=vals[11],
            sh_coeffs=np.array(vals[13:29]), fitted_degree=int(vals[12])))
    if not gaussians:
        raise EmptyModelError("model file contains no Gaussians")
    return GaussianModel(gaussians, voxel)
