"""Gauss-Newton SE(3) registration against a Gaussian-RCS model.

The cost blends a squared-Mahalanobis point-to-Gaussian term with a
Cauchy-robustified RCS prediction error, each averaged over its own
contributing point count and mixed by w_rcs. The RCS block drives only
rotation: its translation rows/columns of the normal system are forced
to a scaled identity with zero gradient, so at w_rcs = 1 the solved
update has exactly zero translation.

State updates use a decoupled retraction (R <- exp(phi) R, t <- t + rho)
rather than a full SE(3) group update: a pure-rotation step must leave
the translation bit-identical, which exp(xi) o T would not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .geometry import Pose, Scan, Twist, quat_from_rotvec, quat_mul, skew, transform_point
from .model import Gaussian, GaussianModel
from .shbasis import (
    DegenerateDirectionError,
    eval_sh_basis,
    incidence_direction,
    sh_basis_gradient,
)


class NoCorrespondenceError(RuntimeError):
    """No scan point associated with any model Gaussian."""


class MatchFailedError(RuntimeError):
    """Registration could not produce a pose."""


@dataclass(frozen=True)
class MatchParams:
    w_rcs: float = 0.0
    max_iterations: int = 50
    convergence_eps: float = 1e-6
    cauchy_c: float = 1.0
    association_radius: float | None = None  # default: 2 x model voxel size
    lm_lambda_init: float = 1e-4
    lm_lambda_max: float = 1e4
    # identity forcing of the RCS translation block happens after the
    # w/N scaling (diagonal contribution exactly w_rcs); set True to force
    # before scaling instead (contribution w_rcs / N_rcs).
    rcs_identity_before_scaling: bool = False

    def __post_init__(self):
        if not 0.0 <= self.w_rcs <= 1.0:
            raise ValueError("w_rcs must lie in [0, 1]")
        positives = dict(max_iterations=self.max_iterations,
                         convergence_eps=self.convergence_eps,
                         cauchy_c=self.cauchy_c,
                         lm_lambda_init=self.lm_lambda_init,
                         lm_lambda_max=self.lm_lambda_max)
        if self.association_radius is not None:
            positives["association_radius"] = self.association_radius
        for name, value in positives.items():
            if value <= 0:
                raise ValueError(f"{name} must be positive")

    def radius_for(self, model: GaussianModel) -> float:
        if self.association_radius is not None:
            return self.association_radius
        return 2.0 * model.voxel_size


@dataclass(frozen=True)
class NormalSystem:
    H: np.ndarray        # (6, 6), [rho, phi] ordering
    g: np.ndarray        # (6,)
    cost: float
    n_geo: int
    n_rcs: int
    geo_sq_sum: float    # sum of squared Mahalanobis distances
    rcs_sq_sum: float    # sum of squared RCS residuals (pre-Cauchy)


@dataclass(frozen=True)
class MatchResult:
    pose: Pose
    converged: bool
    iterations: int
    final_cost: float
    geo_rms: float
    rcs_rms: float


def retract(delta: Twist, pose: Pose) -> Pose:
    """Apply an update: rotation left-multiplied, translation added."""
    return Pose(quat_mul(quat_from_rotvec(delta.phi), pose.q), pose.t + delta.rho)


# ---------------------------------------------------------------------------
# per-point reference residuals (the kernels replicate these in batch)
# ---------------------------------------------------------------------------

def associate(point_world, model: GaussianModel, radius: float) -> int | None:
    """Index of the nearest Gaussian within radius, searching the point's
    voxel cell and its 26 neighbors; exact ties go to the lowest index."""
    p = np.asarray(point_world, dtype=np.float64).reshape(3)
    cell = np.floor(p / model.voxel_size).astype(int)
    best = math.inf
    best_idx = -1
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            for dk in (-1, 0, 1):
                key = (int(cell[0]) + di, int(cell[1]) + dj, int(cell[2]) + dk)
                for g in model.spatial_index.get(key, ()):
                    diff = p - model.gaussians[g].mean
                    d2 = float(diff @ diff)
                    if d2 < best or (d2 == best and g < best_idx):
                        best = d2
                        best_idx = g
    if best_idx >= 0 and best <= radius * radius:
        return best_idx
    return None


def geometric_residual(point, gaussian: Gaussian, pose: Pose):
    """Squared Mahalanobis residual with its gradient/Hessian contribution.

    Jacobian of e = R p + t - mu under the decoupled retraction:
    de/drho = I, de/dphi = -[R p]_x.
    """
    a = np.asarray(point.position if hasattr(point, "position") else point)
    a = pose.rotation_matrix() @ a
    e = a + pose.t - gaussian.mean
    m = np.linalg.inv(gaussian.covariance)
    me = m @ e
    j = np.hstack([np.eye(3), -skew(a)])
    return float(e @ me), j.T @ me, j.T @ m @ j


def _rcs_residual_parts(point, gaussian: Gaussian, pose: Pose):
    """(residual, 6-vector Jacobian, incidence) or None for skipped points.

    None means the point is an RCS outlier under the Gaussian's interval
    or its incidence direction is degenerate. The flip sign is held fixed
    within the evaluation and translation components are forced to zero.
    """
    y = (point.rcs - gaussian.rcs_median) / gaussian.rcs_scale
    if abs(y) > 1.0:
        return None
    p_world = transform_point(pose, point.position)
    try:
        inc = incidence_direction(p_world, gaussian.mean, pose)
    except DegenerateDirectionError:
        return None
    r = float(gaussian.sh_coeffs @ eval_sh_basis(inc.dir)) - y
    rot = pose.rotation_matrix()
    w = pose.t - gaussian.mean
    v_norm = float(np.linalg.norm(point.position + rot.T @ w))
    sign = -1.0 if inc.flipped else 1.0
    cg = gaussian.sh_coeffs @ sh_basis_gradient(inc.dir)
    j_phi = (sign / v_norm) * cg @ (rot.T @ skew(w))
    return r, np.concatenate([np.zeros(3), j_phi]), inc


def rcs_residual(point, gaussian: Gaussian, pose: Pose, cauchy_c: float):
    """Cauchy-weighted RCS contribution, or None for outliers/degenerate."""
    parts = _rcs_residual_parts(point, gaussian, pose)
    if parts is None:
        return None
    r, j, _ = parts
    c2 = cauchy_c * cauchy_c
    w = 1.0 / (1.0 + r * r / c2)
    return c2 * math.log1p(r * r / c2), w * r * j, w * np.outer(j, j)


# ---------------------------------------------------------------------------
# system assembly and the optimization loop
# ---------------------------------------------------------------------------

def _symmetrize(h: np.ndarray) -> np.ndarray:
    return np.triu(h) + np.triu(h, 1).T


def accumulate_system(scan: Scan, model: GaussianModel, pose: Pose,
                      params: MatchParams) -> NormalSystem:
    """One linearization of the combined cost at the given pose.

    Each side is scaled by its own contributing point count; when w_rcs
    is 0 or no RCS residual survives, the geometric weight becomes 1.
    """
    packed = model.packed()
    radius = params.radius_for(model)
    rot = pose.rotation_matrix()
    pts_world = scan.positions @ rot.T + pose.t
    assoc = kernels.associate_many(pts_world, model.voxel_size, radius,
                                   packed.means, packed.cell_codes,
                                   packed.cell_starts, packed.cell_members)
    with_rcs = params.w_rcs > 0.0
    (h_geo, g_geo, geo_sq, n_geo, h_rot, g_rot,
     rcs_rho, rcs_sq, n_rcs) = kernels.accumulate_terms(
        scan.positions, scan.rcs, assoc, rot, pose.t,
        packed.means, packed.inv_covs, packed.medians, packed.scales,
        packed.coeffs, params.cauchy_c, with_rcs)
    if n_geo == 0:
        raise NoCorrespondenceError("no point within association radius")

    w = params.w_rcs
    if not with_rcs or n_rcs == 0:
        h = h_geo / n_geo
        g = g_geo / n_geo
        cost = 0.5 * geo_sq / n_geo
        n_rcs = 0
    else:
        h = (1.0 - w) / n_geo * h_geo
        g = (1.0 - w) / n_geo * g_geo
        cost = (1.0 - w) / n_geo * 0.5 * geo_sq + w / n_rcs * 0.5 * rcs_rho
        h[3:, 3:] += w / n_rcs * h_rot
        g[3:] += w / n_rcs * g_rot
        trans_diag = w / n_rcs if params.rcs_identity_before_scaling else w
        h[0, 0] += trans_diag
        h[1, 1] += trans_diag
        h[2, 2] += trans_diag
    return NormalSystem(_symmetrize(h), g, float(cost), int(n_geo), int(n_rcs),
                        float(geo_sq), float(rcs_sq))


def _solve_step(system: NormalSystem, lam: float) -> np.ndarray | None:
    a = system.H + lam * np.diag(np.diag(system.H))
    try:
        delta = np.linalg.solve(a, -system.g)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(delta)):
        return None
    return delta


def match(scan: Scan, model: GaussianModel, initial: Pose,
          params: MatchParams = MatchParams(), on_step=None) -> MatchResult:
    """Levenberg-damped Gauss-Newton registration.

    Steps are accepted only when they reduce the combined cost; rejected
    steps raise the damping until lm_lambda_max. Associations (and flip
    signs) are recomputed every linearization. on_step, when given, is
    called with (iteration, delta_twist, cost) after every solve.
    """
    pose = initial
    try:
        system = accumulate_system(scan, model, pose, params)
    except NoCorrespondenceError as exc:
        raise MatchFailedError(str(exc)) from exc
    lam = params.lm_lambda_init
    converged = False
    iterations = 0
    for iterations in range(1, params.max_iterations + 1):
        delta = _solve_step(system, lam)
        if delta is None:
            lam *= 10.0
            if lam > params.lm_lambda_max:
                raise MatchFailedError("normal system singular despite damping")
            continue
        step = Twist.from_vec(delta)
        if on_step is not None:
            on_step(iterations, step, system.cost)
        if float(np.linalg.norm(delta)) < params.convergence_eps:
            converged = True
            break
        candidate = retract(step, pose)
        try:
            cand_system = accumulate_system(scan, model, candidate, params)
        except NoCorrespondenceError:
            cand_system = None
        if cand_system is not None and cand_system.cost < system.cost:
            pose = candidate
            system = cand_system
            lam /= 10.0
        else:
            lam *= 10.0
            if lam > params.lm_lambda_max:
                break
    geo_rms = math.sqrt(system.geo_sq_sum / system.n_geo) if system.n_geo else 0.0
    rcs_rms = math.sqrt(system.rcs_sq_sum / system.n_rcs) if system.n_rcs else 0.0
    return MatchResult(pose=pose, converged=converged, iterations=iterations,
                       final_cost=system.cost, geo_rms=geo_rms, rcs_rms=rcs_rms)
