"""Gaussian-RCS scene models and RCS-enhanced SE(3) scan matching for
4D radar point clouds."""

from .backend import active_backend, set_backend
from .bench import SweepSummary, TrialRecord, perturb_pose, run_sweep, summarize
from .doppler import (
    DopplerRansacParams,
    EgoVelocityError,
    EgoVelocityEstimate,
    estimate_ego_velocity,
    filter_dynamic,
)
from .geometry import (
    DegenerateRotationError,
    Pose,
    RadarPoint,
    Scan,
    Twist,
    compose,
    inverse,
    pose_error,
    se3_exp,
    se3_log,
    transform_point,
    transform_points,
)
from .matcher import (
    MatchFailedError,
    MatchParams,
    MatchResult,
    NoCorrespondenceError,
    NormalSystem,
    accumulate_system,
    associate,
    geometric_residual,
    match,
    rcs_residual,
)
from .model import (
    BuildConfig,
    EmptyModelError,
    Gaussian,
    GaussianModel,
    RcsStats,
    build_model,
    fit_gaussian,
    fit_sh_coefficients,
    load_model,
    merge_scans,
    rcs_statistics,
    save_model,
    voxel_partition,
)
from .shbasis import (
    DegenerateDirectionError,
    IncidenceDirection,
    eval_sh_basis,
    eval_sh_basis_many,
    incidence_direction,
    predict_rcs,
    sh_basis_gradient,
    sh_index,
)
from .synth import (
    EmptyScanError,
    SceneSpec,
    Surface,
    TrajectorySpec,
    corridor_scene,
    demo_scene,
    generate_trajectory,
    planted_rcs,
    render_scan,
    render_sequence,
)

__version__ = "0.1.0"
