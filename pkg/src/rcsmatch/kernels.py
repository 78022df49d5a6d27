"""Dispatch layer over the numba / numpy kernel twins."""

from __future__ import annotations

import numpy as np

from . import backend
from . import _kernels_numpy as _numpy_impl

_numba_impl = None

CELL_OFFSET = 1 << 20  # cell coordinates must satisfy |c| < 2**20


def _impl():
    global _numba_impl
    if backend.active_backend() == "numba":
        if _numba_impl is None:
            from . import _kernels_numba
            _numba_impl = _kernels_numba
        return _numba_impl
    return _numpy_impl


def encode_cells(cells: np.ndarray) -> np.ndarray:
    """Pack (N, 3) int64 cell coordinates into sortable int64 codes."""
    cells = np.asarray(cells, dtype=np.int64)
    if np.any(np.abs(cells) >= CELL_OFFSET):
        raise ValueError("cell coordinate exceeds the 2**20 hash range")
    shifted = cells + CELL_OFFSET
    return (shifted[..., 0] << 42) | (shifted[..., 1] << 21) | shifted[..., 2]


def sh_basis_many(dirs: np.ndarray) -> np.ndarray:
    return _impl().sh_basis_many(np.ascontiguousarray(dirs, dtype=np.float64))


def sh_basis_gradient_many(dirs: np.ndarray) -> np.ndarray:
    return _impl().sh_basis_gradient_many(np.ascontiguousarray(dirs, dtype=np.float64))


def associate_many(pts, voxel, radius, means, cell_codes, cell_starts, cell_members):
    return _impl().associate_many(
        np.ascontiguousarray(pts, dtype=np.float64), float(voxel), float(radius),
        means, cell_codes, cell_starts, cell_members)


def accumulate_terms(pts, rcs, assoc, R, t, means, inv_covs, medians, scales,
                     coeffs, cauchy_c, with_rcs):
    return _impl().accumulate_terms(
        np.ascontiguousarray(pts, dtype=np.float64),
        np.ascontiguousarray(rcs, dtype=np.float64),
        assoc, np.ascontiguousarray(R), np.ascontiguousarray(t),
        means, inv_covs, medians, scales, coeffs,
        float(cauchy_c), bool(with_rcs))


def warmup() -> None:
    """Force JIT compilation of every kernel on a tiny problem."""
    dirs = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    sh_basis_many(dirs)
    sh_basis_gradient_many(dirs)
    means = np.array([[0.0, 0.0, 0.0]])
    codes = encode_cells(np.array([[0, 0, 0]]))
    starts = np.array([0, 1], dtype=np.int64)
    members = np.array([0], dtype=np.int64)
    pts = np.array([[0.5, 0.0, 0.0]])
    assoc = associate_many(pts, 1.0, 2.0, means, codes, starts, members)
    accumulate_terms(pts, np.array([0.0]), assoc, np.eye(3), np.zeros(3),
                     means, np.eye(3)[None], np.zeros(1), np.ones(1),
                     np.zeros((1, 16)), 1.0, True)
