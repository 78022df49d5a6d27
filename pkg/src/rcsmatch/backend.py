"""Numerical backend selection.

Hot kernels ship in two flavors: numba @njit loops and vectorized numpy.
The default is numba when importable; set RCSMATCH_BACKEND=numpy to force
the fallback (or =numba to insist, raising if numba is missing). Tests and
benchmarks may switch at runtime via set_backend().
"""

from __future__ import annotations

import os

try:
    import numba  # noqa: F401
    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False

_VALID = ("numba", "numpy")


def _default_backend() -> str:
    env = os.environ.get("RCSMATCH_BACKEND", "").strip().lower()
    if env:
        if env not in _VALID:
            raise ValueError(f"RCSMATCH_BACKEND must be one of {_VALID}, got {env!r}")
        if env == "numba" and not NUMBA_AVAILABLE:
            raise ImportError("RCSMATCH_BACKEND=numba but numba is not importable")
        return env
    return "numba" if NUMBA_AVAILABLE else "numpy"


_backend = _default_backend()


def active_backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}, got {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise ImportError("numba backend requested but numba is not importable")
    _backend = name
