import pytest

from rcsmatch import kernels


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    # JIT-compile (or load from cache) before anything timed runs
    kernels.warmup()
