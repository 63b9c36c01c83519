import os

# single-threaded BLAS: avoids thread-pool spin overhead on small matrices
# and keeps reductions deterministic across runs
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def central_difference(f, x, step=1e-5, indices=None):
    """Central finite-difference gradient of a scalar function of a vector.

    ``indices`` restricts probing to a coordinate subset (all by default).
    """
    x = np.asarray(x, dtype=np.float64)
    if indices is None:
        indices = range(x.size)
    grad = {}
    for i in indices:
        xp = x.copy()
        xm = x.copy()
        xp[i] += step
        xm[i] -= step
        grad[i] = (f(xp) - f(xm)) / (2.0 * step)
    return grad


def relative_error(a, b, floor=1e-6):
    return abs(a - b) / max(abs(a), abs(b), floor)
