import os

# keep BLAS/OMP pools from fighting over cores; results are unaffected
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("GOMP_SPINCOUNT", "0")

import numpy as np
import pytest

from rwkvsr.tensor import Tensor


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def grid_tensor(shape, seed, scale=1.0):
    """Values on a coarse dyadic grid: float32 arithmetic on them is exact."""
    r = np.random.default_rng(seed)
    return Tensor(np.round(r.uniform(-2, 2, shape) * 64) / 64 * scale)


def signs(shape, seed):
    return Tensor(np.random.default_rng(seed).choice([-1.0, 1.0], size=shape))


@pytest.fixture(scope="session")
def toyset_dir(tmp_path_factory):
    from rwkvsr.toyset import generate_toyset

    path = tmp_path_factory.mktemp("toyset")
    generate_toyset(str(path), n=16, size=256, seed=0)
    return str(path)
