"""Linear-attention (RWKV) single-image super-resolution.

A NCHW float32 tensor engine with reverse-mode differentiation, the WKV
linear-attention recurrence (compiled core with a numpy fallback), the
residual spatial/channel-mixing blocks, and the training/evaluation/
benchmark surface around them.
"""

import os

# Thread-pool defaults, set before numpy loads its BLAS: a multi-threaded
# OpenBLAS spin-waits between the many small GEMMs of one step and starves
# the OpenMP kernels. Results do not depend on thread counts (all parallel
# reductions run in fixed order); these only affect speed. Override by
# exporting the variables before Python starts.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("GOMP_SPINCOUNT", "0")

from . import kernels
from .model import (
    ModelConfig,
    ModelState,
    build_model,
    forward,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import Param, Tape, Tensor, fd_grad_check

__version__ = "0.1.0"

__all__ = [
    "kernels",
    "ModelConfig",
    "ModelState",
    "build_model",
    "forward",
    "load_checkpoint",
    "save_checkpoint",
    "Param",
    "Tape",
    "Tensor",
    "fd_grad_check",
    "__version__",
]
