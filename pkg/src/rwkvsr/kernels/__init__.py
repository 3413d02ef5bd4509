"""Kernel backend selection.

Two lanes implement the same contract: a Cython extension (`_core`) and a
pure-numpy fallback (`_numpy`). The compiled lane is preferred when the
extension imported successfully; set RWKVSR_KERNELS=numpy|compiled to force
a lane (forcing `compiled` raises if the extension is missing).
"""

import os

from . import _numpy

_choice = os.environ.get("RWKVSR_KERNELS", "auto")
if _choice not in ("auto", "compiled", "numpy"):
    raise ValueError(f"RWKVSR_KERNELS must be auto|compiled|numpy, got {_choice!r}")

_impl = None
if _choice in ("auto", "compiled"):
    try:
        from . import _core as _impl
    except ImportError:
        if _choice == "compiled":
            raise
if _impl is None:
    _impl = _numpy

BACKEND = _impl.NAME

wkv6_forward = _impl.wkv6_forward
wkv6_backward = _impl.wkv6_backward
dwconv2d_forward = _impl.dwconv2d_forward
dwconv2d_backward = _impl.dwconv2d_backward


def get_backend(name):
    """Return a specific lane module by name ('compiled' or 'numpy')."""
    if name == "numpy":
        return _numpy
    if name == "compiled":
        from . import _core

        return _core
    if name == "auto":
        return _impl
    raise ValueError(f"unknown kernel backend {name!r}")
