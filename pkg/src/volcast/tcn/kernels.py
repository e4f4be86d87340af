"""Backend selection for the convolution kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels``. ``VOLCAST_BACKEND=python`` forces the
fallback.
"""
import os

from . import _pykernels

if os.environ.get("VOLCAST_BACKEND", "").lower() == "python":
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward

__all__ = ["BACKEND", "conv1d_forward", "conv1d_backward"]
