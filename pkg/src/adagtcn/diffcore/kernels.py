"""Kernel backend selection.

The compiled extension is used when it was built and ``ADAGTCN_PURE_PYTHON``
is unset; otherwise the numpy fallback is used. Both expose the same three
functions and produce identical results up to float summation order.
"""
from __future__ import annotations

import os

from . import _fallback

BACKEND = "python"
_impl = _fallback

if not os.environ.get("ADAGTCN_PURE_PYTHON"):
    try:
        from . import _ckernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _fallback

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward
topk_rows = _impl.topk_rows

__all__ = ["BACKEND", "conv1d_forward", "conv1d_backward", "topk_rows"]
