"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with an identical
signature; ``kernels.py`` picks one at import time.
"""
from __future__ import annotations

import numpy as np


def conv1d_forward(x: np.ndarray, w: np.ndarray, dilation: int) -> np.ndarray:
    n, c_in, t = x.shape
    c_out, _, d = w.shape
    t_out = t - (d - 1) * dilation
    out = np.zeros((n, c_out, t_out))
    for s in range(d):
        start = s * dilation
        out += np.matmul(w[:, :, s], x[:, :, start:start + t_out])
    return out


def conv1d_backward(x: np.ndarray, w: np.ndarray, grad: np.ndarray,
                    dilation: int) -> tuple[np.ndarray, np.ndarray]:
    d = w.shape[2]
    t_out = grad.shape[2]
    gx = np.zeros_like(x)
    gw = np.empty_like(w)
    for s in range(d):
        start = s * dilation
        window = x[:, :, start:start + t_out]
        gx[:, :, start:start + t_out] += np.matmul(w[:, :, s].T, grad)
        gw[:, :, s] = np.tensordot(grad, window, axes=([0, 2], [0, 2]))
    return gx, gw


def topk_rows(scores: np.ndarray, k: int) -> np.ndarray:
    # stable sort on the negated scores keeps the lower column first among ties
    order = np.argsort(-scores, axis=1, kind="stable")[:, :k]
    mask = np.zeros_like(scores)
    np.put_along_axis(mask, order, 1.0, axis=1)
    return mask
