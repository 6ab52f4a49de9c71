"""Deep-neighborhood graph convolution with symmetric renormalisation."""
from __future__ import annotations

import warnings
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ConfigError, DimensionError, ParameterError
from .nn import Module, glorot

ACTIVATIONS = {"relu": dc.relu, "tanh": dc.tanh, "sigmoid": dc.sigmoid}


def normalize_adjacency(adj: Tensor, symmetrize: bool = True) -> Tensor:
    """D^-1/2 (A + I) D^-1/2 over the last two axes.

    Directed input is first symmetrised as max(A, A^T), which keeps every
    edge either direction selected.
    """
    adj = dc.as_tensor(adj)
    p = adj.shape[-1]
    if adj.ndim < 2 or adj.shape[-2] != p:
        raise DimensionError(f"adjacency must be square, got shape {adj.shape}")
    if np.any(adj.value < 0):
        raise ParameterError("adjacency entries must be non-negative")
    if symmetrize:
        adj = dc.maximum(adj, adj.swapaxes(-1, -2))
    a_hat = adj + Tensor(np.eye(p))
    d = a_hat.sum(axis=-1) ** -0.5
    lead = d.shape[:-1]
    return a_hat * d.reshape(lead + (p, 1)) * d.reshape(lead + (1, p))


def _propagate(a_hat: Tensor, h: Tensor) -> Tensor:
    # insert broadcast axes so one graph serves every timestep of its sample
    extra = h.ndim - a_hat.ndim
    if extra > 0:
        lead = a_hat.shape[:-2]
        a_hat = a_hat.reshape(lead + (1,) * extra + a_hat.shape[-2:])
    return a_hat @ h


def vanilla_gcn(h: Tensor, a_hat: Tensor, weight: Tensor, activation: str = "relu") -> Tensor:
    if h.shape[-2] != a_hat.shape[-1] or h.shape[-1] != weight.shape[0]:
        raise DimensionError(
            f"gcn shapes disagree: H {h.shape}, A_hat {a_hat.shape}, W {weight.shape}")
    return ACTIVATIONS[activation](_propagate(a_hat, h) @ weight)


def dn_gcn(h: Tensor, a_hat: Tensor, weights: Sequence[Tensor], betas: Sequence[float],
           selectors: Sequence[np.ndarray | None] | None = None,
           activation: str = "relu") -> Tensor:
    """sigma(sum_l beta_l * S^l (A_hat H^l W^l)) with H^{l+1} = A_hat H^l W^l.

    ``selectors[l]`` is a length-p 0/1 node gate (``None`` means all ones).
    Intermediate states carry no nonlinearity; sigma is applied once.
    """
    depth = len(weights)
    if depth < 1 or len(betas) != depth:
        raise ParameterError(f"need K >= 1 weights and matching betas, got {depth}/{len(betas)}")
    if selectors is None:
        selectors = [None] * depth
    if h.shape[-2] != a_hat.shape[-1]:
        raise DimensionError(f"H {h.shape} has a different node count than A_hat {a_hat.shape}")
    state = h
    total = None
    for w, beta, sel in zip(weights, betas, selectors):
        if state.shape[-1] != w.shape[0]:
            raise DimensionError(f"H {state.shape} cannot multiply W {w.shape}")
        z = _propagate(a_hat, state) @ w
        term = dc.scale(z, beta)
        if sel is not None:
            term = term * Tensor(np.asarray(sel, dtype=np.float64)[:, None])
        total = term if total is None else total + term
        state = z
    return ACTIVATIONS[activation](total)


def layer_norm(h: Tensor, gain: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    if h.shape[-1] < 2:
        raise DimensionError("layer norm needs at least 2 channels")
    centered = h - h.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    out = centered * (var + eps) ** -0.5
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def validate_betas(betas: Sequence[float]) -> None:
    if any(b < 0 for b in betas):
        raise ConfigError(f"depth coefficients must be non-negative, got {list(betas)}")
    if abs(sum(betas) - 1.0) > 1e-9:
        warnings.warn(f"depth coefficients {list(betas)} sum to {sum(betas):g}, not 1",
                      stacklevel=3)


class DnGcn(Module):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 betas: Sequence[float] = (0.5, 0.6),
                 selectors: Sequence[Sequence[float] | None] | None = None,
                 activation: str = "relu"):
        super().__init__()
        depth = len(betas)
        if depth < 1:
            raise ConfigError("DN-GCN depth K must be at least 1")
        validate_betas(betas)
        if selectors is None:
            selectors = [None] * depth
        if len(selectors) != depth:
            raise ConfigError(f"{len(selectors)} selectors for depth {depth}")
        last = selectors[-1]
        if last is not None and not np.any(last):
            raise ConfigError("the deepest selector must keep at least one node")
        if activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {activation!r}")
        self.betas = tuple(float(b) for b in betas)
        self.selectors = [None if s is None or np.all(np.asarray(s) == 1) else np.asarray(s, float)
                          for s in selectors]
        self.activation = activation
        for l in range(depth):
            fan_in = in_channels if l == 0 else out_channels
            self.add_parameter(f"w{l}", glorot(rng, fan_in, out_channels))

    @property
    def depth(self) -> int:
        return len(self.betas)

    def __call__(self, h: Tensor, a_hat: Tensor) -> Tensor:
        weights = [self._params[f"w{l}"] for l in range(self.depth)]
        return dn_gcn(h, a_hat, weights, self.betas, self.selectors, self.activation)


class LayerNorm(Module):
    def __init__(self, channels: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.add_parameter("gain", np.ones(channels))
        self.add_parameter("bias", np.zeros(channels))

    def __call__(self, h: Tensor) -> Tensor:
        return layer_norm(h, self.gain, self.bias, self.eps)
