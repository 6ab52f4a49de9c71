"""Dilated inception temporal convolution."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import ConfigError, LengthError
from .nn import Module


def branch_channels(widths: Sequence[int], total: int) -> list[int]:
    """Split ``total`` channels over branches; leftovers go to the narrowest filters."""
    n = len(widths)
    base, extra = divmod(total, n)
    if base == 0:
        raise ConfigError(f"{total} channels cannot feed {n} branches")
    order = np.argsort(widths, kind="stable")
    counts = [base] * n
    for i in order[:extra]:
        counts[i] += 1
    return counts


def receptive_field(max_width: int, dilations: Sequence[int]) -> int:
    return 1 + sum((max_width - 1) * r for r in dilations)


def default_dilations(num_blocks: int) -> list[int]:
    return [2 ** b for b in range(num_blocks)]


def di_tcn(x: Tensor, filters: Sequence[Tensor], biases: Sequence[Tensor | None],
           dilation: int) -> Tensor:
    """Parallel dilated convolutions over the last axis of ``(..., C_in, T)``.

    Branch outputs are trimmed to the widest branch's length by keeping their
    trailing steps, then concatenated along the channel axis.
    """
    widest = max(f.shape[2] for f in filters)
    t = x.shape[-1]
    need = (widest - 1) * dilation + 1
    if t < need:
        raise LengthError(f"DI-TCN input length {t} shorter than receptive field {need}",
                          required=need)
    t_out = t - (widest - 1) * dilation
    outs = []
    for f, b in zip(filters, biases):
        y = dc.conv1d_dilated(x, f, dilation)
        if y.shape[-1] != t_out:
            y = y[..., y.shape[-1] - t_out:]
        if b is not None:
            y = y + b.reshape((-1, 1))
        outs.append(y)
    assert all(o.shape[-1] == t_out for o in outs)
    return dc.concat(outs, axis=-2)


class DilatedInception(Module):
    def __init__(self, in_channels: int, out_channels: int, rng: np.random.Generator,
                 max_width: int = 7, dilation: int = 1):
        super().__init__()
        if max_width < 2:
            raise ConfigError(f"largest filter width must be >= 2, got {max_width}")
        self.widths = list(range(2, max_width + 1))
        self.channels = branch_channels(self.widths, out_channels)
        self.dilation = dilation
        for d, c in zip(self.widths, self.channels):
            bound = 1.0 / np.sqrt(in_channels * d)
            self.add_parameter(f"filter{d}", rng.uniform(-bound, bound, size=(c, in_channels, d)))
            self.add_parameter(f"bias{d}", np.zeros(c))

    @property
    def trim(self) -> int:
        return (max(self.widths) - 1) * self.dilation

    def __call__(self, x: Tensor) -> Tensor:
        filters = [self._params[f"filter{d}"] for d in self.widths]
        biases = [self._params[f"bias{d}"] for d in self.widths]
        return di_tcn(x, filters, biases, self.dilation)
