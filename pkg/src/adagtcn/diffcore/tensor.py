"""Reverse-mode differentiation over dense float64 arrays.

Operations performed while a :class:`Tape` is active are appended to it in
execution order; ``Tape.backward`` walks that list in reverse. Outside a tape
nothing is recorded, which is how inference runs.

>>> with Tape() as tape:
...     x = Tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
...     loss = (x @ Tensor([[1.0], [1.0]])).sum()
...     tape.backward(loss)
>>> x.grad
array([[1., 1.],
       [1., 1.]])
"""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np

from ..errors import DimensionError, LengthError, ParameterError
from . import kernels

_local = threading.local()


def _stack() -> list["Tape"]:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class _Node:
    __slots__ = ("parents", "backward")

    def __init__(self, parents, backward):
        self.parents = parents
        self.backward = backward


class Tape:
    """Ordered record of differentiable operations.

    Tapes are thread-local: a tape entered on one thread never sees
    operations executed on another.
    """

    def __init__(self):
        self.nodes: list[_Node] = []

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def __len__(self) -> int:
        return len(self.nodes)

    def record(self, out: "Tensor", parents: tuple["Tensor", ...], backward) -> None:
        out.node_id = len(self.nodes)
        out._tape = self
        self.nodes.append(_Node(parents, backward))

    def backward(self, output: "Tensor", grad: np.ndarray | None = None) -> None:
        """Accumulate d(output)/d(leaf) into ``leaf.grad`` for every leaf
        with ``requires_grad`` that took part in recording.

        Leaves that were recorded but received no gradient get zeros.
        """
        if output._tape is not self:
            raise ValueError("output was not recorded on this tape")
        if grad is None:
            if output.value.size != 1:
                raise DimensionError(
                    f"backward() without an explicit gradient needs a scalar output, "
                    f"got shape {output.shape}")
            grad = np.ones_like(output.value)
        grads: dict[int, np.ndarray] = {output.node_id: np.asarray(grad, dtype=np.float64)}
        leaves: dict[int, Tensor] = {}
        for idx in range(output.node_id, -1, -1):
            g = grads.pop(idx, None)
            node = self.nodes[idx]
            if g is None:
                for p in node.parents:
                    if p.requires_grad and p._tape is None:
                        leaves.setdefault(id(p), p)
                continue
            parent_grads = node.backward(g)
            for p, pg in zip(node.parents, parent_grads):
                if p._tape is self:
                    if pg is not None:
                        prev = grads.get(p.node_id)
                        grads[p.node_id] = pg if prev is None else prev + pg
                elif p.requires_grad:
                    leaves.setdefault(id(p), p)
                    if pg is not None:
                        p.grad = pg.copy() if p.grad is None else p.grad + pg
        for leaf in leaves.values():
            if leaf.grad is None:
                leaf.grad = np.zeros_like(leaf.value)


class Tensor:
    """A float64 array that may participate in a recorded computation."""

    __slots__ = ("value", "requires_grad", "grad", "node_id", "_tape", "name")
    __array_priority__ = 100

    def __init__(self, value, requires_grad: bool = False, name: str | None = None):
        self.value = np.asarray(value, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.node_id: int | None = None
        self._tape: Tape | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def ndim(self) -> int:
        return self.value.ndim

    def numpy(self) -> np.ndarray:
        return self.value

    def item(self) -> float:
        return float(self.value.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, 1.0 / other)
        return mul(self, power(as_tensor(other), -1.0))

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None, keepdims: bool = False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return reduce_mean(self, axis, keepdims)

    def max(self, axis=None, keepdims: bool = False):
        return reduce_max(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int):
        return swapaxes(self, a, b)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.value)


def _result(value: np.ndarray, parents: tuple[Tensor, ...],
            backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    out = Tensor(value)
    tape = active_tape()
    if tape is not None:
        for p in parents:
            if p.requires_grad or p._tape is tape:
                tape.record(out, parents, backward)
                break
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape == b.shape:
        return
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result(a.value + b.value, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result(a.value - b.value, (a, b),
                   lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    av, bv = a.value, b.value
    return _result(av * bv, (a, b),
                   lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return _result(a.value * c, (a,), lambda g: (g * c,))


def power(a: Tensor, exponent: float) -> Tensor:
    av = a.value
    e = float(exponent)
    return _result(av ** e, (a,), lambda g: (g * e * av ** (e - 1.0),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.value)
    return _result(y, (a,), lambda g: (g * (1.0 - y * y),))


def relu(a: Tensor) -> Tensor:
    pos = a.value > 0.0
    return _result(np.where(pos, a.value, 0.0), (a,), lambda g: (g * pos,))


def sigmoid(a: Tensor) -> Tensor:
    y = 0.5 * (1.0 + np.tanh(0.5 * a.value))
    return _result(y, (a,), lambda g: (g * y * (1.0 - y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.value)
    return _result(y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    av = a.value
    return _result(np.log(av), (a,), lambda g: (g / av,))


def maximum(a, b) -> Tensor:
    """Elementwise max; on ties the gradient goes to ``a``."""
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "maximum")
    take_a = a.value >= b.value
    sa, sb = a.shape, b.shape
    return _result(np.where(take_a, a.value, b.value), (a, b),
                   lambda g: (_unbroadcast(g * take_a, sa), _unbroadcast(g * ~take_a, sb)))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.value >= lo) & (a.value <= hi)
    return _result(np.clip(a.value, lo, hi), (a,), lambda g: (g * inside,))


def elementwise(op: str, *args) -> Tensor:
    """Dispatch by name: tanh, relu, sigmoid, add, sub, mul, scale."""
    table = {"tanh": tanh, "relu": relu, "sigmoid": sigmoid, "add": add,
             "sub": sub, "mul": mul, "scale": scale}
    try:
        fn = table[op]
    except KeyError:
        raise ParameterError(f"unknown elementwise op {op!r}") from None
    return fn(*args)


# ---------------------------------------------------------------- linear algebra

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    try:
        value = np.matmul(a.value, b.value)
    except ValueError:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}") from None
    av, bv = a.value, b.value

    def backward(g):
        ga = np.matmul(g, np.swapaxes(bv, -1, -2))
        gb = np.matmul(np.swapaxes(av, -1, -2), g)
        return _unbroadcast(ga, av.shape), _unbroadcast(gb, bv.shape)

    return _result(value, (a, b), backward)


# ---------------------------------------------------------------- shape

def reshape(a: Tensor, shape) -> Tensor:
    src = a.shape
    return _result(a.value.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes=None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return _result(np.transpose(a.value, axes), (a,), lambda g: (np.transpose(g, inverse),))


def swapaxes(a: Tensor, i: int, j: int) -> Tensor:
    return _result(np.swapaxes(a.value, i, j), (a,), lambda g: (np.swapaxes(g, i, j),))


def getitem(a: Tensor, index) -> Tensor:
    src = a.shape

    basic = _is_basic_index(index)

    def backward(g):
        full = np.zeros(src)
        if basic:
            full[index] = g
        else:
            np.add.at(full, index, g)
        return (full,)

    return _result(a.value[index], (a,), backward)


def _is_basic_index(index) -> bool:
    items = index if isinstance(index, tuple) else (index,)
    return all(i is None or i is Ellipsis or isinstance(i, (int, slice)) for i in items)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    sizes = [t.shape[axis] for t in tensors]
    try:
        value = np.concatenate([t.value for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(
            f"concat: incompatible shapes {[t.shape for t in tensors]} on axis {axis}") from None
    splits = np.cumsum(sizes)[:-1]
    return _result(value, tensors, lambda g: tuple(np.split(g, splits, axis=axis)))


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    try:
        value = np.stack([t.value for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(
            f"stack: shapes differ {[t.shape for t in tensors]}") from None
    n = len(tensors)
    return _result(value, tensors,
                   lambda g: tuple(np.take(g, i, axis=axis) for i in range(n)))


# ---------------------------------------------------------------- reductions

def _normalize_axis(axis, ndim: int):
    if axis is None:
        return None
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"axis {ax} out of range for {ndim}-d tensor")
        out.append(ax % ndim)
    return tuple(out)


def _expand(g: np.ndarray, axes, keepdims: bool, shape) -> np.ndarray:
    if axes is not None and not keepdims:
        g = np.expand_dims(g, axes)
    return np.broadcast_to(g, shape)


def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    shape = a.shape
    return _result(a.value.sum(axis=axes, keepdims=keepdims), (a,),
                   lambda g: (_expand(g, axes, keepdims, shape).copy(),))


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    shape = a.shape
    count = a.value.size if axes is None else int(np.prod([shape[i] for i in axes]))
    return _result(a.value.mean(axis=axes, keepdims=keepdims), (a,),
                   lambda g: (_expand(g, axes, keepdims, shape) / count,))


def reduce_max(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    """Max along one axis (or everything); gradient goes to the first argmax."""
    av = a.value
    if axis is None:
        flat = int(np.argmax(av))
        value = av.reshape(-1)[flat]
        if keepdims:
            value = np.reshape(value, (1,) * av.ndim)

        def backward(g):
            full = np.zeros(av.size)
            full[flat] = np.asarray(g).reshape(())
            return (full.reshape(av.shape),)

        return _result(np.asarray(value), (a,), backward)

    (ax,) = _normalize_axis(axis, av.ndim)
    idx = np.expand_dims(np.argmax(av, axis=ax), ax)
    value = np.take_along_axis(av, idx, axis=ax)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        full = np.zeros_like(av)
        np.put_along_axis(full, idx, g, axis=ax)
        return (full,)

    return _result(value if keepdims else np.squeeze(value, ax), (a,), backward)


def reductions(op: str, a: Tensor, axis=None) -> Tensor:
    """Dispatch by name: sum, mean, max."""
    if op == "sum":
        return reduce_sum(a, axis)
    if op == "mean":
        return reduce_mean(a, axis)
    if op == "max":
        return reduce_max(a, axis)
    raise ParameterError(f"unknown reduction {op!r}")


# ---------------------------------------------------------------- composite kernels

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    (ax,) = _normalize_axis(axis, a.ndim)
    shifted = a.value - a.value.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=ax, keepdims=True)
    return _result(y, (a,), lambda g: (y * (g - (g * y).sum(axis=ax, keepdims=True)),))


def conv1d_dilated(x: Tensor, filters: Tensor, dilation: int = 1) -> Tensor:
    """Valid-mode dilated cross-correlation along the last axis.

    ``x`` has shape ``(..., C_in, T)`` and ``filters`` ``(C_out, C_in, d)``;
    ``out[..., o, t] = sum_{c,s} filters[o, c, s] * x[..., c, t + dilation*s]``.
    """
    x, filters = as_tensor(x), as_tensor(filters)
    if filters.ndim != 3 or x.ndim < 2 or x.shape[-2] != filters.shape[1]:
        raise DimensionError(
            f"conv1d_dilated: input {x.shape} incompatible with filters {filters.shape}")
    if dilation < 1:
        raise ParameterError(f"dilation must be a positive integer, got {dilation}")
    c_in, t = x.shape[-2:]
    d = filters.shape[2]
    need = (d - 1) * dilation + 1
    if t < need:
        raise LengthError(
            f"conv1d_dilated: sequence length {t} shorter than receptive field; "
            f"need T >= {need}", required=need)
    lead = x.shape[:-2]
    xv = np.ascontiguousarray(x.value.reshape((-1, c_in, t)))
    wv = np.ascontiguousarray(filters.value)
    out = kernels.conv1d_forward(xv, wv, dilation)
    out_shape = lead + out.shape[1:]

    def backward(g):
        gv = np.ascontiguousarray(g.reshape(out.shape))
        gx, gw = kernels.conv1d_backward(xv, wv, gv, dilation)
        return gx.reshape(x.shape), gw

    return _result(out.reshape(out_shape), (x, filters), backward)


def topk_mask(scores: Tensor, k: int, per: str = "row") -> Tensor:
    """Binary mask with ones at the ``k`` largest entries of each row.

    Ties go to the lower column index. The backward pass is straight-through:
    the incoming gradient passes unchanged at selected entries, zero elsewhere.
    """
    if per != "row":
        raise ParameterError(f"topk_mask only supports per='row', got {per!r}")
    scores = as_tensor(scores)
    p = scores.shape[-1]
    if not 1 <= k <= p:
        raise ParameterError(f"k={k} must lie in [1, {p}]")
    rows = np.ascontiguousarray(scores.value.reshape((-1, p)))
    mask = kernels.topk_rows(rows, int(k)).reshape(scores.shape)
    return _result(mask, (scores,), lambda g: (g * mask,))
