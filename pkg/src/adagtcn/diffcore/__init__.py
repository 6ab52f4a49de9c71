"""Minimal reverse-mode differentiable array engine."""
from .gradcheck import GradCheckReport, analytic_gradient, check_gradients, numerical_gradient
from .kernels import BACKEND
from .tensor import (
    Tape,
    Tensor,
    active_tape,
    add,
    as_tensor,
    clip,
    concat,
    conv1d_dilated,
    detach,
    elementwise,
    exp,
    getitem,
    log,
    matmul,
    maximum,
    mul,
    power,
    reduce_max,
    reduce_mean,
    reduce_sum,
    reductions,
    relu,
    reshape,
    scale,
    sigmoid,
    softmax,
    stack,
    sub,
    swapaxes,
    tanh,
    topk_mask,
    transpose,
)

__all__ = [
    "BACKEND", "GradCheckReport", "Tape", "Tensor", "active_tape", "add",
    "analytic_gradient", "as_tensor", "check_gradients", "clip", "concat",
    "conv1d_dilated", "detach", "elementwise", "exp", "getitem", "log", "matmul",
    "maximum", "mul", "numerical_gradient", "power", "reduce_max", "reduce_mean",
    "reduce_sum", "reductions", "relu", "reshape", "scale", "sigmoid", "softmax",
    "stack", "sub", "swapaxes", "tanh", "topk_mask", "transpose",
]
