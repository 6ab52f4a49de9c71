"""Central finite-difference oracle for reverse-mode gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..errors import EvaluationError, ParameterError
from .tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    max_rel_error: float
    tol: float
    per_input: list[float] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tol

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} max_rel_err={self.max_rel_error:.3e} tol={self.tol:.1e}"


def _evaluate(f, arrays) -> float:
    value = f(*[Tensor(a) for a in arrays])
    out = float(np.asarray(value.value if isinstance(value, Tensor) else value).reshape(()))
    if not np.isfinite(out):
        raise EvaluationError(f"function returned non-finite value {out}")
    return out


def numerical_gradient(f: Callable[..., Tensor], inputs: Sequence[np.ndarray],
                       eps: float = 1e-5) -> list[np.ndarray]:
    arrays = [np.array(a, dtype=np.float64) for a in inputs]
    grads = []
    for arr in arrays:
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = _evaluate(f, arrays)
            flat[i] = orig - eps
            down = _evaluate(f, arrays)
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        grads.append(g)
    return grads


def analytic_gradient(f: Callable[..., Tensor], inputs: Sequence[np.ndarray]) -> list[np.ndarray]:
    leaves = [Tensor(np.array(a, dtype=np.float64), requires_grad=True) for a in inputs]
    with Tape() as tape:
        out = f(*leaves)
        if not np.all(np.isfinite(out.value)):
            raise EvaluationError("function returned a non-finite value")
        tape.backward(out)
    return [leaf.grad if leaf.grad is not None else np.zeros_like(leaf.value)
            for leaf in leaves]


def check_gradients(f: Callable[..., Tensor], inputs: Sequence[np.ndarray],
                    eps: float = 1e-5, tol: float = 1e-4,
                    floor: float = 1e-6) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar ``f`` against central differences.

    The relative error per element is ``|a - n| / max(|a|, |n|, floor)``; the
    floor keeps entries whose true gradient is zero from dividing by noise.
    """
    if eps <= 0:
        raise ParameterError("eps must be positive")
    analytic = analytic_gradient(f, inputs)
    numeric = numerical_gradient(f, inputs, eps)
    per_input = []
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        per_input.append(float(np.max(np.abs(a - n) / denom)) if a.size else 0.0)
    return GradCheckReport(max(per_input, default=0.0), tol, per_input)
