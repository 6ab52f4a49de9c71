"""Parameter containers shared by the layers."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from .diffcore import Tensor


class Module:
    """Holds named trainable tensors and child modules.

    Parameters are looked up through ``self._params`` on every call, so
    ``set_parameter`` can swap in a different tensor (the gradient checker
    relies on this).
    """

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._modules: dict[str, Module] = {}

    def __getattr__(self, name):
        params = self.__dict__.get("_params")
        if params is not None and name in params:
            return params[name]
        modules = self.__dict__.get("_modules")
        if modules is not None and name in modules:
            return modules[name]
        raise AttributeError(f"{type(self).__name__} has no attribute {name!r}")

    def add_parameter(self, name: str, value) -> Tensor:
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self._params[name] = t
        return t

    def add_module(self, name: str, module: "Module") -> "Module":
        self._modules[name] = module
        return module

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, t in self._params.items():
            yield prefix + name, t
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def _resolve(self, path: str) -> tuple["Module", str]:
        *parents, leaf = path.split(".")
        mod = self
        for part in parents:
            mod = mod._modules[part]
        return mod, leaf

    def set_parameter(self, path: str, tensor: Tensor) -> None:
        mod, leaf = self._resolve(path)
        if leaf not in mod._params:
            raise KeyError(path)
        mod._params[leaf] = tensor

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: t.value.copy() for name, t in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        own = dict(self.named_parameters())
        missing = own.keys() - state.keys()
        unexpected = state.keys() - own.keys()
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, t in own.items():
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != t.shape:
                raise ValueError(f"{name}: shape {value.shape} != {t.shape}")
            t.value = value.copy()

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.grad = None

    def num_parameters(self) -> int:
        return sum(t.value.size for t in self.parameters())


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


class Dense(Module):
    def __init__(self, in_features: int, out_features: int, rng: np.random.Generator,
                 bias_init: float = 0.0):
        super().__init__()
        self.add_parameter("weight", glorot(rng, in_features, out_features))
        self.add_parameter("bias", np.full(out_features, float(bias_init)))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias
