"""Finite-difference gradient checks for each layer on small random problems."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import diffcore as dc
from .agl import AdaptiveGraphLearner
from .diffcore import GradCheckReport, Tensor, check_gradients
from .gconv import DnGcn, LayerNorm, normalize_adjacency
from .model import AdaGTCN, ModelConfig, bce_loss
from .nn import Dense, Module
from .tconv import DilatedInception

MODULES = ("agl", "gconv", "tconv", "head", "model")


def jitter_phi(layer: AdaptiveGraphLearner, rng: np.random.Generator) -> None:
    """Move phi off its identity start.

    At the identity many candidate entries are exactly zero and sit on the
    ReLU kink, where central differences and the analytic slope disagree.
    """
    p = layer.num_nodes
    layer.phi_weight.value = np.eye(p) + 0.3 * rng.normal(size=(p, p))
    layer.phi_bias.value = 0.1 * rng.normal(size=p)


def check_module_params(module: Module, run: Callable[[], Tensor], names: list[str] | None = None,
                        tol: float = 1e-4) -> GradCheckReport:
    """Gradient-check ``run()`` with respect to the named parameters of ``module``."""
    named = dict(module.named_parameters())
    names = list(named) if names is None else names
    originals = {n: named[n] for n in names}

    def f(*tensors):
        for n, t in zip(names, tensors):
            module.set_parameter(n, t)
        return run()

    try:
        return check_gradients(f, [originals[n].value for n in names], tol=tol)
    finally:
        for n, t in originals.items():
            module.set_parameter(n, t)


def check_agl(seed: int = 0) -> dict[str, GradCheckReport]:
    rng = np.random.default_rng(seed)
    p, n_in = 6, 5
    layer = AdaptiveGraphLearner(p, n_in, rng, embed_dim=4, partitions=2, k_edges=2)
    jitter_phi(layer, rng)
    nodes = rng.normal(size=(2, p, n_in))
    noise = rng.gumbel(size=(2, 2, p, p))
    proj = np.random.default_rng(seed + 1)
    weights = proj.normal(size=(2, p, p))

    def run_params():
        return (layer(Tensor(nodes), noise=noise).adjacency * Tensor(weights)).sum()

    def run_input(x):
        return (layer(x, noise=noise).adjacency * Tensor(weights)).sum()

    return {
        "agl.params": check_module_params(layer, run_params),
        "agl.input": check_gradients(run_input, [nodes]),
    }


def check_gconv(seed: int = 0) -> dict[str, GradCheckReport]:
    rng = np.random.default_rng(seed)
    p, c_in, c_out = 5, 3, 4
    layer = DnGcn(c_in, c_out, rng, betas=(0.5, 0.5), activation="tanh")
    norm = LayerNorm(c_out)
    h = rng.normal(size=(2, 3, p, c_in))
    adj = np.abs(rng.normal(size=(2, p, p)))
    weights = rng.normal(size=(2, 3, p, c_out))

    def run_inputs(h_, adj_):
        out = norm(layer(h_, normalize_adjacency(adj_)))
        return (out * Tensor(weights)).sum()

    def run_params():
        return (norm(layer(Tensor(h), normalize_adjacency(Tensor(adj)))) * Tensor(weights)).sum()

    return {
        "gconv.inputs": check_gradients(run_inputs, [h, adj]),
        "gconv.params": check_module_params(layer, run_params),
        "gconv.norm": check_module_params(norm, run_params),
    }


def check_tconv(seed: int = 0) -> dict[str, GradCheckReport]:
    rng = np.random.default_rng(seed)
    layer = DilatedInception(2, 5, rng, max_width=4, dilation=2)
    x = rng.normal(size=(2, 3, 2, 10))
    out_shape = layer(Tensor(x)).shape
    weights = rng.normal(size=out_shape)

    def run_input(x_):
        return (layer(x_) * Tensor(weights)).sum()

    return {
        "tconv.input": check_gradients(run_input, [x]),
        "tconv.params": check_module_params(layer, lambda: run_input(Tensor(x))),
    }


def check_head(seed: int = 0) -> dict[str, GradCheckReport]:
    rng = np.random.default_rng(seed)
    hidden, out = Dense(6, 4, rng, bias_init=0.1), Dense(4, 1, rng)
    z = rng.normal(size=(5, 6))
    labels = np.array([1, 0, 0, 1, 1])

    def run_input(z_):
        probs = dc.sigmoid(out(dc.relu(hidden(z_))))
        return bce_loss(dc.reshape(probs, (5,)), labels)

    return {
        "head.input": check_gradients(run_input, [z]),
        "head.hidden": check_module_params(hidden, lambda: run_input(Tensor(z))),
        "head.out": check_module_params(out, lambda: run_input(Tensor(z))),
    }


def small_model_config(**overrides) -> ModelConfig:
    cfg = dict(p=8, max_length=10, embed_dim=4, partitions=2, k_edges=2, max_filter_width=3,
               num_blocks=2, gcn_channels=3, tcn_channels=3, head_widths=(4,), seed=0)
    cfg.update(overrides)
    return ModelConfig(**cfg)


def check_model(seed: int = 0) -> dict[str, GradCheckReport]:
    rng = np.random.default_rng(seed)
    model = AdaGTCN(small_model_config(seed=seed, gcn_activation="tanh"))
    jitter_phi(model.agl, rng)
    cfg = model.config
    x = rng.normal(size=(3, cfg.p, cfg.max_length))
    lengths = np.array([cfg.max_length, cfg.max_length - 2, cfg.receptive_field])
    for i, n in enumerate(lengths):
        x[i, :, n:] = 0.0
    labels = np.array([1, 0, 1])
    noise = rng.gumbel(size=(3, cfg.partitions, cfg.num_nodes, cfg.num_nodes))

    def run():
        probs, _ = model.forward_array(x, lengths, noise=noise)
        return bce_loss(probs, labels)

    return {"model.params": check_module_params(model, run)}


SUITES = {"agl": check_agl, "gconv": check_gconv, "tconv": check_tconv, "head": check_head,
          "model": check_model}


def run_checks(module: str = "all", seed: int = 0) -> dict[str, GradCheckReport]:
    names = MODULES if module == "all" else (module,)
    out: dict[str, GradCheckReport] = {}
    for name in names:
        out.update(SUITES[name](seed))
    return out
