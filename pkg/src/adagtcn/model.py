"""End-to-end AdaGTCN classifier: AGL -> [DN-GCN, LayerNorm, DI-TCN] x blocks -> head."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import diffcore as dc
from .agl import AdaptiveGraphLearner, LearnedGraph
from .diffcore import Tensor
from .errors import ConfigError, DimensionError, FormatError, LengthError, PaddingOverflowError
from .gconv import ACTIVATIONS, DnGcn, LayerNorm, normalize_adjacency
from .nn import Dense, Module
from .preprocess import N_BANDS, BandSequence
from .tconv import DilatedInception, branch_channels, default_dilations, receptive_field

CHECKPOINT_FORMAT = "adagtcn-checkpoint"
CHECKPOINT_VERSION = 1
PROB_CLAMP = 1e-7
HEAD_BIAS_INIT = 0.1


@dataclass
class ModelConfig:
    p: int = 16
    max_length: int = 168
    node_layout: str = "electrode_band"
    embed_dim: int = 40
    partitions: int = 2
    k_edges: int = 4
    omega: float = 0.5
    lam: float = 0.5
    tau: float = 0.5
    betas: tuple[float, ...] = (0.5, 0.6)
    selectors: list[list[float]] | None = None
    gcn_activation: str = "relu"
    max_filter_width: int = 7
    dilation_schedule: list[int] | None = None
    num_blocks: int = 2
    gcn_channels: int = 16
    tcn_channels: int = 16
    head_widths: tuple[int, ...] = (32, 16)
    head_mode: str = "single_logistic"
    seed: int = 0

    def __post_init__(self):
        self.betas = tuple(float(b) for b in self.betas)
        self.head_widths = tuple(int(w) for w in self.head_widths)
        if self.node_layout not in ("electrode_band", "electrode"):
            raise ConfigError(f"unknown node_layout {self.node_layout!r}")
        if self.node_layout == "electrode" and self.p % N_BANDS:
            raise ConfigError(f"p={self.p} is not a multiple of {N_BANDS} bands")
        if self.head_mode not in ("single_logistic", "two_logit_softmax"):
            raise ConfigError(f"unknown head_mode {self.head_mode!r}")
        if self.gcn_activation not in ACTIVATIONS:
            raise ConfigError(f"unknown gcn_activation {self.gcn_activation!r}")
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be >= 1")
        if not 1 <= self.k_edges <= self.num_nodes:
            raise ConfigError(f"k_edges={self.k_edges} outside [1, {self.num_nodes}]")
        if self.partitions < 2 or self.partitions > self.num_nodes:
            raise ConfigError(f"partitions={self.partitions} outside [2, {self.num_nodes}]")
        if self.tau <= 0:
            raise ConfigError("tau must be positive")
        if self.max_filter_width < 2:
            raise ConfigError("max_filter_width must be >= 2")
        if len(self.dilations) != self.num_blocks:
            raise ConfigError("dilation_schedule length must equal num_blocks")
        if self.selectors is not None and len(self.selectors) != len(self.betas):
            raise ConfigError("need one selector per depth coefficient")
        if self.receptive_field > self.max_length:
            raise ConfigError(
                f"receptive field {self.receptive_field} exceeds max_length {self.max_length}")

    @property
    def num_nodes(self) -> int:
        return self.p if self.node_layout == "electrode_band" else self.p // N_BANDS

    @property
    def in_channels(self) -> int:
        return 1 if self.node_layout == "electrode_band" else N_BANDS

    @property
    def agl_in_features(self) -> int:
        return self.max_length * self.in_channels

    @property
    def depth(self) -> int:
        return len(self.betas)

    @property
    def dilations(self) -> list[int]:
        if self.dilation_schedule is None:
            return default_dilations(self.num_blocks)
        return [int(r) for r in self.dilation_schedule]

    @property
    def receptive_field(self) -> int:
        return receptive_field(self.max_filter_width, self.dilations)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["betas"] = list(self.betas)
        d["head_widths"] = list(self.head_widths)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**data)


@dataclass
class Prediction:
    prob_tsr: float
    label: int = field(init=False)

    def __post_init__(self):
        self.label = 1 if self.prob_tsr >= 0.5 else 0

    @property
    def prob_nr(self) -> float:
        return 1.0 - self.prob_tsr


class Block(Module):
    def __init__(self, in_channels: int, cfg: ModelConfig, dilation: int,
                 rng: np.random.Generator):
        super().__init__()
        self.add_module("gcn", DnGcn(in_channels, cfg.gcn_channels, rng, cfg.betas,
                                     cfg.selectors, cfg.gcn_activation))
        self.add_module("norm", LayerNorm(cfg.gcn_channels))
        self.add_module("tcn", DilatedInception(cfg.gcn_channels, cfg.tcn_channels, rng,
                                                cfg.max_filter_width, dilation))


class AdaGTCN(Module):
    def __init__(self, config: ModelConfig):
        super().__init__()
        self.config = cfg = config
        rng = np.random.default_rng(cfg.seed)
        self.add_module("agl", AdaptiveGraphLearner(
            cfg.num_nodes, cfg.agl_in_features, rng, embed_dim=cfg.embed_dim,
            partitions=cfg.partitions, k_edges=cfg.k_edges, omega=cfg.omega,
            lam=cfg.lam, tau=cfg.tau))
        channels = cfg.in_channels
        for b, r in enumerate(cfg.dilations):
            self.add_module(f"block{b}", Block(channels, cfg, r, rng))
            channels = cfg.tcn_channels
        width = cfg.num_nodes * channels
        for i, w in enumerate(cfg.head_widths):
            # a small positive bias keeps the narrow ReLU head from dying early on
            self.add_module(f"dense{i}", Dense(width, w, rng, bias_init=HEAD_BIAS_INIT))
            width = w
        n_out = 1 if cfg.head_mode == "single_logistic" else 2
        self.add_module("out", Dense(width, n_out, rng))

    @property
    def blocks(self) -> list[Block]:
        return [self._modules[f"block{b}"] for b in range(self.config.num_blocks)]

    def prepare_batch(self, samples: Sequence[BandSequence]) -> tuple[np.ndarray, np.ndarray]:
        """Stack samples into a zero-padded ``(B, p, L)`` array plus valid lengths."""
        cfg = self.config
        x = np.zeros((len(samples), cfg.p, cfg.max_length))
        lengths = np.empty(len(samples), dtype=np.int64)
        for i, s in enumerate(samples):
            if s.p != cfg.p:
                raise DimensionError(f"sample {i} has p={s.p}, model expects p={cfg.p}")
            valid = s.valid_features()
            n = valid.shape[1]
            if n > cfg.max_length:
                raise PaddingOverflowError(
                    f"sample {i} has {n} steps, model max_length is {cfg.max_length}")
            if n < cfg.receptive_field:
                raise LengthError(
                    f"sample {i} has {n} valid steps; the model's receptive field is "
                    f"{cfg.receptive_field}", required=cfg.receptive_field)
            x[i, :, :n] = valid
            lengths[i] = n
        return x, lengths

    def _inputs(self, x: np.ndarray) -> tuple[Tensor, Tensor]:
        cfg = self.config
        b, p, length = x.shape
        if cfg.node_layout == "electrode_band":
            nodes = x
            series = x.transpose(0, 2, 1)[..., None]
        else:
            grouped = x.reshape(b, cfg.num_nodes, N_BANDS, length)
            nodes = grouped.reshape(b, cfg.num_nodes, N_BANDS * length)
            series = grouped.transpose(0, 3, 1, 2)
        return Tensor(nodes), Tensor(np.ascontiguousarray(series))

    def forward(self, samples: Sequence[BandSequence], rng: np.random.Generator | None = None,
                noise: np.ndarray | None = None, dropout: float = 0.0,
                dropout_rng: np.random.Generator | None = None) -> tuple[Tensor, LearnedGraph]:
        """Return (probability of task-specific reading per sample, learned graph).

        ``rng`` draws Gumbel noise for the edge relaxation; ``noise`` pins it.
        With neither, the relaxation is deterministic (inference mode).
        """
        x, lengths = self.prepare_batch(samples)
        return self.forward_array(x, lengths, rng, noise, dropout, dropout_rng)

    def forward_array(self, x: np.ndarray, lengths: np.ndarray,
                      rng: np.random.Generator | None = None, noise: np.ndarray | None = None,
                      dropout: float = 0.0,
                      dropout_rng: np.random.Generator | None = None) -> tuple[Tensor, LearnedGraph]:
        cfg = self.config
        nodes, h = self._inputs(x)
        graph = self.agl(nodes, rng=rng, noise=noise)
        a_hat = normalize_adjacency(graph.adjacency)
        for block in self.blocks:
            h = block.norm(block.gcn(h, a_hat))            # (B, T, P, C)
            h = block.tcn(h.transpose(0, 2, 3, 1))         # (B, P, C, T')
            h = h.transpose(0, 3, 1, 2)                    # (B, T', P, C)
        pooled = self._pool(h, lengths)
        z = pooled.reshape((pooled.shape[0], -1))
        for i in range(len(cfg.head_widths)):
            z = dc.relu(self._modules[f"dense{i}"](z))
            if dropout > 0.0 and dropout_rng is not None:
                keep = (dropout_rng.random(z.shape) >= dropout) / (1.0 - dropout)
                z = z * Tensor(keep)
        logits = self.out(z)
        if cfg.head_mode == "single_logistic":
            probs = dc.sigmoid(logits).reshape((-1,))
        else:
            probs = dc.softmax(logits, axis=-1)[:, 1]
        return probs, graph

    def _pool(self, h: Tensor, lengths: np.ndarray) -> Tensor:
        """Mean over output steps whose whole receptive field lies in valid input."""
        t_out = h.shape[1]
        valid = lengths - self.config.receptive_field + 1
        weights = np.zeros((len(lengths), t_out, 1, 1))
        for i, v in enumerate(valid):
            weights[i, :v] = 1.0 / v
        return (h * Tensor(weights)).sum(axis=1)

    def predict(self, samples: Sequence[BandSequence]) -> list[Prediction]:
        probs, _ = self.forward(samples)
        return [Prediction(float(p)) for p in probs.value]

    def learned_graph(self, sample: BandSequence,
                      rng: np.random.Generator | None = None) -> LearnedGraph:
        x, _ = self.prepare_batch([sample])
        nodes, _ = self._inputs(x)
        g = self.agl(nodes, rng=rng)
        return LearnedGraph(dc.Tensor(g.scores.value[0]), g.mask[0],
                            dc.Tensor(g.adjacency.value[0]))

    def clamp_(self) -> None:
        self.agl.clamp_()


def bce_loss(probs: Tensor, labels) -> Tensor:
    """Mean binary cross-entropy on clamped probabilities."""
    y = np.asarray(labels, dtype=np.float64).reshape(probs.shape)
    if y.size == 0:
        raise DimensionError("loss needs a non-empty batch")
    p = dc.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    ll = Tensor(y) * dc.log(p) + Tensor(1.0 - y) * dc.log(1.0 - p)
    return -ll.mean()


def parameter_count(cfg: ModelConfig) -> int:
    """Trainable scalars implied by a config (selectors are fixed, not counted)."""
    nodes = cfg.num_nodes
    total = cfg.partitions * cfg.agl_in_features * cfg.embed_dim  # theta_i
    total += nodes * nodes + nodes                                 # phi
    total += 2                                                     # omega, lambda
    widths = range(2, cfg.max_filter_width + 1)
    split = branch_channels(list(widths), cfg.tcn_channels)
    c_in = cfg.in_channels
    for _ in range(cfg.num_blocks):
        g = cfg.gcn_channels
        total += c_in * g + (cfg.depth - 1) * g * g                # W^l
        total += 2 * g                                             # layer norm
        total += sum(c * g * d + c for c, d in zip(split, widths)) # filters + biases
        c_in = cfg.tcn_channels
    width = nodes * cfg.tcn_channels
    for w in cfg.head_widths:
        total += width * w + w
        width = w
    n_out = 1 if cfg.head_mode == "single_logistic" else 2
    return total + width * n_out + n_out


def save_checkpoint(model: AdaGTCN, path: str | Path, extra: dict | None = None) -> None:
    params = {name: {"shape": list(t.shape), "data": t.value.reshape(-1).tolist()}
              for name, t in model.named_parameters()}
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "buffers": {"agl.membership": model.agl.membership.astype(int).tolist()},
        "params": params,
        "extra": extra or {},
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> AdaGTCN:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not a JSON checkpoint ({exc})") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise FormatError(f"{path}: not an adagtcn checkpoint")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    model = AdaGTCN(ModelConfig.from_dict(doc["config"]))
    state = {name: np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
             for name, entry in doc["params"].items()}
    model.load_state_dict(state)
    model.agl.membership = np.asarray(doc["buffers"]["agl.membership"], dtype=np.float64)
    return model
