"""Training, evaluation and graph inspection."""
from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .agl import graph_statistics
from .datagen import DEFAULT_SPLIT, SessionSample, split_by_participant
from .diffcore import Tape
from .errors import ConfigError, DimensionError, NumericalError
from .model import AdaGTCN, ModelConfig, bce_loss

log = logging.getLogger(__name__)

#: Sparsity of the best graph reported on ZuCo 2.0; reference only, never a target.
PUBLISHED_AVG_NODE_DEGREE = 2.58
PUBLISHED_TOTAL_EDGES = 1688


@dataclass
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 4
    max_epochs: int = 20
    patience: int = 10
    dropout: float = 0.0
    repetitions: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    split: tuple[float, ...] = DEFAULT_SPLIT

    def __post_init__(self):
        self.split = tuple(self.split)
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.dropout <= 0.8:
            raise ConfigError("dropout must lie in [0, 0.8]")
        if self.max_epochs < 0 or self.repetitions < 1:
            raise ConfigError("max_epochs must be >= 0 and repetitions >= 1")


def split_config(doc: dict) -> tuple[ModelConfig, TrainConfig]:
    """Split one flat key-value document into model and training configs."""
    model_keys = {f.name for f in dataclasses.fields(ModelConfig)}
    train_keys = {f.name for f in dataclasses.fields(TrainConfig)} - {"seed"}
    unknown = set(doc) - model_keys - train_keys
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    model_part = {k: v for k, v in doc.items() if k in model_keys}
    train_part = {k: v for k, v in doc.items() if k in train_keys}
    if "seed" in doc:
        train_part["seed"] = doc["seed"]
    return ModelConfig(**model_part), TrainConfig(**train_part)


# ---------------------------------------------------------------- optimiser

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState,
              lr: float = 0.01, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """One bias-corrected Adam update, in place on ``params`` and ``state``."""
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise DimensionError(f"{name}: gradient shape {g.shape} != {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name, g in grads.items():
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        params[name] -= lr * (m / c1) / (np.sqrt(v / c2) + eps)


class Adam:
    def __init__(self, model: AdaGTCN, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.state = AdamState()

    def step(self) -> None:
        named = dict(self.model.named_parameters())
        params = {k: t.value for k, t in named.items()}
        grads = {k: (t.grad if t.grad is not None else np.zeros_like(t.value))
                 for k, t in named.items()}
        adam_step(params, grads, self.state, self.cfg.learning_rate, self.cfg.beta1,
                  self.cfg.beta2, self.cfg.adam_eps)
        # scalars may come back as fresh objects rather than in-place updates
        for k, t in named.items():
            t.value = np.asarray(params[k], dtype=np.float64)
        self.model.clamp_()


# ---------------------------------------------------------------- metrics

@dataclass
class MetricsReport:
    accuracy: float
    micro_f1: float
    precision: float
    recall: float
    loss: float = float("nan")
    count: int = 0

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def classification_metrics(predicted: Sequence[int], labels: Sequence[int]) -> MetricsReport:
    pred = np.asarray(predicted, dtype=int)
    true = np.asarray(labels, dtype=int)
    if pred.size == 0:
        raise DimensionError("cannot score an empty prediction set")
    tp = int(np.sum((pred == 1) & (true == 1)))
    fp = int(np.sum((pred == 1) & (true == 0)))
    fn = int(np.sum((pred == 0) & (true == 1)))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    # micro averaging pools per-class counts over both classes
    micro_tp = micro_fp = micro_fn = 0
    for c in (0, 1):
        micro_tp += int(np.sum((pred == c) & (true == c)))
        micro_fp += int(np.sum((pred == c) & (true != c)))
        micro_fn += int(np.sum((pred != c) & (true == c)))
    micro_p = micro_tp / (micro_tp + micro_fp)
    micro_r = micro_tp / (micro_tp + micro_fn)
    micro_f1 = 2 * micro_p * micro_r / (micro_p + micro_r) if micro_p + micro_r else 0.0
    accuracy = float(np.mean(pred == true))
    return MetricsReport(accuracy, micro_f1, precision, recall, count=int(pred.size))


def predict_probs(model: AdaGTCN, samples: Sequence[SessionSample], chunk: int = 64) -> np.ndarray:
    out = []
    for i in range(0, len(samples), chunk):
        probs, _ = model.forward([s.sequence for s in samples[i:i + chunk]])
        out.append(probs.value)
    return np.concatenate(out) if out else np.zeros(0)


def evaluate(model: AdaGTCN, samples: Sequence[SessionSample]) -> MetricsReport:
    if not samples:
        raise DimensionError("evaluate needs at least one sample")
    probs = predict_probs(model, samples)
    labels = np.array([s.label for s in samples])
    report = classification_metrics((probs >= 0.5).astype(int), labels)
    clipped = np.clip(probs, 1e-7, 1 - 1e-7)
    report.loss = float(-np.mean(labels * np.log(clipped) + (1 - labels) * np.log(1 - clipped)))
    return report


# ---------------------------------------------------------------- training

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float


@dataclass
class TrainResult:
    model: AdaGTCN
    history: list[EpochRecord]
    best_epoch: int
    best_val_loss: float
    seconds: float

    @property
    def loss_curve(self) -> list[float]:
        return [r.train_loss for r in self.history]


def train(model: AdaGTCN, train_set: Sequence[SessionSample], val_set: Sequence[SessionSample],
          cfg: TrainConfig) -> TrainResult:
    """Mini-batch Adam on binary cross-entropy, keeping the best-validation weights."""
    if not train_set or not val_set:
        raise ConfigError("training needs non-empty train and validation sets")
    start = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    optimizer = Adam(model, cfg)
    x_all, len_all = model.prepare_batch([s.sequence for s in train_set])
    y_all = np.array([s.label for s in train_set], dtype=np.float64)
    history: list[EpochRecord] = []
    best_state = model.state_dict()
    best_val, best_epoch, stale = float("inf"), 0, 0
    for epoch in range(1, cfg.max_epochs + 1):
        order = rng.permutation(len(train_set))
        losses = []
        for b, i in enumerate(range(0, len(order), cfg.batch_size)):
            idx = order[i:i + cfg.batch_size]
            model.zero_grad()
            with Tape() as tape:
                probs, _ = model.forward_array(x_all[idx], len_all[idx], rng=rng,
                                               dropout=cfg.dropout, dropout_rng=rng)
                loss = bce_loss(probs, y_all[idx])
                if not np.isfinite(loss.item()):
                    raise NumericalError(f"training loss diverged at epoch {epoch}, batch {b}")
                tape.backward(loss)
            optimizer.step()
            losses.append(loss.item())
        val_loss = evaluate(model, val_set).loss
        history.append(EpochRecord(epoch, float(np.mean(losses)), val_loss))
        log.info("epoch %d train_loss=%.4f val_loss=%.4f", epoch, history[-1].train_loss, val_loss)
        if val_loss < best_val:
            best_val, best_epoch, stale = val_loss, epoch, 0
            best_state = model.state_dict()
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    model.load_state_dict(best_state)
    return TrainResult(model, history, best_epoch, best_val, time.perf_counter() - start)


# ---------------------------------------------------------------- graphs

def graph_precision(model: AdaGTCN, samples: Sequence[SessionSample],
                    planted: np.ndarray) -> tuple[float, float]:
    """Pooled precision of learned edges against an undirected planted graph.

    Returns (precision, baseline) where baseline is the planted density, the
    expected precision of a random graph with the same number of edges.
    """
    truth = np.asarray(planted) != 0
    truth = truth | truth.T
    p = truth.shape[0]
    off = ~np.eye(p, dtype=bool)
    hits = selected = 0
    for i in range(0, len(samples), 64):
        x, _ = model.prepare_batch([s.sequence for s in samples[i:i + 64]])
        nodes, _ = model._inputs(x)
        mask = model.agl(nodes).mask != 0
        chosen = mask & off
        hits += int(np.sum(chosen & truth))
        selected += int(np.sum(chosen))
    baseline = float(truth[off].mean())
    return (hits / selected if selected else 0.0), baseline


def inspect_graph(model: AdaGTCN, sample: SessionSample | None = None,
                  mask: np.ndarray | None = None, scores: np.ndarray | None = None) -> dict:
    """Learned graph for one sample as a JSON-ready document."""
    if mask is None:
        if sample.sequence.p != model.config.p:
            raise DimensionError(
                f"sample has p={sample.sequence.p}, checkpoint expects p={model.config.p}")
        graph = model.learned_graph(sample.sequence)
        mask, scores = graph.mask, graph.adjacency.value
    return graph_document(mask, scores, model.agl.k_edges)


def graph_document(mask: np.ndarray, scores: np.ndarray | None, k_edges: int) -> dict:
    mask = np.asarray(mask)
    if scores is None:
        scores = mask.astype(np.float64)
    src, dst = np.nonzero(mask)
    avg_degree, total = graph_statistics(mask)
    return {
        "p": int(mask.shape[0]),
        "k_edges": int(k_edges),
        "edges": [[int(i), int(j), float(scores[i, j])] for i, j in zip(src, dst)],
        "avg_node_degree": avg_degree,
        "total_edges": total,
    }


# ---------------------------------------------------------------- experiments

@dataclass
class ExperimentReport:
    repetitions: list[MetricsReport]
    results: list[TrainResult]
    graph_precision: list[float] = field(default_factory=list)
    graph_baseline: float = float("nan")

    def summary(self) -> dict:
        out = {}
        for key in ("accuracy", "micro_f1", "precision", "recall"):
            vals = np.array([getattr(r, key) for r in self.repetitions])
            out[key] = {"mean": float(vals.mean()), "std": float(vals.std()),
                        "values": vals.tolist()}
        if self.graph_precision:
            vals = np.array(self.graph_precision)
            out["graph_precision"] = {"mean": float(vals.mean()), "std": float(vals.std()),
                                      "values": vals.tolist(), "baseline": self.graph_baseline}
        out["seconds"] = [r.seconds for r in self.results]
        return out


def run_experiment(samples: Sequence[SessionSample], model_cfg: ModelConfig,
                   train_cfg: TrainConfig, planted: np.ndarray | None = None) -> ExperimentReport:
    """Repeat split-train-test ``train_cfg.repetitions`` times, re-seeding each run.

    The participant split is fixed by the base seed; model initialisation and
    batching use ``seed + repetition``.
    """
    train_set, val_set, test_set = split_by_participant(samples, ratios=train_cfg.split,
                                                        seed=train_cfg.seed)
    reports, results, precisions = [], [], []
    baseline = float("nan")
    for rep in range(train_cfg.repetitions):
        seed = train_cfg.seed + rep
        model = AdaGTCN(dataclasses.replace(model_cfg, seed=seed))
        result = train(model, train_set, val_set, dataclasses.replace(train_cfg, seed=seed))
        reports.append(evaluate(result.model, test_set))
        results.append(result)
        if planted is not None:
            prec, baseline = graph_precision(result.model, test_set, planted)
            precisions.append(prec)
        log.info("repetition %d: %s", rep, reports[-1])
    return ExperimentReport(reports, results, precisions, baseline)
