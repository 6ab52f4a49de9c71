"""Adaptive graph learning: a sparse directed adjacency learned from node series.

Nodes are split once into disjoint partitions. Each partition embeds its own
nodes (other rows are zeroed), cross-partition embedding products form one
candidate adjacency per partition, and a Gumbel-softmax over the candidates
followed by a per-row top-k picks the edges.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor
from .errors import DimensionError, ParameterError
from .nn import Module

PARAM_RANGE = (0.01, 2.0)


@dataclass
class LearnedGraph:
    scores: Tensor        # (..., p, p) relaxed edge scores
    mask: np.ndarray      # (..., p, p) binary top-k selection
    adjacency: Tensor     # scores * mask

    @property
    def p(self) -> int:
        return self.mask.shape[-1]


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    return rng.gumbel(0.0, 1.0, size=shape)


def relax_candidates(candidates: Tensor, tau: float, noise: np.ndarray | None,
                     axis: int = -3) -> Tensor:
    """Gumbel-softmax weights over the candidate axis: softmax((e + q) / tau)."""
    if tau <= 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    logits = candidates if noise is None else candidates + Tensor(noise)
    return dc.softmax(logits * (1.0 / tau), axis=axis)


def assign_partitions(p: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Random disjoint near-equal node subsets as a (k, p) 0/1 membership matrix."""
    if k < 2:
        raise ParameterError(f"need at least 2 partitions, got {k}")
    if k > p:
        raise ParameterError(f"cannot split {p} nodes into {k} non-empty partitions")
    order = rng.permutation(p)
    member = np.zeros((k, p))
    for i, chunk in enumerate(np.array_split(order, k)):
        member[i, chunk] = 1.0
    return member


def graph_statistics(mask: np.ndarray) -> tuple[float, int]:
    """Average undirected node degree and undirected edge count of a mask.

    Edges are taken from ``mask | mask.T`` with self-loops dropped.
    """
    m = np.asarray(mask) != 0
    und = m | m.T
    np.fill_diagonal(und, False)
    total = int(und.sum() // 2)
    p = m.shape[0]
    return (2.0 * total / p if p else 0.0), total


class AdaptiveGraphLearner(Module):
    def __init__(self, num_nodes: int, in_features: int, rng: np.random.Generator,
                 embed_dim: int = 40, partitions: int = 2, k_edges: int = 4,
                 omega: float = 0.5, lam: float = 0.5, tau: float = 0.5):
        super().__init__()
        if not 1 <= k_edges <= num_nodes:
            raise ParameterError(f"k_edges={k_edges} must lie in [1, {num_nodes}]")
        if tau <= 0:
            raise ParameterError(f"tau must be positive, got {tau}")
        self.num_nodes = num_nodes
        self.in_features = in_features
        self.embed_dim = embed_dim
        self.partitions = partitions
        self.k_edges = k_edges
        self.tau = tau
        self.membership = assign_partitions(num_nodes, partitions, rng)
        # one shared draw: with independent draws, cross-partition products pass
        # through an unrelated random matrix and carry no similarity at the start
        theta = rng.normal(0.0, 1.0 / np.sqrt(in_features), size=(in_features, embed_dim))
        for i in range(partitions):
            self.add_parameter(f"theta{i}", theta.copy())
        # identity start: candidates begin as the regularised similarities themselves
        self.add_parameter("phi_weight", np.eye(num_nodes))
        self.add_parameter("phi_bias", np.zeros(num_nodes))
        self.add_parameter("omega", omega)
        self.add_parameter("lam", lam)

    def clamp_(self) -> None:
        for t in (self.omega, self.lam):
            t.value = np.asarray(np.clip(t.value, *PARAM_RANGE), dtype=np.float64)

    def sparse_features(self, node_features: Tensor, i: int) -> Tensor:
        """tanh(omega * N @ theta_i) with rows outside partition ``i`` zeroed."""
        if not 0 <= i < self.partitions:
            raise ParameterError(f"partition {i} out of range [0, {self.partitions})")
        x = dc.tanh(self.omega * (node_features @ self._params[f"theta{i}"]))
        return x * Tensor(self.membership[i][:, None])

    def candidate_adjacency(self, xs: list[Tensor], i: int) -> Tensor:
        """ReLU(phi(tanh(sum_{j!=i} X_i X_j^T - lam * sum_j X_j X_j^T)))."""
        if len(xs) < 2:
            raise ParameterError("candidate adjacency needs at least 2 partitions")
        others = None
        for j, x in enumerate(xs):
            if j != i:
                others = x if others is None else others + x
        gram = self._gram(xs)
        a = dc.tanh(xs[i] @ others.swapaxes(-1, -2) - self.lam * gram)
        return dc.relu(a @ self.phi_weight + self.phi_bias)

    @staticmethod
    def _gram(xs: list[Tensor]) -> Tensor:
        total = None
        for x in xs:
            g = x @ x.swapaxes(-1, -2)
            total = g if total is None else total + g
        return total

    def select_edges(self, candidates: list[Tensor], rng: np.random.Generator | None = None,
                     noise: np.ndarray | None = None) -> LearnedGraph:
        """Relax the per-pair candidates, then keep the top ``k_edges`` per row.

        ``noise`` (shape ``(..., k, p, p)``) overrides sampling; with neither
        ``rng`` nor ``noise`` the relaxation is noise-free.
        """
        e = dc.stack(candidates, axis=-3)
        if noise is None and rng is not None:
            noise = sample_gumbel(e.shape, rng)
        if noise is not None and noise.shape != e.shape:
            raise DimensionError(f"noise shape {noise.shape} != candidate shape {e.shape}")
        w = relax_candidates(e, self.tau, noise)
        scores = (w * e).sum(axis=-3)
        mask = dc.topk_mask(dc.detach(scores), self.k_edges).value
        # mask enters as a constant, so gradients reach only the selected scores
        return LearnedGraph(scores, mask, scores * Tensor(mask))

    def __call__(self, node_features: Tensor, rng: np.random.Generator | None = None,
                 noise: np.ndarray | None = None) -> LearnedGraph:
        if node_features.shape[-2:] != (self.num_nodes, self.in_features):
            raise DimensionError(
                f"AGL expects (..., {self.num_nodes}, {self.in_features}) input, "
                f"got {node_features.shape}")
        xs = [self.sparse_features(node_features, i) for i in range(self.partitions)]
        gram = self._gram(xs)
        total = None
        for x in xs:
            total = x if total is None else total + x
        ms = []
        for x in xs:
            a = dc.tanh(x @ (total - x).swapaxes(-1, -2) - self.lam * gram)
            ms.append(dc.relu(a @ self.phi_weight + self.phi_bias))
        return self.select_edges(ms, rng, noise)
