import math

import numpy as np
import pytest

from adagtcn.agl import (AdaptiveGraphLearner, assign_partitions, graph_statistics,
                         relax_candidates, sample_gumbel)
from adagtcn.checks import check_agl
from adagtcn.diffcore import Tensor
from adagtcn.errors import DimensionError, ParameterError


def learner(p=4, n_in=2, **kw):
    kw.setdefault("embed_dim", 2)
    return AdaptiveGraphLearner(p, n_in, np.random.default_rng(0), **kw)


def test_defaults():
    agl = learner()
    assert float(agl.omega.value) == 0.5 and float(agl.lam.value) == 0.5 and agl.tau == 0.5
    assert np.array_equal(agl.phi_weight.value, np.eye(4))


def test_partitions_are_disjoint_and_cover():
    m = assign_partitions(10, 3, np.random.default_rng(1))
    assert np.array_equal(m.sum(axis=0), np.ones(10))
    assert sorted(m.sum(axis=1).tolist()) == [3, 3, 4]


def test_bad_configuration():
    with pytest.raises(ParameterError):
        assign_partitions(4, 1, np.random.default_rng(0))
    with pytest.raises(ParameterError):
        learner(partitions=1)
    with pytest.raises(ParameterError):
        learner(k_edges=5)
    with pytest.raises(ParameterError):
        learner(tau=0.0)


# ---------------------------------------------------------------- sparse features

def test_zero_input_and_zero_omega_give_zero_features():
    agl = learner()
    assert np.array_equal(agl.sparse_features(Tensor(np.zeros((4, 2))), 0).value, np.zeros((4, 2)))
    agl.omega.value = np.array(0.0)
    x = np.random.default_rng(2).normal(size=(4, 2))
    assert np.array_equal(agl.sparse_features(Tensor(x), 1).value, np.zeros((4, 2)))


def test_sparse_features_hand_case():
    agl = learner()
    agl.membership = np.array([[1.0, 1, 0, 0], [0, 0, 1, 1]])
    agl.theta0.value = np.eye(2)
    n = np.array([[1.0, -2.0], [0.5, 3.0], [4.0, 4.0], [-1.0, 2.0]])
    out = agl.sparse_features(Tensor(n), 0).value
    assert np.array_equal(out[2:], np.zeros((2, 2)))
    assert np.allclose(out[:2], np.tanh(0.5 * n[:2]), atol=1e-15)


# ---------------------------------------------------------------- candidates

def test_candidates_hand_case():
    agl = learner(p=2, n_in=1, embed_dim=1, partitions=2, k_edges=1)
    xs = [Tensor(np.array([[1.0], [0.0]])), Tensor(np.array([[0.0], [1.0]]))]
    m1 = agl.candidate_adjacency(xs, 0).value
    a1 = np.tanh(np.array([[0.0, 1.0], [0.0, 0.0]]) - 0.5 * np.eye(2))
    assert np.allclose(a1, [[np.tanh(-0.5), np.tanh(1.0)], [0.0, np.tanh(-0.5)]])
    assert np.allclose(m1, np.maximum(a1, 0.0), atol=1e-15)


def test_zero_features_leave_only_bias():
    agl = learner()
    agl.phi_bias.value = np.array([0.3, -0.2, 0.0, 1.0])
    xs = [Tensor(np.zeros((4, 2))) for _ in range(2)]
    m = agl.candidate_adjacency(xs, 1).value
    assert np.allclose(m, np.tile([0.3, 0.0, 0.0, 1.0], (4, 1)))


def test_large_lambda_suppresses_diagonal():
    agl = learner(p=2, n_in=1, embed_dim=1, k_edges=1)
    agl.lam.value = np.array(2.0)
    xs = [Tensor(np.array([[1.0], [0.0]])), Tensor(np.array([[0.0], [1.0]]))]
    pre = (xs[0] @ xs[1].swapaxes(-1, -2) - agl.lam * agl._gram(xs)).value
    assert np.all(np.diag(pre) < 0)
    assert np.all(np.diag(agl.candidate_adjacency(xs, 0).value) == 0)


def test_call_matches_candidate_adjacency():
    rng = np.random.default_rng(3)
    agl = AdaptiveGraphLearner(6, 5, rng, embed_dim=4, partitions=3, k_edges=2)
    agl.phi_weight.value = np.eye(6) + 0.2 * rng.normal(size=(6, 6))
    n = Tensor(rng.normal(size=(6, 5)))
    xs = [agl.sparse_features(n, i) for i in range(3)]
    expect = agl.select_edges([agl.candidate_adjacency(xs, i) for i in range(3)])
    got = agl(n)
    assert np.allclose(got.scores.value, expect.scores.value, atol=1e-14)
    assert np.array_equal(got.mask, expect.mask)


def test_mask_rows_sum_to_k_and_adjacency_is_masked():
    rng = np.random.default_rng(4)
    agl = AdaptiveGraphLearner(8, 5, rng, embed_dim=3, k_edges=3)
    g = agl(Tensor(rng.normal(size=(5, 8, 5))), rng=rng)
    assert g.mask.shape == (5, 8, 8)
    assert np.all(g.mask.sum(axis=-1) == 3)
    assert np.array_equal(g.adjacency.value, g.scores.value * g.mask)


def test_input_shape_checked():
    with pytest.raises(DimensionError):
        learner()(Tensor(np.zeros((4, 3))))
    agl = learner()
    with pytest.raises(DimensionError):
        agl(Tensor(np.zeros((4, 2))), noise=np.zeros((3, 4, 4)))


def test_inference_is_deterministic():
    rng = np.random.default_rng(5)
    agl = AdaptiveGraphLearner(6, 4, rng, embed_dim=3)
    n = Tensor(rng.normal(size=(6, 4)))
    assert np.array_equal(agl(n).scores.value, agl(n).scores.value)


def test_clamp_keeps_scalars_in_range():
    agl = learner()
    agl.omega.value = np.array(5.0)
    agl.lam.value = np.array(-1.0)
    agl.clamp_()
    assert float(agl.omega.value) == 2.0 and float(agl.lam.value) == 0.01
    assert isinstance(agl.omega.value, np.ndarray)


# ---------------------------------------------------------------- Gumbel relaxation

def test_high_temperature_is_uniform():
    rng = np.random.default_rng(6)
    e = Tensor(rng.uniform(0, 1, size=(3, 1, 1)))
    spreads = []
    for _ in range(1000):
        w = relax_candidates(e, 1e3, sample_gumbel(e.shape, rng)).value[:, 0, 0]
        spreads.append(w.max() - w.min())
    assert np.mean(spreads) < 0.05


def test_low_temperature_one_hot_rate_matches_closed_form():
    # Two equal candidates: the top weight is sigmoid(|g1 - g2| / tau) and g1 - g2 is
    # standard logistic, so P(top weight >= 0.99) = 1 - tanh(tau * ln(99) / 2).
    tau = 0.01
    expected = 1.0 - math.tanh(tau * math.log(99.0) / 2.0)
    rng = np.random.default_rng(7)
    n = 20000
    e = Tensor(np.zeros((2, 1, n)))
    w = relax_candidates(e, tau, sample_gumbel(e.shape, rng)).value
    rate = float(np.mean(w.max(axis=0) >= 0.99))
    sigma = math.sqrt(expected * (1 - expected) / n)
    assert abs(rate - expected) < 4 * sigma
    assert expected == pytest.approx(0.97703, abs=1e-5)


def test_relaxation_sums_to_one_over_candidates():
    rng = np.random.default_rng(8)
    e = Tensor(rng.normal(size=(2, 4, 3, 3)))
    w = relax_candidates(e, 0.5, sample_gumbel(e.shape, rng)).value
    assert np.allclose(w.sum(axis=-3), 1.0, atol=1e-12)
    with pytest.raises(ParameterError):
        relax_candidates(e, -1.0, None)


# ---------------------------------------------------------------- statistics and gradients

def test_graph_statistics_hand_counts():
    mask = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    assert graph_statistics(mask) == (1.0, 2)
    p = 5
    assert graph_statistics(np.ones((p, p))) == (p - 1, p * (p - 1) // 2)


def test_graph_statistics_counts_one_way_edges_once():
    mask = np.array([[1, 1, 0], [0, 0, 1], [0, 0, 0]])
    assert graph_statistics(mask) == (4 / 3, 2)


def test_agl_gradients():
    reports = check_agl(seed=0)
    for name, rep in reports.items():
        assert rep.passed, (name, rep)
