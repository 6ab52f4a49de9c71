import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adagtcn.checks import check_gconv
from adagtcn.diffcore import Tensor
from adagtcn.errors import ConfigError, DimensionError, ParameterError
from adagtcn.gconv import (DnGcn, LayerNorm, dn_gcn, layer_norm, normalize_adjacency,
                           vanilla_gcn)


def norm_oracle(a):
    a = np.maximum(a, a.T) + np.eye(len(a))
    d = np.diag(1.0 / np.sqrt(a.sum(axis=1)))
    return d @ a @ d


# ---------------------------------------------------------------- normalisation

def test_empty_graph_normalises_to_identity():
    assert np.array_equal(normalize_adjacency(Tensor(np.zeros((4, 4)))).value, np.eye(4))


def test_two_node_hand_case():
    out = normalize_adjacency(Tensor([[0.0, 1.0], [1.0, 0.0]])).value
    assert np.allclose(out, 0.5, atol=1e-15)


def test_three_node_path_hand_case():
    # path 0-1-2 with self loops: degrees 2, 3, 2
    a = np.array([[0.0, 1, 0], [1, 0, 1], [0, 1, 0]])
    expect = np.array([[1 / 2, 1 / np.sqrt(6), 0],
                       [1 / np.sqrt(6), 1 / 3, 1 / np.sqrt(6)],
                       [0, 1 / np.sqrt(6), 1 / 2]])
    assert np.allclose(normalize_adjacency(Tensor(a)).value, expect, atol=1e-15)


def test_directed_input_is_symmetrised():
    a = np.array([[0.0, 0.7, 0], [0, 0, 0], [0.2, 0, 0]])
    out = normalize_adjacency(Tensor(a)).value
    assert np.allclose(out, out.T, atol=1e-15)
    assert np.allclose(out, norm_oracle(a), atol=1e-15)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 8), st.integers(0, 10_000))
def test_symmetric_input_gives_symmetric_output(p, seed):
    a = np.abs(np.random.default_rng(seed).normal(size=(p, p)))
    a = a + a.T
    out = normalize_adjacency(Tensor(a), symmetrize=False).value
    assert np.max(np.abs(out - out.T)) <= 1e-12


def test_normalisation_rejects_bad_input():
    with pytest.raises(ParameterError):
        normalize_adjacency(Tensor([[0.0, -1.0], [0.0, 0.0]]))
    with pytest.raises(DimensionError):
        normalize_adjacency(Tensor(np.zeros((2, 3))))


# ---------------------------------------------------------------- vanilla and deep-neighbourhood

def test_vanilla_identity_case():
    h = np.abs(np.random.default_rng(0).normal(size=(3, 2)))
    assert np.allclose(vanilla_gcn(Tensor(h), Tensor(np.eye(3)), Tensor(np.eye(2))).value, h)


def test_vanilla_two_node_hand_case():
    a_hat = normalize_adjacency(Tensor([[0.0, 1.0], [1.0, 0.0]]))
    out = vanilla_gcn(Tensor([[1.0], [3.0]]), a_hat, Tensor([[1.0]]))
    assert np.allclose(out.value, [[2.0], [2.0]])


def test_zero_features_give_zero_output():
    a_hat = normalize_adjacency(Tensor(np.ones((3, 3))))
    ws = [Tensor(np.ones((2, 2)))] * 2
    assert np.array_equal(dn_gcn(Tensor(np.zeros((3, 2))), a_hat, ws, (0.5, 0.5)).value, np.zeros((3, 2)))


def test_depth_one_reduces_to_vanilla():
    rng = np.random.default_rng(1)
    for _ in range(20):
        p, c_in, c_out = rng.integers(2, 7), rng.integers(1, 5), rng.integers(1, 5)
        h = Tensor(rng.normal(size=(p, c_in)))
        a_hat = normalize_adjacency(Tensor(np.abs(rng.normal(size=(p, p)))))
        w = Tensor(rng.normal(size=(c_in, c_out)))
        deep = dn_gcn(h, a_hat, [w], (1.0,), [np.ones(p)]).value
        assert np.max(np.abs(deep - vanilla_gcn(h, a_hat, w).value)) <= 1e-12


def test_two_hop_only_case():
    rng = np.random.default_rng(2)
    a_hat = normalize_adjacency(Tensor([[0.0, 1, 0], [1, 0, 1], [0, 1, 0]])).value
    h = rng.normal(size=(3, 2))
    w1, w2 = rng.normal(size=(2, 4)), rng.normal(size=(4, 4))
    out = dn_gcn(Tensor(h), Tensor(a_hat), [Tensor(w1), Tensor(w2)], (0.0, 1.0),
                 [np.zeros(3), np.ones(3)], activation="tanh").value
    assert np.allclose(out, np.tanh(a_hat @ (a_hat @ h @ w1) @ w2), atol=1e-14)


def test_all_zero_betas_give_zero_output():
    rng = np.random.default_rng(3)
    a_hat = normalize_adjacency(Tensor(np.abs(rng.normal(size=(4, 4)))))
    ws = [Tensor(rng.normal(size=(3, 3))) for _ in range(3)]
    out = dn_gcn(Tensor(rng.normal(size=(4, 3))), a_hat, ws, (0.0, 0.0, 0.0), activation="tanh")
    assert np.array_equal(out.value, np.zeros((4, 3)))


def test_node_selector_zeroes_rows_of_its_term():
    rng = np.random.default_rng(4)
    a_hat = normalize_adjacency(Tensor(np.abs(rng.normal(size=(4, 4)))))
    h, w = Tensor(rng.normal(size=(4, 2))), Tensor(rng.normal(size=(2, 2)))
    gated = dn_gcn(h, a_hat, [w], (1.0,), [np.array([1.0, 0, 1, 0])], activation="tanh").value
    assert np.array_equal(gated[[1, 3]], np.zeros((2, 2)))


def test_permutation_equivariance():
    rng = np.random.default_rng(5)
    layer = DnGcn(3, 4, rng, betas=(0.5, 0.5), activation="tanh")
    h = rng.normal(size=(2, 6, 3))
    adj = np.abs(rng.normal(size=(6, 6)))
    perm = rng.permutation(6)
    out = layer(Tensor(h), normalize_adjacency(Tensor(adj))).value
    out_p = layer(Tensor(h[:, perm]), normalize_adjacency(Tensor(adj[np.ix_(perm, perm)]))).value
    assert np.max(np.abs(out[:, perm] - out_p)) <= 1e-10


def test_beta_sum_warns_but_is_accepted():
    with pytest.warns(UserWarning, match="sum to 1.1"):
        DnGcn(2, 2, np.random.default_rng(0), betas=(0.5, 0.6))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        DnGcn(2, 2, np.random.default_rng(0), betas=(0.5, 0.5))


def test_config_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ConfigError):
        DnGcn(2, 2, rng, betas=(-0.1, 1.1))
    with pytest.raises(ConfigError):
        DnGcn(2, 2, rng, betas=(0.5, 0.5), selectors=[None, [0, 0]])
    with pytest.raises(ConfigError):
        DnGcn(2, 2, rng, betas=(1.0,), activation="gelu")
    with pytest.raises(DimensionError):
        dn_gcn(Tensor(np.ones((3, 2))), Tensor(np.eye(4)), [Tensor(np.ones((2, 2)))], (1.0,))


# ---------------------------------------------------------------- layer norm

def test_layer_norm_hand_values():
    assert np.array_equal(layer_norm(Tensor([[5.0, 5.0, 5.0]])).value, np.zeros((1, 3)))
    out = layer_norm(Tensor([[1.0, 3.0]]), eps=0.0).value
    assert np.allclose(out, [[-1.0, 1.0]], atol=1e-15)


def test_layer_norm_moments():
    h = np.random.default_rng(6).normal(3.0, 4.0, size=(10, 16))
    out = LayerNorm(16, eps=0.0)(Tensor(h)).value
    assert np.max(np.abs(out.mean(axis=-1))) < 1e-10
    assert np.max(np.abs(out.var(axis=-1) - 1.0)) < 1e-6


def test_gconv_gradients():
    for name, rep in check_gconv(seed=0).items():
        assert rep.passed, (name, rep)
