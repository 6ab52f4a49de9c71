import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adagtcn.checks import small_model_config
from adagtcn.datagen import default_world, generate_synthetic, split_by_participant
from adagtcn.errors import ConfigError, NumericalError
from adagtcn.harness import (PUBLISHED_AVG_NODE_DEGREE, PUBLISHED_TOTAL_EDGES, AdamState,
                             TrainConfig, adam_step, classification_metrics, evaluate,
                             graph_document, graph_precision, inspect_graph, run_experiment,
                             split_config, train)
from adagtcn.model import AdaGTCN


@pytest.fixture(scope="module")
def tiny_data():
    samples = generate_synthetic(default_world(0, p=8), 24, 3, 0)
    return samples, split_by_participant(samples, ratios=(1, 1, 1), seed=0)


def tiny_model(seed=0):
    return AdaGTCN(small_model_config(max_length=40, seed=seed))


# ---------------------------------------------------------------- Adam

def test_zero_gradient_leaves_parameters_and_decays_moments():
    params = {"w": np.array([1.0, -2.0])}
    state = AdamState()
    adam_step(params, {"w": np.array([0.5, 0.5])}, state)
    before = params["w"].copy()
    m, v = state.m["w"].copy(), state.v["w"].copy()
    state_copy = AdamState(state.step, {"w": m.copy()}, {"w": v.copy()})
    adam_step(params, {"w": np.zeros(2)}, state_copy, lr=0.0)
    assert np.array_equal(params["w"], before)
    assert np.allclose(state_copy.m["w"], 0.9 * m) and np.allclose(state_copy.v["w"], 0.999 * v)
    fresh = {"w": np.array([1.0, -2.0])}
    adam_step(fresh, {"w": np.zeros(2)}, AdamState())
    assert np.array_equal(fresh["w"], [1.0, -2.0])


def test_first_step_moves_by_lr_times_sign():
    params = {"w": np.array([0.0, 0.0, 0.0])}
    adam_step(params, {"w": np.array([3.0, -0.001, 250.0])}, AdamState(), lr=0.01)
    assert np.allclose(params["w"], [-0.01, 0.01, -0.01], rtol=1e-5)


def test_constant_gradient_step_tends_to_lr():
    for g in (1e-3, 1.0, 1e3):
        params = {"w": np.array([0.0])}
        state = AdamState()
        for _ in range(10_000):
            prev = params["w"].copy()
            adam_step(params, {"w": np.array([g])}, state, lr=0.01)
        assert abs(prev[0] - params["w"][0]) == pytest.approx(0.01, rel=1e-4)


def test_non_finite_gradient_is_named():
    with pytest.raises(NumericalError, match="agl.theta0"):
        adam_step({"agl.theta0": np.zeros(2)}, {"agl.theta0": np.array([np.nan, 0])}, AdamState())


# ---------------------------------------------------------------- metrics

def test_perfect_predictions():
    rep = classification_metrics([1, 0, 1], [1, 0, 1])
    assert (rep.accuracy, rep.micro_f1, rep.precision, rep.recall) == (1.0, 1.0, 1.0, 1.0)


def test_hand_confusion_matrix():
    rep = classification_metrics([1, 1, 0, 0], [1, 0, 1, 0])
    assert (rep.accuracy, rep.precision, rep.recall) == (0.5, 0.5, 0.5)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=50))
def test_micro_f1_equals_accuracy(pairs):
    pred, true = zip(*pairs)
    rep = classification_metrics(pred, true)
    # brute-force confusion counts
    tp = sum(p == t == 1 for p, t in pairs)
    fp = sum(p == 1 and t == 0 for p, t in pairs)
    fn = sum(p == 0 and t == 1 for p, t in pairs)
    assert rep.micro_f1 == pytest.approx(rep.accuracy, abs=1e-12)
    assert rep.precision == (tp / (tp + fp) if tp + fp else 0.0)
    assert rep.recall == (tp / (tp + fn) if tp + fn else 0.0)


# ---------------------------------------------------------------- config

def test_split_config_routes_and_rejects_keys():
    mc, tc = split_config({"p": 8, "max_length": 40, "learning_rate": 0.001, "seed": 7})
    assert (mc.p, mc.max_length, tc.learning_rate, tc.seed) == (8, 40, 0.001, 7)
    with pytest.raises(ConfigError, match="wibble"):
        split_config({"wibble": 1})
    with pytest.raises(ConfigError):
        TrainConfig(learning_rate=0.0)
    with pytest.raises(ConfigError):
        TrainConfig(batch_size=0)


# ---------------------------------------------------------------- training

def test_zero_epochs_returns_initial_model(tiny_data):
    _, (tr, va, te) = tiny_data
    model = tiny_model()
    before = model.state_dict()
    result = train(model, tr, va, TrainConfig(max_epochs=0))
    assert result.history == [] and result.best_epoch == 0
    after = result.model.state_dict()
    assert all(np.array_equal(before[k], after[k]) for k in before)
    assert 0.0 <= evaluate(result.model, te).accuracy <= 1.0


def test_same_seed_same_loss_curve(tiny_data):
    _, (tr, va, te) = tiny_data
    cfg = TrainConfig(max_epochs=2, seed=3, dropout=0.2)
    a = train(tiny_model(3), tr, va, cfg)
    b = train(tiny_model(3), tr, va, cfg)
    assert a.loss_curve == b.loss_curve
    assert [r.val_loss for r in a.history] == [r.val_loss for r in b.history]
    assert evaluate(a.model, te) == evaluate(b.model, te)


def test_training_reduces_loss(tiny_data):
    _, (tr, va, _) = tiny_data
    result = train(tiny_model(), tr, va, TrainConfig(max_epochs=4, patience=10))
    assert result.history[-1].train_loss < result.history[0].train_loss


def test_omega_and_lambda_train_and_stay_clamped(tiny_data):
    _, (tr, va, _) = tiny_data
    model = tiny_model()
    train(model, tr, va, TrainConfig(max_epochs=1))
    omega, lam = float(model.agl.omega.value), float(model.agl.lam.value)
    assert omega != 0.5 and lam != 0.5
    assert 0.01 <= omega <= 2.0 and 0.01 <= lam <= 2.0


def test_divergence_reports_epoch_and_batch(tiny_data):
    _, (tr, va, _) = tiny_data
    model = tiny_model()
    model.out.bias.value = np.array([np.nan])
    with pytest.raises(NumericalError, match="epoch 1, batch 0"):
        train(model, tr, va, TrainConfig(max_epochs=1))


def test_experiment_reseeds_repetitions(tiny_data):
    samples, _ = tiny_data
    cfg = TrainConfig(max_epochs=1, repetitions=2, split=(1, 1, 1))
    report = run_experiment(samples, small_model_config(max_length=40), cfg,
                            planted=default_world(0, p=8).adjacency)
    summary = report.summary()
    assert len(summary["accuracy"]["values"]) == 2
    assert report.results[0].loss_curve != report.results[1].loss_curve
    assert 0.0 <= summary["graph_precision"]["mean"] <= 1.0


# ---------------------------------------------------------------- graphs

def test_graph_document_counts():
    mask = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
    doc = graph_document(mask, None, 1)
    assert doc["p"] == 4 and doc["k_edges"] == 1
    assert doc["avg_node_degree"] == 1.0 and doc["total_edges"] == 2
    assert [e[:2] for e in doc["edges"]] == [[0, 1], [1, 0], [2, 3], [3, 2]]
    full = graph_document(np.ones((6, 6)), None, 6)
    assert (full["avg_node_degree"], full["total_edges"]) == (5.0, 15)


def test_published_reference_values():
    assert (PUBLISHED_AVG_NODE_DEGREE, PUBLISHED_TOTAL_EDGES) == (2.58, 1688)


def test_inspect_graph_on_model(tiny_data):
    samples, _ = tiny_data
    model = tiny_model()
    doc = inspect_graph(model, samples[0])
    assert len(doc["edges"]) == 8 * model.config.k_edges
    assert all(score >= 0 for _, _, score in doc["edges"])


def test_graph_precision_oracle():
    model = tiny_model()
    samples = generate_synthetic(default_world(0, p=8), 6, 3, 1)
    planted = default_world(0, p=8).adjacency
    prec, baseline = graph_precision(model, samples, planted)
    truth = (planted + planted.T) > 0
    hits = sel = 0
    for s in samples:
        mask = model.learned_graph(s.sequence).mask.astype(bool)
        np.fill_diagonal(mask, False)
        hits += np.sum(mask & truth)
        sel += mask.sum()
    assert prec == pytest.approx(hits / sel)
    assert baseline == pytest.approx(truth.sum() / (8 * 7))
