from dataclasses import replace

import numpy as np
import pytest

from mwgnn import autodiff as ad
from mwgnn.graph import GraphBundle, build_graph
from mwgnn.models import (ABLATIONS, GCN, MLP, MWGNN, MWGNNConfig, PreparedGraph, TrainConfig,
                          build_model, evaluate, run_ablation, train)
from mwgnn.synthgen import SyntheticSpec, block_matrix_for_target_h, generate_graph

from _util import grad_check, random_bundle

SMALL = MWGNNConfig(d_meta=4, d_hidden=6, d_q=3, d_score=5)


def synthetic(n=200, h=0.3, seed=0, f=20, gap=1.0, noise=1.0, p_in=0.08):
    spec = SyntheticSpec(n, 4, f, block_matrix_for_target_h(4, p_in, h), seed=seed,
                         mean_gap=gap, noise_variance=noise)
    return generate_graph(spec)


def fast(**kw):
    return TrainConfig(**{"max_epochs": 40, "patience": 10, **kw})


@pytest.mark.parametrize("kind", ["mwgnn", "gcn", "mlp"])
def test_output_shapes(kind):
    b = random_bundle(20, c=3, f=6, seed=1)
    model = build_model(kind, b, SMALL)
    assert model.forward(b).shape == (20, 3)


def test_unknown_kind():
    with pytest.raises(ValueError):
        build_model("gat", random_bundle())


def test_config_validation():
    for bad in ({"num_layers": 0}, {"k": -1}, {"alpha": 2.0}, {"d_q": 0},
                {"lambda_1": 0.6, "lambda_2": 0.5}, {"feature_mode": "max"}, {"ablation": "x"}):
        with pytest.raises(ValueError):
            MWGNNConfig(**bad)
    with pytest.raises(ValueError):
        TrainConfig(lr=0)
    with pytest.raises(ValueError):
        TrainConfig(max_epochs=0)


def test_no_channels_equals_manual_configuration():
    b = random_bundle(20, seed=2)
    a = MWGNN(b, replace(SMALL, ablation="no_channels"), seed=3)
    m = MWGNN(b, replace(SMALL, lambda_1=0.0, lambda_2=0.0, beta=1.0), seed=3)
    assert np.array_equal(a.forward(b).data, m.forward(b).data)


@pytest.mark.parametrize("variant", ["none", "no_meta", "no_channels"])
def test_full_model_gradients(variant):
    b = random_bundle(20, c=3, f=5, p=0.25, seed=4)
    model = MWGNN(b, replace(SMALL, ablation=variant), seed=5)
    pg = PreparedGraph(b)
    for _, t in model.params:
        if t.data.ndim == 2 and t.data.shape[0] == 1:  # biases start at zero
            t.data[:] = np.random.default_rng(6).normal(size=t.shape) * 0.1

    def loss():
        return ad.masked_cross_entropy(model.forward(pg), b.labels, b.train_mask)
    tensors = [t for _, t in model.params]
    assert grad_check(loss, tensors, probes=3 * len(tensors)) <= 1e-4


def test_gru_feature_mode_runs():
    b = random_bundle(20, seed=7)
    m = MWGNN(b, replace(SMALL, feature_mode="gru"), seed=0)
    assert m.forward(b).shape == (20, 3)
    assert m.proj_f is None and m.gru_f is not None


# -- baselines -----------------------------------------------------------------

def test_gcn_constant_features_on_cycle():
    n = 9
    g = build_graph([(i, (i + 1) % n) for i in range(n)], n)
    m = np.zeros(n, bool)
    m[:3] = True
    b = GraphBundle(g, np.ones((n, 4)), np.arange(n) % 3, m, np.roll(m, 3), np.roll(m, 6))
    logits = GCN(b, hidden=8, seed=1).forward(b).data
    assert np.allclose(logits, logits[0], atol=1e-14)


def test_gcn_operator_row_sums():
    b = random_bundle(40, p=0.1, seed=8)
    ei, w = PreparedGraph(b).gcn_operator()
    a = b.graph.dense_adjacency().astype(float) + np.eye(40)
    d = a.sum(1)
    a_hat = a / np.sqrt(np.outer(d, d))
    out = ad.edge_aggregate(ei, w, np.ones((40, 1))).data.ravel()
    assert np.allclose(out, a_hat.sum(1), atol=1e-12)
    h = np.random.default_rng(0).normal(size=(40, 3))
    assert np.allclose(ad.edge_aggregate(ei, w, h).data, a_hat @ h, atol=1e-12)


def test_mlp_ignores_edges():
    b = random_bundle(20, seed=9)
    empty = GraphBundle(build_graph([], 20), b.features, b.labels, b.train_mask,
                        b.val_mask, b.test_mask)
    m = MLP(b, hidden=8, seed=2)
    assert np.array_equal(m.forward(b).data, m.forward(empty).data)


def test_mlp_and_gcn_gradients():
    b = random_bundle(20, seed=10)
    pg = PreparedGraph(b)
    for model in (MLP(b, hidden=7, seed=1), GCN(b, hidden=7, seed=1)):
        for _, t in model.params:
            if t.shape[0] == 1:
                t.data[:] = 0.1

        def loss():
            return ad.masked_cross_entropy(model.forward(pg), b.labels, b.train_mask)
        assert grad_check(loss, [t for _, t in model.params], probes=30) <= 1e-4


def test_mlp_separable_features():
    b = synthetic(400, h=0.5, gap=5.0, noise=0.1)
    report, _ = train("mlp", b, tcfg=TrainConfig(max_epochs=100))
    assert report.test_acc >= 0.95


# -- evaluation ----------------------------------------------------------------

def test_evaluate_examples():
    labels = np.array([0, 1, 2, 1, 0])
    mask = np.ones(5, bool)
    assert evaluate(np.eye(3)[labels], labels, mask) == 1.0
    assert evaluate(np.zeros((5, 3)), labels, mask) == 0.4
    with pytest.raises(ValueError):
        evaluate(np.zeros((5, 3)), labels, np.zeros(5, bool))


def test_evaluate_random_logits():
    rng = np.random.default_rng(0)
    labels = rng.integers(0, 2, 5000)
    acc = evaluate(rng.normal(size=(5000, 2)), labels, np.ones(5000, bool))
    assert abs(acc - 0.5) <= 0.1


# -- training ------------------------------------------------------------------

@pytest.mark.parametrize("kind", ["mwgnn", "gcn", "mlp"])
def test_training_is_deterministic(kind):
    b = synthetic(120, seed=1)
    r1, m1 = train(kind, b, SMALL, fast(seed=3))
    r2, m2 = train(kind, b, SMALL, fast(seed=3))
    assert r1.deterministic_view() == r2.deterministic_view()
    assert all(np.array_equal(a.data, c.data) for (_, a), (_, c) in zip(m1.params, m2.params))


def test_best_checkpoint_replay():
    b = synthetic(150, seed=2)
    r, model = train("mwgnn", b, SMALL, fast(max_epochs=30))
    hist = r.val_acc_history
    assert r.best_epoch == int(np.argmax(hist))
    assert r.best_val_acc == hist[r.best_epoch]
    assert r.test_acc == r.test_acc_history[r.best_epoch]
    assert evaluate(model.forward(b), b.labels, b.test_mask) == r.test_acc
    assert evaluate(model.forward(b), b.labels, b.val_mask) == r.best_val_acc


def test_halts_within_budget_and_early_stops():
    b = synthetic(120, seed=3)
    r, _ = train("mlp", b, tcfg=TrainConfig(max_epochs=7))
    assert r.epochs_run <= 7 and len(r.val_acc_history) == r.epochs_run
    r, _ = train("mlp", b, tcfg=TrainConfig(max_epochs=500, patience=5))
    assert r.epochs_run < 500
    assert r.epochs_run - 1 - r.best_epoch == 5


def test_empty_masks_rejected():
    b = random_bundle(20, seed=1)
    z = np.zeros(20, bool)
    bad = GraphBundle(b.graph, b.features, b.labels, z, b.val_mask, b.test_mask)
    with pytest.raises(ValueError):
        train("mlp", bad)


@pytest.mark.parametrize("kind", ["mwgnn", "gcn", "mlp"])
def test_loss_decreases_first_ten_epochs(kind):
    drops = []
    for seed in range(5):
        b = synthetic(200, h=0.1 + 0.2 * seed, seed=seed)
        r, _ = train(kind, b, SMALL, TrainConfig(max_epochs=10, seed=seed))
        drops.append(r.loss_history[0] - r.loss_history[-1])
    assert np.mean(drops) > 0


def test_ablations_reproducible():
    b = synthetic(100, seed=4)
    pg = PreparedGraph(b)
    for v in ABLATIONS:
        a = run_ablation(b, v, fast(max_epochs=8), seeds=(0, 1), mcfg=SMALL, prepared=pg)
        c = run_ablation(b, v, fast(max_epochs=8), seeds=(0, 1), mcfg=SMALL, prepared=pg)
        assert a["mean"] == c["mean"] and a["std"] == c["std"]
        assert [r.deterministic_view() for r in a["reports"]] == \
            [r.deterministic_view() for r in c["reports"]]
        assert all(r.variant == v for r in a["reports"])
    with pytest.raises(ValueError):
        run_ablation(b, "no_everything")


def test_ablation_fields():
    assert MWGNNConfig(ablation="no_dt").fields == ("f", "p")
    assert MWGNNConfig(ablation="no_df").fields == ("t", "p")
    assert MWGNNConfig(ablation="no_dp").fields == ("t", "f")
    b = random_bundle(20, seed=0)
    m = MWGNN(b, replace(SMALL, ablation="no_dp"), seed=0)
    mw = m.meta_weight(PreparedGraph(b))
    assert mw.attention.shape == (20, 2)
    assert np.allclose(mw.attention.data.sum(1), 1.0)
    nm = MWGNN(b, replace(SMALL, ablation="no_meta"), seed=0)
    assert nm.psi_f.widths == (b.num_features, b.num_features)
    assert nm.psi_t.widths == (5, 5)


def test_report_serializes():
    import json
    b = synthetic(100, seed=5)
    r, _ = train("gcn", b, tcfg=fast(max_epochs=5))
    d = json.loads(json.dumps(r.to_dict()))
    assert d["model"] == "gcn" and len(d["epoch_times"]) == r.epochs_run
