from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wordlestats.gbrt import (DistributionPredictor, GbrtModel, GbrtParams, Node,
                              RegressionTree, build_tree, distribution_from_raw, dumps_predictor,
                              grad_hess, leaf_weight, load_predictor, loads_predictor, predict,
                              predict_distribution, save_predictor, split_gain,
                              train_distribution_predictor, train_gbrt)
from wordlestats.ingest import TryDistribution
from wordlestats.word_attributes import WordAttributes

EXACT = GbrtParams(gamma=0, reg_lambda=0, learning_rate=1, max_depth=None, n_rounds=1,
                   min_child_weight=0)


def _loss(y, yhat):
    return 0.5 * (y - yhat) ** 2


def test_grad_hess_example():
    assert grad_hess(3, 5) == (2, 1)


@settings(max_examples=300)
@given(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3))
def test_grad_hess_finite_differences(y, yhat):
    eps = 1e-3
    g, h = grad_hess(y, yhat)
    fd_g = (_loss(y, yhat + eps) - _loss(y, yhat - eps)) / (2 * eps)
    fd_h = (_loss(y, yhat + eps) - 2 * _loss(y, yhat) + _loss(y, yhat - eps)) / eps ** 2
    assert g == pytest.approx(fd_g, abs=1e-6)
    assert h == pytest.approx(fd_h, abs=1e-3)


def test_single_leaf_weights():
    tree = build_tree([[0.0]], [2.0], [1.0], GbrtParams(reg_lambda=1))
    assert len(tree.nodes) == 1 and tree.nodes[0].weight == -1.0
    tree = build_tree(np.arange(6.0)[:, None], np.zeros(6), np.ones(6), GbrtParams())
    assert len(tree.leaves) == 1 and tree.nodes[0].weight == 0


def test_split_gain_formula():
    # GL=-4, HL=2, GR=4, HR=2, lambda 0: 0.5*(8 + 8 - 0)
    assert split_gain(-4, 2, 4, 2, 0, 0) == 8
    assert split_gain(-4, 2, 4, 2, 0, 3) == 5
    assert leaf_weight(-4, 2, 2) == 1


def test_two_clusters():
    X = np.array([[0.0], [0.1], [0.2], [1.0], [1.1], [1.2]])
    y = np.array([1.0, 1.0, 1.0, 5.0, 5.0, 5.0])
    model = train_gbrt(X, y, EXACT)
    (tree,) = model.trees
    assert tree.nodes[0].feature == 0
    assert tree.nodes[0].threshold == pytest.approx(0.6)
    assert model.predict(X) == pytest.approx(y)
    assert predict(model, [0.5]) == 1.0 and predict(model, [0.7]) == 5.0


def _naive_tree(X, y, rows, lam, gamma):
    """Greedy exact tree written with plain loops; returns {row: prediction}."""
    g = {i: -y[i] for i in rows}  # base 0 so g = -y

    def score(idx):
        G = sum(g[i] for i in idx)
        return G * G / (len(idx) + lam) if len(idx) + lam > 0 else 0.0

    out = {}

    def grow(idx):
        best, best_gain = None, 1e-12 * max(1.0, score(idx))
        for f in range(X.shape[1]):
            values = sorted({X[i, f] for i in idx})
            for a, b in zip(values, values[1:]):
                thr = (a + b) / 2
                left = [i for i in idx if X[i, f] <= thr]
                right = [i for i in idx if X[i, f] > thr]
                gain = 0.5 * (score(left) + score(right) - score(idx)) - gamma
                if gain > best_gain:
                    best, best_gain = (left, right), gain
        if best is None:
            w = -sum(g[i] for i in idx) / (len(idx) + lam)
            for i in idx:
                out[i] = w
            return
        grow(best[0])
        grow(best[1])

    grow(list(rows))
    return out


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("lam", [0.0, 1.0])
def test_tree_matches_plain_greedy(seed, lam):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(8, 13))
    X = rng.integers(0, 4, size=(n, 2)).astype(float)
    X[1] = X[0]  # duplicate feature row
    y = rng.normal(size=n)
    tree = build_tree(X, -y, np.ones(n), replace(EXACT, reg_lambda=lam))
    naive = _naive_tree(X, y, range(n), lam, 0.0)
    assert tree.predict(X) == pytest.approx([naive[i] for i in range(n)], abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_single_round_gives_group_means(seed):
    rng = np.random.default_rng(seed)
    n = 12
    X = rng.integers(0, 3, size=(n, 3)).astype(float)
    y = rng.normal(size=n)
    pred = train_gbrt(X, y, EXACT).predict(X)
    for i in range(n):
        same = np.all(X == X[i], axis=1)
        assert pred[i] == pytest.approx(y[same].mean(), abs=1e-9)


def test_constant_targets():
    X = np.random.default_rng(0).normal(size=(20, 3))
    model = train_gbrt(X, np.full(20, 7.5), GbrtParams(n_rounds=5))
    assert model.predict(X) == pytest.approx(np.full(20, 7.5))
    assert all(len(t.nodes) == 1 for t in model.trees)


@pytest.mark.parametrize("lr", [0.1, 0.5, 1.0])
def test_objective_non_increasing(lr):
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 3))
    y = np.sin(X[:, 0]) + X[:, 1] ** 2 + rng.normal(0, 0.1, 60)
    hist = train_gbrt(X, y, GbrtParams(learning_rate=lr, n_rounds=30)).objective_history
    assert all(b <= a + 1e-9 for a, b in zip(hist, hist[1:]))


def test_lambda_shrinks_leaf_weights():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(40, 2))
    g = rng.normal(size=40)
    tree = build_tree(X, g, np.ones(40), replace(EXACT, max_depth=3))
    prev = None
    for lam in (0.0, 0.5, 2.0, 10.0):
        ws = [abs(leaf_weight(n.grad_sum, n.hess_sum, lam)) for n in tree.leaves]
        if prev is not None:
            assert all(w <= p + 1e-12 for w, p in zip(ws, prev))
        prev = ws


def test_predict_trivial_models():
    assert GbrtModel(3.0, (), GbrtParams()).predict([[1, 2, 3]]) == pytest.approx([3.0])
    leaf = RegressionTree((Node(weight=1.0),))
    model = GbrtModel(0.0, (leaf,), GbrtParams(learning_rate=0.5))
    assert predict(model, WordAttributes(1e-6, 1.2, 0)) == 0.5


def test_regression_sanity():
    rng = np.random.default_rng(3)
    X = rng.uniform(0.5, 2.5, size=(300, 3))
    y = 2 * X[:, 1] + rng.normal(0, 0.2, 300)
    model = train_gbrt(X[:200], y[:200], GbrtParams())
    assert np.mean(np.abs(model.predict(X[200:]) - y[200:])) < 0.2 * 1.5


def test_params_validation():
    with pytest.raises(ValueError):
        GbrtParams(learning_rate=0)
    with pytest.raises(ValueError):
        GbrtParams(reg_lambda=-1)
    with pytest.raises(ValueError):
        train_gbrt([[1.0], [np.nan]], [1, 2])


def _fixed_predictor(outputs):
    models = tuple(GbrtModel(v, (), GbrtParams()) for v in outputs)
    return DistributionPredictor(models, (1.0,) * 6, (1,) * 6)


def test_distribution_examples():
    eerie = WordAttributes(0.000002437871, 1.4797732853992995, 3)
    d = predict_distribution(_fixed_predictor((2.3, 13.8, 21.7, 29.4, 22.3, 10)), eerie)
    assert d.as_tuple() == pytest.approx((0.5, 2.3, 13.8, 21.7, 29.4, 22.3, 10), abs=1e-9)
    d = predict_distribution(_fixed_predictor((0,) * 6), eerie)
    assert d.as_tuple() == (100, 0, 0, 0, 0, 0, 0)
    raw = (4.6, 27.6, 43.4, 58.8, 44.6, 20.0)  # with 0.5 sums to 199.5
    d = predict_distribution(_fixed_predictor(raw), eerie)
    assert d.as_tuple() == pytest.approx([v / 1.995 for v in (0.5, *raw)])


@settings(max_examples=300)
@given(st.lists(st.floats(-50, 150), min_size=6, max_size=6))
def test_distribution_always_valid(raw):
    d = distribution_from_raw([0.5, *raw])
    assert abs(sum(d.as_tuple()) - 100) <= 1e-9
    assert min(d.as_tuple()) >= 0


def _training_data(n=80, seed=0, const=False):
    rng = np.random.default_rng(seed)
    attrs = [WordAttributes(float(rng.uniform(0, 1e-4)), float(rng.uniform(0.8, 2)),
                            int(rng.integers(0, 4))) for _ in range(n)]
    tries = []
    for a in attrs:
        if const:
            tries.append(TryDistribution(0.5, 5.5, 20, 35, 25, 10, 4))
            continue
        mean = 3.2 + a.wie + 0.3 * a.nre
        w = np.exp(-0.5 * ((np.arange(1, 8) - mean) / 1.1) ** 2)
        tries.append(TryDistribution(*(100 * w / w.sum())))
    return attrs, tries


def test_predictor_constant_targets_are_exact():
    attrs, tries = _training_data(const=True)
    p = train_distribution_predictor(attrs, tries, params=GbrtParams(n_rounds=5))
    assert p.accuracies == (1.0,) * 6
    assert p.test_sizes == (24,) * 6
    with pytest.raises(ValueError):
        train_distribution_predictor(attrs[:10], tries[:10])


def test_predictor_round_trip_and_determinism(tmp_path):
    attrs, tries = _training_data()
    params = GbrtParams(n_rounds=20)
    p = train_distribution_predictor(attrs, tries, seed=4, params=params)
    again = train_distribution_predictor(attrs, tries, seed=4, params=params)
    assert dumps_predictor(p) == dumps_predictor(again)
    assert loads_predictor(dumps_predictor(p)) == p
    path = tmp_path / "model.json"
    save_predictor(p, path)
    q = load_predictor(path)
    for a in attrs[:10]:
        assert predict_distribution(q, a) == predict_distribution(p, a)
    assert p.mean_accuracy > 0.5
    with pytest.raises(ValueError):
        loads_predictor('{"format": "something-else", "version": 1}')
