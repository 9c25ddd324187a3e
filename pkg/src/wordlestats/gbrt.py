"""Second-order gradient-boosted regression trees and the try-distribution predictor.

Squared loss l = (y - yhat)**2 / 2, so every hessian is 1 and a leaf's
weight is -G / (H + lambda). Splits are found by exact greedy search over
midpoints of sorted distinct feature values.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import TryDistribution
from .utils import train_test_split
from .word_attributes import WordAttributes

FEATURES = ("FREQ", "WIE", "NRE")
BUCKETS = (2, 3, 4, 5, 6, 7)
FORMAT = "wordlestats-gbrt"
FORMAT_VERSION = 1

_REL_EPS = 1e-12


@dataclass(frozen=True)
class GbrtParams:
    gamma: float = 0.0
    reg_lambda: float = 1.0
    learning_rate: float = 0.1
    max_depth: int | None = 3
    n_rounds: int = 100
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.gamma < 0 or self.reg_lambda < 0 or self.min_child_weight < 0:
            raise ValueError("gamma, reg_lambda and min_child_weight must be >= 0")
        if not 0 < self.learning_rate <= 1:
            raise ValueError("learning_rate must be in (0, 1]")
        if self.max_depth is not None and self.max_depth < 1:
            raise ValueError("max_depth must be >= 1 or None")
        if self.n_rounds < 1:
            raise ValueError("n_rounds must be >= 1")


@dataclass(frozen=True)
class Node:
    feature: int = -1          # -1 marks a leaf
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    weight: float = 0.0
    grad_sum: float = 0.0
    hess_sum: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class RegressionTree:
    nodes: tuple[Node, ...]

    def leaf_index(self, x) -> int:
        i = 0
        while not self.nodes[i].is_leaf:
            n = self.nodes[i]
            i = n.left if x[n.feature] <= n.threshold else n.right
        return i

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X))
        stack = [(0, np.arange(len(X)))]
        while stack:
            i, idx = stack.pop()
            n = self.nodes[i]
            if n.is_leaf:
                out[idx] = n.weight
                continue
            go_left = X[idx, n.feature] <= n.threshold
            stack.append((n.left, idx[go_left]))
            stack.append((n.right, idx[~go_left]))
        return out

    @property
    def leaves(self) -> list[Node]:
        return [n for n in self.nodes if n.is_leaf]

    def depth(self) -> int:
        def walk(i):
            n = self.nodes[i]
            return 0 if n.is_leaf else 1 + max(walk(n.left), walk(n.right))
        return walk(0)


def grad_hess(y_true: float, y_pred: float) -> tuple[float, float]:
    return y_pred - y_true, 1.0


def leaf_weight(G: float, H: float, reg_lambda: float) -> float:
    denom = H + reg_lambda
    return -G / denom if denom > 0 else 0.0


def split_gain(GL, HL, GR, HR, reg_lambda, gamma) -> float:
    def score(G, H):
        return G * G / (H + reg_lambda) if H + reg_lambda > 0 else 0.0
    return 0.5 * (score(GL, HL) + score(GR, HR) - score(GL + GR, HL + HR)) - gamma


def _best_split(X, g, h, idx, params):
    G, H = g[idx].sum(), h[idx].sum()
    parent = G * G / (H + params.reg_lambda) if H + params.reg_lambda > 0 else 0.0
    best = None
    best_gain = _REL_EPS * max(1.0, parent)
    for f in range(X.shape[1]):
        order = idx[np.argsort(X[idx, f], kind="stable")]
        xs = X[order, f]
        gl = np.cumsum(g[order])[:-1]
        hl = np.cumsum(h[order])[:-1]
        ks = np.flatnonzero((xs[1:] > xs[:-1])
                            & (hl >= params.min_child_weight)
                            & (H - hl >= params.min_child_weight))
        if not len(ks):
            continue
        gains = _gains(gl[ks], hl[ks], G, H, params.reg_lambda, params.gamma)
        k = int(np.argmax(gains))  # first maximum, i.e. lowest threshold
        if gains[k] > best_gain:
            best_gain = gains[k]
            best = (f, 0.5 * (xs[ks[k]] + xs[ks[k] + 1]))
    return best


def _gains(GL, HL, G, H, reg_lambda, gamma):
    with np.errstate(divide="ignore", invalid="ignore"):
        sl = np.where(HL + reg_lambda > 0, GL * GL / (HL + reg_lambda), 0.0)
        GR, HR = G - GL, H - HL
        sr = np.where(HR + reg_lambda > 0, GR * GR / (HR + reg_lambda), 0.0)
    parent = G * G / (H + reg_lambda) if H + reg_lambda > 0 else 0.0
    return 0.5 * (sl + sr - parent) - gamma


def build_tree(features, g, h, params: GbrtParams) -> RegressionTree:
    """Exact greedy tree on gradients `g` and hessians `h`.

    A split is kept only if its regularised gain is strictly positive;
    ties go to the lowest feature index, then the lowest threshold.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    if len(X) < 1 or len(g) != len(X) or len(h) != len(X):
        raise ValueError("features, g and h must be aligned and non-empty")
    nodes: list = []

    def grow(idx, depth):
        me = len(nodes)
        nodes.append(None)
        G, H = float(g[idx].sum()), float(h[idx].sum())
        split = None
        if params.max_depth is None or depth < params.max_depth:
            split = _best_split(X, g, h, idx, params)
        if split is None:
            nodes[me] = Node(weight=leaf_weight(G, H, params.reg_lambda), grad_sum=G, hess_sum=H)
            return me
        f, thr = split
        mask = X[idx, f] <= thr
        left = grow(idx[mask], depth + 1)
        right = grow(idx[~mask], depth + 1)
        nodes[me] = Node(feature=f, threshold=float(thr), left=left, right=right,
                         grad_sum=G, hess_sum=H)
        return me

    grow(np.arange(len(X)), 0)
    return RegressionTree(tuple(nodes))


@dataclass(frozen=True)
class GbrtModel:
    base_score: float
    trees: tuple[RegressionTree, ...]
    params: GbrtParams
    objective_history: tuple[float, ...] = field(default=(), compare=False)

    def predict(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.full(len(X), self.base_score)
        for tree in self.trees:
            out += self.params.learning_rate * tree.predict(X)
        return out


def _objective(y, pred, tree: RegressionTree, params: GbrtParams) -> float:
    loss = 0.5 * float(np.sum((y - pred) ** 2))
    leaves = tree.leaves
    scaled = np.array([params.learning_rate * n.weight for n in leaves])
    return loss + params.gamma * len(leaves) + 0.5 * params.reg_lambda * float(scaled @ scaled)


def train_gbrt(features, targets, params: GbrtParams = GbrtParams()) -> GbrtModel:
    """Fit `params.n_rounds` trees to squared-loss gradients, starting from the target mean.

    `objective_history[t]` is the squared loss after round t plus the
    penalty of the (learning-rate scaled) tree added in that round.
    """
    X = np.atleast_2d(np.asarray(features, dtype=float))
    y = np.asarray(targets, dtype=float)
    if len(X) < 2 or len(y) != len(X):
        raise ValueError("need at least 2 aligned rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in features or targets")
    base = float(y.mean())
    pred = np.full(len(y), base)
    trees, history = [], []
    for _ in range(params.n_rounds):
        g = pred - y
        h = np.ones_like(y)
        tree = build_tree(X, g, h, params)
        pred = pred + params.learning_rate * tree.predict(X)
        trees.append(tree)
        history.append(_objective(y, pred, tree, params))
    return GbrtModel(base, tuple(trees), params, tuple(history))


def predict(model: GbrtModel, attributes: WordAttributes | Sequence[float]) -> float:
    x = attributes.as_vector() if isinstance(attributes, WordAttributes) else attributes
    return float(model.predict([x])[0])


def distribution_from_raw(raw: Sequence[float]) -> TryDistribution:
    """Clip negative bucket predictions to 0 and rescale to sum 100."""
    v = np.clip(np.asarray(raw, dtype=float), 0.0, None)
    s = v.sum()
    if s <= 0:
        raise ValueError("all bucket predictions are non-positive")
    return TryDistribution(*(100.0 * v / s))


@dataclass(frozen=True)
class DistributionPredictor:
    models: tuple[GbrtModel, ...]                  # buckets 2..7
    accuracies: tuple[float, ...]
    test_sizes: tuple[int, ...]
    one_try_constant: float = 0.5
    tolerance: float = 3.0

    @property
    def mean_accuracy(self) -> float:
        return float(np.mean(self.accuracies))

    def raw(self, attributes) -> list[float]:
        return [self.one_try_constant] + [predict(m, attributes) for m in self.models]


def within_tolerance(pred, truth, tolerance: float) -> float:
    pred, truth = np.asarray(pred, dtype=float), np.asarray(truth, dtype=float)
    return float(np.mean(np.abs(pred - truth) <= tolerance))


def train_distribution_predictor(attributes: Sequence[WordAttributes],
                                 tries: Sequence[TryDistribution],
                                 test_fraction: float = 0.30, tolerance: float = 3.0,
                                 seed: int = 0,
                                 params: GbrtParams | None = None) -> DistributionPredictor:
    """One boosted model per bucket 2..7; bucket 1 is the constant 0.5.

    Accuracy is the share of held-out rows predicted within `tolerance`
    percentage points. All buckets share one seeded split.
    """
    if len(attributes) != len(tries):
        raise ValueError("attributes and tries must be aligned")
    if len(attributes) < 20:
        raise ValueError("need at least 20 rows")
    params = params or GbrtParams(seed=seed)
    X = np.array([a.as_vector() for a in attributes])
    Y = np.array([t.as_tuple() for t in tries])
    train, test = train_test_split(len(X), test_fraction, seed)
    models, accs = [], []
    for b in BUCKETS:
        model = train_gbrt(X[train], Y[train, b - 1], params)
        models.append(model)
        accs.append(within_tolerance(model.predict(X[test]), Y[test, b - 1], tolerance))
    return DistributionPredictor(tuple(models), tuple(accs), (len(test),) * len(BUCKETS),
                                 tolerance=tolerance)


def predict_distribution(predictor: DistributionPredictor,
                         attributes: WordAttributes) -> TryDistribution:
    return distribution_from_raw(predictor.raw(attributes))


# serialization

def _tree_to_dict(tree: RegressionTree) -> list[dict]:
    return [asdict(n) for n in tree.nodes]


def _model_to_dict(m: GbrtModel) -> dict:
    return {"base_score": m.base_score, "trees": [_tree_to_dict(t) for t in m.trees]}


def _model_from_dict(d: dict, params: GbrtParams) -> GbrtModel:
    trees = tuple(RegressionTree(tuple(Node(**n) for n in t)) for t in d["trees"])
    return GbrtModel(d["base_score"], trees, params)


def dumps_predictor(p: DistributionPredictor) -> str:
    doc = {
        "format": FORMAT, "version": FORMAT_VERSION, "features": list(FEATURES),
        "params": asdict(p.models[0].params) if p.models else None,
        "one_try_constant": p.one_try_constant, "tolerance": p.tolerance,
        "buckets": [{"bucket": b, "accuracy": a, "test_size": n, "model": _model_to_dict(m)}
                    for b, a, n, m in zip(BUCKETS, p.accuracies, p.test_sizes, p.models)],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads_predictor(text: str) -> DistributionPredictor:
    doc = json.loads(text)
    if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
        raise ValueError("not a supported gbrt model file")
    params = GbrtParams(**doc["params"])
    buckets = doc["buckets"]
    return DistributionPredictor(
        models=tuple(_model_from_dict(b["model"], params) for b in buckets),
        accuracies=tuple(b["accuracy"] for b in buckets),
        test_sizes=tuple(b["test_size"] for b in buckets),
        one_try_constant=doc["one_try_constant"], tolerance=doc["tolerance"])


def save_predictor(p: DistributionPredictor, path: str | Path) -> None:
    Path(path).write_text(dumps_predictor(p), encoding="utf-8")


def load_predictor(path: str | Path) -> DistributionPredictor:
    return loads_predictor(Path(path).read_text(encoding="utf-8"))
