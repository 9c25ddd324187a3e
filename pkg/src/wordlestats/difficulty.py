"""Difficulty classes: k-means over try distributions, ANOVA, and a decision tree
that predicts the class from word attributes."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from .ingest import TRY_FIELDS
from .utils import train_test_split
from .word_attributes import WordAttributes

FEATURES = ("FREQ", "WIE", "NRE")
FORMAT = "wordlestats-tree"
FORMAT_VERSION = 1


class DifficultyLabel(enum.IntEnum):
    EASY = 0
    MODERATE = 1
    DIFFICULT = 2

    def __str__(self) -> str:
        return self.name.capitalize()


# ---------------------------------------------------------------- k-means

@dataclass(frozen=True)
class KMeansModel:
    k: int
    centers: np.ndarray
    assignments: np.ndarray
    sse: float
    sse_history: tuple[float, ...] = field(default=(), compare=False)
    n_iter: int = 0


def _sse(X, centers, labels) -> float:
    return float(np.sum((X - centers[labels]) ** 2))


def _assign(X, centers) -> np.ndarray:
    d2 = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    return np.argmin(d2, axis=1)  # ties -> lowest index


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int) -> KMeansModel:
    """Lloyd iterations from the given centers.

    An empty cluster is reseeded at the point farthest from its own center.
    """
    centers = np.array(centers, dtype=float)
    k = len(centers)
    labels = None
    history = []
    it = 0
    for it in range(1, max_iter + 1):
        new = _assign(X, centers)
        for j in range(k):
            if not np.any(new == j):
                dist = ((X - centers[new]) ** 2).sum(axis=1)
                counts = np.bincount(new, minlength=k)
                dist[counts[new] <= 1] = -1.0  # never empty another cluster
                far = int(np.argmax(dist))
                new[far] = j
        centers = np.array([X[new == j].mean(axis=0) for j in range(k)])
        history.append(_sse(X, centers, new))
        if labels is not None and np.array_equal(new, labels):
            labels = new
            break
        labels = new
    return KMeansModel(k=k, centers=centers, assignments=labels, sse=history[-1],
                       sse_history=tuple(history), n_iter=it)


def kmeans(rows, k: int, max_iter: int = 300, seed: int = 0,
           restarts: int = 10) -> KMeansModel:
    """Best-of-`restarts` Lloyd runs, each started from k distinct sample rows.

    Lowest SSE wins; ties go to the earliest restart.
    """
    X = np.asarray(rows, dtype=float)
    if k < 1 or max_iter < 1 or restarts < 1:
        raise ValueError("k, max_iter and restarts must be >= 1")
    distinct = np.unique(X, axis=0)
    if k > len(distinct):
        raise ValueError(f"k={k} exceeds the {len(distinct)} distinct rows")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(restarts):
        init = distinct[np.sort(rng.choice(len(distinct), size=k, replace=False))]
        model = lloyd(X, init, max_iter)
        if best is None or model.sse < best.sse:
            best = model
    return best


def elbow_curve(rows, k_max: int, seed: int = 0, restarts: int = 10,
                max_iter: int = 300) -> list[tuple[int, float]]:
    """Best SSE for k = 1..k_max.

    Besides the random restarts, each k is also started from the best k-1
    centers plus the worst-fit point, which keeps the curve non-increasing.
    """
    X = np.asarray(rows, dtype=float)
    if k_max > len(X):
        raise ValueError("k_max exceeds the number of rows")
    n_distinct = len(np.unique(X, axis=0))
    curve = []
    prev = None
    for k in range(1, k_max + 1):
        if k >= n_distinct:
            curve.append((k, 0.0))
            prev = None
            continue
        best = kmeans(X, k, max_iter=max_iter, seed=seed + k, restarts=restarts)
        if prev is not None:
            dist = ((X - prev.centers[prev.assignments]) ** 2).sum(axis=1)
            warm = lloyd(X, np.vstack([prev.centers, X[int(np.argmax(dist))]]), max_iter)
            if warm.sse < best.sse:
                best = warm
        curve.append((k, best.sse))
        prev = best
    return curve


def choose_elbow(curve: Sequence[tuple[int, float]]) -> int:
    """k whose (normalised) SSE lies farthest below the first-to-last chord."""
    ks = np.array([k for k, _ in curve], dtype=float)
    sse = np.array([s for _, s in curve], dtype=float)
    if len(ks) < 3 or sse[0] == sse[-1]:
        return int(ks[0])
    x = (ks - ks[0]) / (ks[-1] - ks[0])
    y = (sse - sse[-1]) / (sse[0] - sse[-1])
    # chord from (0, 1) to (1, 0): distance below it is proportional to 1 - x - y
    return int(ks[int(np.argmax(1 - x - y))])


# ---------------------------------------------------------------- ANOVA

@dataclass(frozen=True)
class AnovaRow:
    feature: str
    means: tuple[float, ...]
    stds: tuple[float, ...]
    sizes: tuple[int, ...]
    F: float | None
    p_value: float | None


def one_way_anova(groups: Sequence[Sequence[float]]) -> tuple[float | None, float | None]:
    groups = [np.asarray(g, dtype=float) for g in groups]
    if len(groups) < 2 or any(len(g) == 0 for g in groups):
        raise ValueError("need at least 2 non-empty groups")
    allv = np.concatenate(groups)
    n, k = len(allv), len(groups)
    if n <= k:
        raise ValueError("need more observations than groups")
    grand = allv.mean()
    between = sum(len(g) * (g.mean() - grand) ** 2 for g in groups)
    within = sum(float(((g - g.mean()) ** 2).sum()) for g in groups)
    if within == 0:
        if between == 0:
            return None, None
        return math.inf, 0.0
    F = (between / (k - 1)) / (within / (n - k))
    return float(F), float(stats.f.sf(F, k - 1, n - k))


def anova(rows, assignments, names: Sequence[str] = TRY_FIELDS) -> list[AnovaRow]:
    """Per-column one-way ANOVA of `rows` across clusters."""
    X = np.asarray(rows, dtype=float)
    a = np.asarray(assignments)
    clusters = sorted(set(a.tolist()))
    if len(clusters) < 2:
        raise ValueError("need at least 2 clusters")
    out = []
    for j, name in enumerate(names):
        groups = [X[a == c, j] for c in clusters]
        F, p = one_way_anova(groups)
        out.append(AnovaRow(
            feature=name,
            means=tuple(float(g.mean()) for g in groups),
            stds=tuple(float(g.std(ddof=1)) if len(g) > 1 else 0.0 for g in groups),
            sizes=tuple(len(g) for g in groups), F=F, p_value=p))
    return out


def expected_tries(center) -> float:
    c = np.asarray(center, dtype=float)
    return float(np.arange(1, len(c) + 1) @ c / c.sum())


def label_clusters(model: KMeansModel) -> dict[int, DifficultyLabel]:
    """Easy / Moderate / Difficult by increasing expected try count of the centers."""
    if model.k != 3:
        raise ValueError("labelling needs exactly 3 clusters")
    order = sorted(range(3), key=lambda j: (expected_tries(model.centers[j]), j))
    return {j: DifficultyLabel(rank) for rank, j in enumerate(order)}


# ---------------------------------------------------------------- decision tree

@dataclass(frozen=True)
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: int = -1
    right: int = -1
    label: int = 0
    counts: tuple[int, ...] = (0, 0, 0)

    @property
    def is_leaf(self) -> bool:
        return self.feature < 0


@dataclass(frozen=True)
class DecisionTreeClassifier:
    nodes: tuple[TreeNode, ...]
    feature_importances: tuple[float, ...]

    def predict_one(self, x) -> DifficultyLabel:
        i = 0
        while not self.nodes[i].is_leaf:
            n = self.nodes[i]
            i = n.left if x[n.feature] <= n.threshold else n.right
        return DifficultyLabel(self.nodes[i].label)

    def predict(self, X) -> np.ndarray:
        return np.array([int(self.predict_one(x)) for x in np.atleast_2d(X)])


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    recall: float
    precision: float
    f1: float


def _entropy(counts: np.ndarray) -> np.ndarray:
    counts = np.atleast_2d(counts).astype(float)
    tot = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = np.where(tot > 0, counts / tot, 0.0)
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -(p * logs).sum(axis=1)


def fit_tree(X, y, n_classes: int = 3, max_depth: int | None = None,
             min_samples_leaf: int = 1) -> DecisionTreeClassifier:
    """Top-down tree on entropy information gain.

    A node becomes a leaf when pure, at max_depth, or when no split has
    positive gain. Leaves carry the majority class (ties -> lowest label).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=int)
    n_total = len(y)
    if n_total == 0:
        raise ValueError("empty training set")
    onehot = np.eye(n_classes, dtype=int)[y]
    importance = np.zeros(X.shape[1])
    nodes: list = []

    def grow(idx, depth):
        me = len(nodes)
        nodes.append(None)
        counts = onehot[idx].sum(axis=0)
        label = int(np.argmax(counts))
        leaf = TreeNode(label=label, counts=tuple(int(c) for c in counts))
        if np.count_nonzero(counts) <= 1 or (max_depth is not None and depth >= max_depth):
            nodes[me] = leaf
            return me
        parent_h = float(_entropy(counts)[0])
        n = len(idx)
        best, best_gain = None, 1e-12
        for f in range(X.shape[1]):
            order = idx[np.argsort(X[idx, f], kind="stable")]
            xs = X[order, f]
            left = np.cumsum(onehot[order], axis=0)[:-1]
            nl = np.arange(1, n)
            ks = np.flatnonzero((xs[1:] > xs[:-1]) & (nl >= min_samples_leaf)
                                & (n - nl >= min_samples_leaf))
            if not len(ks):
                continue
            right = counts - left[ks]
            child = (nl[ks] * _entropy(left[ks]) + (n - nl[ks]) * _entropy(right)) / n
            gains = parent_h - child
            k = int(np.argmax(gains))
            if gains[k] > best_gain:
                best_gain = float(gains[k])
                best = (f, 0.5 * (xs[ks[k]] + xs[ks[k] + 1]))
        if best is None:
            nodes[me] = leaf
            return me
        f, thr = best
        importance[f] += n / n_total * best_gain
        mask = X[idx, f] <= thr
        lft = grow(idx[mask], depth + 1)
        rgt = grow(idx[~mask], depth + 1)
        nodes[me] = TreeNode(feature=f, threshold=float(thr), left=lft, right=rgt,
                             label=label, counts=leaf.counts)
        return me

    grow(np.arange(n_total), 0)
    total = importance.sum()
    imp = importance / total if total > 0 else importance
    return DecisionTreeClassifier(tuple(nodes), tuple(float(v) for v in imp))


def classification_metrics(y_true, y_pred) -> ClassificationMetrics:
    """Accuracy plus macro recall, precision and F1 over the classes that occur."""
    t = np.asarray(y_true, dtype=int)
    p = np.asarray(y_pred, dtype=int)
    if len(t) == 0:
        raise ValueError("no samples")
    classes = sorted(set(t.tolist()) | set(p.tolist()))
    rec, prec, f1 = [], [], []
    for c in classes:
        tp = np.sum((t == c) & (p == c))
        r = tp / np.sum(t == c) if np.any(t == c) else 0.0
        q = tp / np.sum(p == c) if np.any(p == c) else 0.0
        rec.append(r)
        prec.append(q)
        f1.append(2 * r * q / (r + q) if r + q > 0 else 0.0)
    return ClassificationMetrics(accuracy=float(np.mean(t == p)), recall=float(np.mean(rec)),
                                 precision=float(np.mean(prec)), f1=float(np.mean(f1)))


def train_tree_classifier(attributes: Sequence[WordAttributes],
                          labels: Sequence[DifficultyLabel], test_fraction: float = 0.30,
                          seed: int = 0, max_depth: int | None = None,
                          min_samples_leaf: int = 1):
    """Fit on a seeded train split; returns (tree, train metrics, test metrics)."""
    if len(attributes) != len(labels):
        raise ValueError("attributes and labels must be aligned")
    if len(attributes) < 20:
        raise ValueError("need at least 20 rows")
    X = np.array([a.as_vector() for a in attributes])
    y = np.array([int(v) for v in labels])
    train, test = train_test_split(len(X), test_fraction, seed)
    tree = fit_tree(X[train], y[train], max_depth=max_depth, min_samples_leaf=min_samples_leaf)
    return (tree,
            classification_metrics(y[train], tree.predict(X[train])),
            classification_metrics(y[test], tree.predict(X[test])))


def classify_word(tree: DecisionTreeClassifier, attributes: WordAttributes) -> DifficultyLabel:
    return tree.predict_one(attributes.as_vector())


def dumps_tree(tree: DecisionTreeClassifier) -> str:
    doc = {"format": FORMAT, "version": FORMAT_VERSION, "features": list(FEATURES),
           "labels": [str(v) for v in DifficultyLabel],
           "feature_importances": list(tree.feature_importances),
           "nodes": [{"feature": n.feature, "threshold": n.threshold, "left": n.left,
                      "right": n.right, "label": n.label, "counts": list(n.counts)}
                     for n in tree.nodes]}
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def loads_tree(text: str) -> DecisionTreeClassifier:
    doc = json.loads(text)
    if doc.get("format") != FORMAT or doc.get("version") != FORMAT_VERSION:
        raise ValueError("not a supported tree model file")
    nodes = tuple(TreeNode(feature=n["feature"], threshold=n["threshold"], left=n["left"],
                           right=n["right"], label=n["label"], counts=tuple(n["counts"]))
                  for n in doc["nodes"])
    return DecisionTreeClassifier(nodes, tuple(doc["feature_importances"]))


def save_tree(tree: DecisionTreeClassifier, path: str | Path) -> None:
    Path(path).write_text(dumps_tree(tree), encoding="utf-8")


def load_tree(path: str | Path) -> DecisionTreeClassifier:
    return loads_tree(Path(path).read_text(encoding="utf-8"))
