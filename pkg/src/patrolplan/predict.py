"""Random-forest hotspot classifier and hotspot maps."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .domain import NodeState
from .features import FeatureSet, build_features, undersample

MODEL_FORMAT = "patrolplan-forest"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 100
    max_depth: int = 12
    min_leaf: int = 2
    feature_subset_size: int | None = None  # default ceil(sqrt(d))
    bootstrap: bool = True

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1 or self.min_leaf < 1:
            raise ValueError("forest parameters must be positive")
        if self.feature_subset_size is not None and self.feature_subset_size < 1:
            raise ValueError("feature_subset_size must be positive")


@dataclass
class Tree:
    """Flat binary tree; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(len(X), dtype=int)
        while True:
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                return self.leaf_class[node]
            rows = np.flatnonzero(inner)
            go_left = X[rows, f[rows]] <= self.threshold[node[rows]]
            node[rows] = np.where(go_left, self.left[node[rows]], self.right[node[rows]])

    def to_dict(self) -> dict:
        return {"feature": self.feature.tolist(), "threshold": self.threshold.tolist(),
                "left": self.left.tolist(), "right": self.right.tolist(),
                "leaf_class": self.leaf_class.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Tree":
        return cls(np.array(d["feature"], dtype=int), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=int), np.array(d["right"], dtype=int),
                   np.array(d["leaf_class"], dtype=int))


def gini_split_cost(y_sorted: np.ndarray) -> np.ndarray:
    """Weighted Gini impurity ``n_l*G_l + n_r*G_r`` for every cut position 1..n-1."""
    n = len(y_sorted)
    pos_left = np.cumsum(y_sorted)[:-1].astype(float)
    n_left = np.arange(1, n, dtype=float)
    n_right = n - n_left
    pos_right = y_sorted.sum() - pos_left
    p_l = pos_left / n_left
    p_r = pos_right / n_right
    return n_left * 2 * p_l * (1 - p_l) + n_right * 2 * p_r * (1 - p_r)


def best_split(X, y, features, min_leaf):
    """Lowest-impurity (feature, threshold) among ``features`` or None."""
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        cost = gini_split_cost(y[order])
        n = len(xs)
        cut = np.arange(1, n)
        ok = (xs[:-1] < xs[1:]) & (cut >= min_leaf) & (n - cut >= min_leaf)
        if not ok.any():
            continue
        i = np.flatnonzero(ok)[np.argmin(cost[ok])]
        if best is None or cost[i] < best[0]:
            thr = 0.5 * (xs[i] + xs[i + 1])
            if not thr < xs[i + 1]:
                thr = xs[i]  # midpoint rounded up onto the upper value
            best = (cost[i], int(f), thr)
    return None if best is None else best[1:]


def _majority(y) -> int:
    # ties resolve to no-crime
    return int(2 * y.sum() > len(y))


def grow_tree(X, y, max_depth, min_leaf, n_sub, rng) -> Tree:
    feature, threshold, left, right, leaf = [], [], [], [], []

    def new_node():
        for lst, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (leaf, 0)):
            lst.append(v)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(len(y)), 0)]
    d = X.shape[1]
    while stack:
        node, idx, depth = stack.pop()
        ys = y[idx]
        leaf[node] = _majority(ys)
        if depth >= max_depth or ys.min() == ys.max() or len(idx) < 2 * min_leaf:
            continue
        feats = rng.choice(d, size=min(n_sub, d), replace=False)
        split = best_split(X[idx], ys, feats, min_leaf)
        if split is None:
            continue
        f, thr = split
        mask = X[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        left[node], right[node] = new_node(), new_node()
        stack.append((right[node], idx[~mask], depth + 1))
        stack.append((left[node], idx[mask], depth + 1))
    return Tree(np.array(feature), np.array(threshold), np.array(left), np.array(right), np.array(leaf))


@dataclass
class TreeEnsemble:
    trees: list
    n_features: int
    params: ForestParams = field(default_factory=ForestParams)
    bootstrap_seeds: list = field(default_factory=list)

    @property
    def n_trees(self) -> int:
        return len(self.trees)

    @property
    def max_depth(self) -> int:
        return self.params.max_depth

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return X

    def crime_fraction(self, X) -> np.ndarray:
        """Fraction of trees voting crime for each row."""
        X = self._check(X)
        votes = np.zeros(len(X))
        for t in self.trees:
            votes += t.predict(X)
        return votes / len(self.trees)

    def predict(self, X, threshold: float = 0.5) -> np.ndarray:
        return self.crime_fraction(X) >= threshold

    def save(self, path) -> None:
        doc = {"format": MODEL_FORMAT, "version": MODEL_VERSION, "n_features": self.n_features,
               "params": asdict(self.params), "bootstrap_seeds": [int(s) for s in self.bootstrap_seeds],
               "trees": [t.to_dict() for t in self.trees]}
        Path(path).write_text(json.dumps(doc))

    @classmethod
    def load(cls, path) -> "TreeEnsemble":
        doc = json.loads(Path(path).read_text())
        if doc.get("format") != MODEL_FORMAT or doc.get("version") != MODEL_VERSION:
            raise ValueError(f"{path}: not a {MODEL_FORMAT} v{MODEL_VERSION} file")
        return cls([Tree.from_dict(t) for t in doc["trees"]], doc["n_features"],
                   ForestParams(**doc["params"]), doc["bootstrap_seeds"])


def train(X, y, params: ForestParams = ForestParams(), seed: int = 0) -> TreeEnsemble:
    """Bagged Gini trees with a random feature subset at every split."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if len(y) == 0:
        raise ValueError("cannot train on zero rows")
    # canonical row order makes the model independent of input ordering
    order = np.lexsort(np.column_stack([X, y]).T[::-1])
    X, y = X[order], y[order]
    d = X.shape[1]
    n_sub = params.feature_subset_size or math.ceil(math.sqrt(d))
    seeds = np.random.default_rng(seed).integers(0, 2**63 - 1, size=params.n_trees)
    trees = []
    for s in seeds:
        rng = np.random.default_rng(s)
        boot = rng.integers(0, len(y), size=len(y)) if params.bootstrap else np.arange(len(y))
        trees.append(grow_tree(X[boot], y[boot], params.max_depth, params.min_leaf, n_sub, rng))
    return TreeEnsemble(trees, d, params, [int(s) for s in seeds])


def train_rows(fs: FeatureSet, params: ForestParams = ForestParams(), seed: int = 0) -> TreeEnsemble:
    return train(fs.X, fs.y, params, seed)


class DensityBaseline:
    """Hotspot iff the 7-day crime density is positive."""

    def __init__(self, n_features: int, column: int = 1):
        self.n_features = n_features
        self.column = column

    def crime_fraction(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        return (X[:, self.column] > 0).astype(float)


@dataclass
class HotspotMap:
    """Predicted state of every node for every slot of a period.

    ``hot[d, s, k]`` refers to day ``first_day + d`` of the scenario.
    """

    hot: np.ndarray
    first_day: int = 0

    @property
    def n_days(self) -> int:
        return self.hot.shape[0]

    def state(self, node: int, day: int, slot: int) -> NodeState:
        return NodeState.HOTSPOT if self.hot[day - self.first_day, slot, node] else NodeState.COLDSPOT

    def hot_nodes(self, day: int, slot: int) -> np.ndarray:
        d = day - self.first_day
        if not 0 <= d < self.n_days:
            raise KeyError(f"day {day} outside hotspot map")
        return self.hot[d, slot]

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["day", "slot", "node", "state"])
            for d, s, k in np.ndindex(*self.hot.shape):
                w.writerow([d + self.first_day, s, k, "hotspot" if self.hot[d, s, k] else "coldspot"])

    @classmethod
    def from_csv(cls, path) -> "HotspotMap":
        with Path(path).open(newline="", encoding="utf-8") as fh:
            rows = [(int(r["day"]), int(r["slot"]), int(r["node"]), r["state"] == "hotspot")
                    for r in csv.DictReader(fh)]
        arr = np.array([r[:3] for r in rows])
        first = int(arr[:, 0].min())
        hot = np.zeros(tuple(arr.max(axis=0) - [first, 0, 0] + 1), dtype=bool)
        for d, s, k, h in rows:
            hot[d - first, s, k] = h
        return cls(hot, first)


def predict_hotspots(model, fs: FeatureSet, vote_threshold: float = 0.5) -> HotspotMap:
    """Label each (day, slot, node) row of ``fs`` Hotspot iff the crime vote share >= threshold."""
    frac = model.crime_fraction(fs.X)
    first = int(fs.day.min())
    shape = (int(fs.day.max()) - first + 1, int(fs.slot.max()) + 1, int(fs.node.max()) + 1)
    hot = np.zeros(shape, dtype=bool)
    hot[fs.day - first, fs.slot, fs.node] = frac >= vote_threshold
    return HotspotMap(hot, first)


def confusion_metrics(y_true, y_pred) -> dict:
    y_true = np.asarray(y_true, dtype=bool)
    y_pred = np.asarray(y_pred, dtype=bool)
    tp = int((y_true & y_pred).sum())
    fp = int((~y_true & y_pred).sum())
    fn = int((y_true & ~y_pred).sum())
    tn = int((~y_true & ~y_pred).sum())
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return {"accuracy": (tp + tn) / len(y_true), "precision": precision, "recall": recall, "f1": f1,
            "tp": tp, "fp": fp, "fn": fn, "tn": tn}


def evaluate(model, fs: FeatureSet, vote_threshold: float = 0.5) -> dict:
    if len(fs) == 0:
        raise ValueError("held-out rows are empty")
    return confusion_metrics(fs.y, model.crime_fraction(fs.X) >= vote_threshold)


@dataclass
class Prediction:
    model: object
    hotspots: HotspotMap
    metrics: dict


def fit_predict(scenario, train_days, test_days, params: ForestParams = ForestParams(), seed: int = 0,
                vote_threshold: float = 0.5, predictor: str = "forest") -> Prediction:
    """Train on ``train_days`` (balanced) and label every node and slot of ``test_days``."""
    train_days, test_days = list(train_days), list(test_days)
    if not test_days:
        raise ValueError("test period is empty")
    if set(train_days) & set(test_days):
        raise ValueError("train and test periods overlap")
    test = build_features(scenario, days=test_days)
    if predictor == "density":
        model = DensityBaseline(test.X.shape[1])
    elif predictor == "forest":
        if not train_days:
            raise ValueError("training period is empty")
        train_fs = undersample(build_features(scenario, days=train_days), seed)
        model = train_rows(train_fs, params, seed)
    else:
        raise ValueError(f"unknown predictor {predictor!r}")
    return Prediction(model, predict_hotspots(model, test, vote_threshold), evaluate(model, test, vote_threshold))
