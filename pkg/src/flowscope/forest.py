"""Gini decision trees and a seven-tree forest trained with a fold-rotation
protocol: a stratified 30% test reservation, the rest dealt into seven
stratified folds, tree k fitted on six folds and validated on fold k.

Binary target: ``non_atomic`` (class 1) versus ``other`` (class 0). Leaf
count arrays are ordered ``[non_atomic, other]``.
"""

from __future__ import annotations

import hashlib
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ForestFormatError, InsufficientData, SingleClassData
from .features import FEATURE_NAMES, FeatureVector

NON_ATOMIC = "non_atomic"
OTHER = "other"

N_TREES = 7
TEST_FRACTION = 0.3
MAX_DEPTH = 6
MIN_SAMPLES_LEAF = 2
MAX_FEATURES = math.ceil(math.sqrt(len(FEATURE_NAMES)))
FORMAT = "flowscope-forest"
FORMAT_VERSION = 1


@dataclass
class Node:
    counts: tuple[int, int]
    feature: int | None = None
    threshold: float | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    @property
    def label(self) -> int:
        return 1 if self.counts[0] > self.counts[1] else 0

    def to_dict(self) -> dict:
        d = {"counts": list(self.counts)}
        if not self.is_leaf:
            d.update(feature=self.feature, threshold=self.threshold,
                     left=self.left.to_dict(), right=self.right.to_dict())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Node":
        counts = tuple(int(c) for c in d["counts"])
        if len(counts) != 2 or sum(counts) == 0:
            raise ForestFormatError("node counts must be a nonempty pair")
        if "feature" not in d:
            return cls(counts)
        thr = float(d["threshold"])
        if not math.isfinite(thr):
            raise ForestFormatError("split threshold must be finite")
        return cls(counts, int(d["feature"]), thr, cls.from_dict(d["left"]), cls.from_dict(d["right"]))


@dataclass
class DecisionTree:
    root: Node
    importances: np.ndarray  # raw weighted impurity decrease per feature
    max_depth: int = MAX_DEPTH

    def predict_one(self, x) -> int:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.label

    def predict(self, X) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.asarray(X, dtype=float)], dtype=int)

    def depth(self) -> int:
        def walk(n: Node) -> int:
            return 0 if n.is_leaf else 1 + max(walk(n.left), walk(n.right))
        return walk(self.root)


def _gini(pos: int, n: int) -> float:
    p = pos / n
    return 2.0 * p * (1.0 - p)


def _best_split_on(values: np.ndarray, y: np.ndarray, min_leaf: int):
    """Lowest weighted Gini over midpoint cuts of one feature.

    Returns (weighted_gini, threshold, n_left, pos_left) or None.
    """
    n = len(values)
    order = np.argsort(values, kind="stable")
    vs = values[order]
    cpos = np.cumsum(y[order])
    total_pos = int(cpos[-1])
    i = np.arange(1, n)  # size of the left part
    valid = (vs[:-1] < vs[1:]) & (i >= min_leaf) & (n - i >= min_leaf)
    if not valid.any():
        return None
    lp = cpos[:-1].astype(float)
    rp = total_pos - lp
    nl = i.astype(float)
    nr = n - nl
    weighted = (2.0 * lp * (nl - lp) / nl + 2.0 * rp * (nr - rp) / nr) / n
    weighted = np.where(valid, weighted, np.inf)
    k = int(np.argmin(weighted))
    lo, hi = float(vs[k]), float(vs[k + 1])
    thr = lo + (hi - lo) / 2.0
    if not lo <= thr < hi:
        thr = lo
    return float(weighted[k]), thr, k + 1, int(cpos[k])


def fit_tree(X: np.ndarray, y: np.ndarray, rng: np.random.Generator, max_depth: int = MAX_DEPTH,
             min_samples_leaf: int = MIN_SAMPLES_LEAF, max_features: int = MAX_FEATURES) -> DecisionTree:
    n_total, n_features = X.shape
    importances = np.zeros(n_features)

    def grow(idx: np.ndarray, depth: int) -> Node:
        n = len(idx)
        yi = y[idx]
        pos = int(yi.sum())
        node = Node((pos, n - pos))
        if depth >= max_depth or pos == 0 or pos == n or n < 2 * min_samples_leaf:
            return node
        parent = _gini(pos, n)
        best = None
        visited = 0
        # Draw features until max_features non-constant ones have been examined.
        for f in rng.permutation(n_features):
            if visited >= max_features:
                break
            col = X[idx, f]
            if col.min() == col.max():
                continue
            visited += 1
            found = _best_split_on(col, yi, min_samples_leaf)
            if found is not None and (best is None or found[0] < best[0]):
                best = (found[0], int(f), found[1])
        if best is None or not best[0] < parent:
            return node
        w, f, thr = best
        go_left = X[idx, f] <= thr
        li, ri = idx[go_left], idx[~go_left]
        importances[f] += (n * parent - len(li) * _gini(int(y[li].sum()), len(li))
                           - len(ri) * _gini(int(y[ri].sum()), len(ri))) / n_total
        node.feature, node.threshold = f, thr
        node.left = grow(li, depth + 1)
        node.right = grow(ri, depth + 1)
        return node

    root = grow(np.arange(n_total), 0)
    return DecisionTree(root, importances, max_depth)


@dataclass(frozen=True)
class Prediction:
    label: str
    votes: int  # trees agreeing with the returned label


@dataclass
class Forest:
    trees: list[DecisionTree]
    seed: int
    validation_accuracy: list[float] = field(default_factory=list)
    test_accuracy: float | None = None
    test_vote_counts: list[int] = field(default_factory=list)
    hyperparameters: dict = field(default_factory=dict)

    def votes(self, x) -> int:
        """Number of trees voting non_atomic."""
        x = _as_row(x)
        return sum(t.predict_one(x) for t in self.trees)

    def predict(self, x) -> Prediction:
        v = self.votes(x)
        n = len(self.trees)
        if 2 * v > n:
            return Prediction(NON_ATOMIC, v)
        return Prediction(OTHER, n - v)

    def predict_many(self, X) -> list[Prediction]:
        return [self.predict(row) for row in np.asarray(X, dtype=float)]

    @property
    def validation_std(self) -> float:
        return float(np.std(self.validation_accuracy)) if self.validation_accuracy else 0.0

    @property
    def unanimous_fraction(self) -> float | None:
        if not self.test_vote_counts:
            return None
        return sum(1 for v in self.test_vote_counts if v == len(self.trees)) / len(self.test_vote_counts)

    def to_dict(self) -> dict:
        return {
            "format": FORMAT,
            "version": FORMAT_VERSION,
            "seed": self.seed,
            "feature_names": list(FEATURE_NAMES),
            "classes": [NON_ATOMIC, OTHER],
            "hyperparameters": self.hyperparameters,
            "validation_accuracy": self.validation_accuracy,
            "test_accuracy": self.test_accuracy,
            "test_vote_counts": self.test_vote_counts,
            "trees": [
                {"max_depth": t.max_depth, "importances": [float(v) for v in t.importances],
                 "root": t.root.to_dict()}
                for t in self.trees
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def digest(self) -> str:
        return hashlib.sha256(self.to_json().encode()).hexdigest()

    @classmethod
    def from_dict(cls, d: dict) -> "Forest":
        if d.get("format") != FORMAT or d.get("version") != FORMAT_VERSION:
            raise ForestFormatError(f"unsupported forest format {d.get('format')!r} v{d.get('version')!r}")
        trees = [DecisionTree(Node.from_dict(t["root"]), np.array(t["importances"], dtype=float),
                              int(t["max_depth"])) for t in d["trees"]]
        if len(trees) % 2 == 0:
            raise ForestFormatError("forest must have an odd number of trees")
        return cls(trees, int(d["seed"]), list(d.get("validation_accuracy", [])), d.get("test_accuracy"),
                   list(d.get("test_vote_counts", [])), dict(d.get("hyperparameters", {})))

    @classmethod
    def from_json(cls, text: str) -> "Forest":
        try:
            return cls.from_dict(json.loads(text))
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ForestFormatError):
                raise
            raise ForestFormatError(f"malformed forest file: {exc}") from None


def _as_row(x) -> np.ndarray:
    if isinstance(x, FeatureVector):
        return x.as_array()
    return np.asarray(x, dtype=float)


def _as_matrix(vectors) -> np.ndarray:
    rows = [_as_row(v) for v in vectors]
    X = np.array(rows, dtype=float).reshape(len(rows), -1)
    return X


def _as_target(labels) -> np.ndarray:
    out = []
    for lab in labels:
        if isinstance(lab, str):
            out.append(1 if lab == NON_ATOMIC else 0)
        else:
            out.append(1 if lab else 0)
    return np.array(out, dtype=int)


def stratified_split(y: np.ndarray, rng: np.random.Generator, test_fraction: float = TEST_FRACTION,
                     n_folds: int = N_TREES) -> tuple[np.ndarray, list[np.ndarray]]:
    """Test indices plus ``n_folds`` fold index arrays, class proportions preserved in each."""
    test, rest = [], []
    for c in (1, 0):
        idx = rng.permutation(np.flatnonzero(y == c))
        k = int(math.floor(test_fraction * len(idx) + 0.5))
        test.extend(idx[:k].tolist())
        rest.extend(idx[k:].tolist())
    # rest is grouped by class; dealing it round-robin stratifies the folds
    folds = [np.array(sorted(rest[i::n_folds]), dtype=int) for i in range(n_folds)]
    return np.array(sorted(test), dtype=int), folds


def train_forest(vectors, labels, seed: int, *, n_trees: int = N_TREES, test_fraction: float = TEST_FRACTION,
                 max_depth: int = MAX_DEPTH, min_samples_leaf: int = MIN_SAMPLES_LEAF,
                 max_features: int = MAX_FEATURES, threads: int = 1) -> Forest:
    X = _as_matrix(vectors)
    y = _as_target(labels)
    if len(y) != len(X):
        raise ValueError("vectors and labels differ in length")
    if len(y) < 2 * n_trees:
        raise InsufficientData(f"need at least {2 * n_trees} labelled examples, got {len(y)}")
    if y.min() == y.max():
        raise SingleClassData("training data contains a single class")

    seq = np.random.SeedSequence(seed)
    split_seq, *tree_seqs = seq.spawn(n_trees + 1)
    test_idx, folds = stratified_split(y, np.random.default_rng(split_seq), test_fraction, n_trees)

    def fit_one(k: int):
        train_idx = np.concatenate([folds[j] for j in range(n_trees) if j != k])
        tree = fit_tree(X[train_idx], y[train_idx], np.random.default_rng(tree_seqs[k]),
                        max_depth, min_samples_leaf, max_features)
        val = folds[k]
        acc = float(np.mean(tree.predict(X[val]) == y[val])) if len(val) else float("nan")
        return tree, acc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            fitted = list(pool.map(fit_one, range(n_trees)))
    else:
        fitted = [fit_one(k) for k in range(n_trees)]

    forest = Forest(
        trees=[t for t, _ in fitted],
        seed=seed,
        validation_accuracy=[a for _, a in fitted],
        hyperparameters={"n_trees": n_trees, "test_fraction": test_fraction, "max_depth": max_depth,
                         "min_samples_leaf": min_samples_leaf, "max_features": max_features,
                         "criterion": "gini"},
    )
    if len(test_idx):
        preds = forest.predict_many(X[test_idx])
        hits = [(p.label == NON_ATOMIC) == bool(t) for p, t in zip(preds, y[test_idx])]
        forest.test_accuracy = sum(hits) / len(hits)
        forest.test_vote_counts = [p.votes for p in preds]
    return forest


def evaluate(forest: Forest, vectors, labels) -> float:
    X = _as_matrix(vectors)
    y = _as_target(labels)
    preds = forest.predict_many(X)
    return sum((p.label == NON_ATOMIC) == bool(t) for p, t in zip(preds, y)) / len(y)


def feature_importance(forest: Forest) -> dict[str, float]:
    """Mean normalised impurity decrease per feature, ranked descending."""
    per_tree = []
    for t in forest.trees:
        total = t.importances.sum()
        per_tree.append(t.importances / total if total > 0 else np.zeros_like(t.importances))
    mean = np.mean(per_tree, axis=0)
    if mean.sum() > 0:
        mean = mean / mean.sum()
    names = FEATURE_NAMES if len(mean) == len(FEATURE_NAMES) else [f"f{i}" for i in range(len(mean))]
    order = sorted(range(len(mean)), key=lambda i: (-mean[i], i))
    return {names[i]: float(mean[i]) for i in order}
