"""Decision-tree induction and a bagged random forest, from first principles.

Split quality is measured either by the entropy gain ratio

    ratio = (I(D) - sum_j |D^j|/|D| I(D^j)) / (- sum_j |D^j|/|D| log2 |D^j|/|D|)

or by the Gini gain

    g_gain = g(D) - |D^1|/|D| g(D^1) - |D^2|/|D| g(D^2).

Trees use binary threshold splits with candidate thresholds at midpoints
between consecutive distinct feature values; the forest bags bootstrap
samples and subsamples features at every split. Everything is deterministic
given a seed.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

DEFAULT_GRID = {"n_estimators": [10, 50, 100, 200], "criterion": ["gini", "entropy"]}
_CRITERIA = ("gini", "entropy")


# ---------------------------------------------------------------------------
# split criteria


def entropy(counts: Sequence[int]) -> float:
    """Shannon entropy (base 2) of a class-count vector; empty set -> 0."""
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total == 0:
        return 0.0
    p = c[c > 0] / total
    return float(-np.sum(p * np.log2(p)))


def gain_ratio(parent: Sequence[int], children: Sequence[Sequence[int]]) -> float:
    """Information gain of the split normalized by the split's own entropy.

    Requires at least two non-empty children (degenerate splits are never
    evaluated during induction)."""
    parent_c = np.asarray(parent, dtype=np.float64)
    total = parent_c.sum()
    sizes = [np.asarray(ch, dtype=np.float64).sum() for ch in children]
    nonempty = [s for s in sizes if s > 0]
    if len(nonempty) < 2:
        raise ValueError("degenerate split: need two non-empty children")
    info = entropy(parent) - sum(
        (s / total) * entropy(ch) for s, ch in zip(sizes, children) if s > 0
    )
    split_info = -sum((s / total) * np.log2(s / total) for s in nonempty)
    return float(info / split_info)


def gini(counts: Sequence[int]) -> float:
    """Gini impurity of a class-count vector; empty set -> 0."""
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    if total == 0:
        return 0.0
    p = c / total
    return float(np.sum(p * (1.0 - p)))


def gini_gain(parent: Sequence[int], d1: Sequence[int], d2: Sequence[int]) -> float:
    """Gini impurity reduction of a binary split."""
    total = np.asarray(parent, dtype=np.float64).sum()
    n1 = np.asarray(d1, dtype=np.float64).sum()
    n2 = np.asarray(d2, dtype=np.float64).sum()
    return gini(parent) - (n1 / total) * gini(d1) - (n2 / total) * gini(d2)


# ---------------------------------------------------------------------------
# decision tree


@dataclass
class TreeNode:
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    klass: int | None = None
    dist: tuple[int, ...] | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"class": self.klass, "dist": list(self.dist)}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "class" in d:
            return cls(klass=int(d["class"]), dist=tuple(int(v) for v in d["dist"]))
        return cls(
            feature=int(d["feature"]),
            threshold=float(d["threshold"]),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )


@dataclass
class DecisionTree:
    root: TreeNode
    criterion: str
    n_classes: int

    def predict_one(self, x: np.ndarray) -> int:
        node = self.root
        while not node.is_leaf:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node.klass

    def predict(self, X: np.ndarray) -> np.ndarray:
        return np.array([self.predict_one(row) for row in np.asarray(X, dtype=np.float64)])

    def depth(self) -> int:
        def walk(node: TreeNode) -> int:
            if node.is_leaf:
                return 0
            return 1 + max(walk(node.left), walk(node.right))

        return walk(self.root)

    def to_dict(self) -> dict:
        return {"criterion": self.criterion, "n_classes": self.n_classes, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        return cls(root=TreeNode.from_dict(d["root"]), criterion=d["criterion"], n_classes=int(d["n_classes"]))


def _entropy_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = counts / totals
        logs = np.where(p > 0, np.log2(np.where(p > 0, p, 1.0)), 0.0)
    return -np.sum(p * logs, axis=1)


def _gini_rows(counts: np.ndarray) -> np.ndarray:
    totals = counts.sum(axis=1, keepdims=True)
    p = counts / totals
    return 1.0 - np.sum(p * p, axis=1)


def _best_split_on_feature(x: np.ndarray, y: np.ndarray, n_classes: int, criterion: str,
                           min_samples_leaf: int):
    """Best (gain, threshold) for one feature column, or None if no valid cut."""
    order = np.argsort(x, kind="stable")
    xv = x[order]
    yv = y[order]
    n = len(xv)
    cut = np.nonzero(xv[1:] != xv[:-1])[0]  # split after position i
    if min_samples_leaf > 1:
        cut = cut[(cut + 1 >= min_samples_leaf) & (n - cut - 1 >= min_samples_leaf)]
    if len(cut) == 0:
        return None
    onehot = np.zeros((n, n_classes), dtype=np.float64)
    onehot[np.arange(n), yv] = 1.0
    cum = np.cumsum(onehot, axis=0)
    left = cum[cut]
    parent = cum[-1]
    right = parent[None, :] - left
    nl = (cut + 1).astype(np.float64)
    nr = n - nl
    if criterion == "gini":
        gains = _gini_rows(parent[None, :])[0] - (nl / n) * _gini_rows(left) - (nr / n) * _gini_rows(right)
    else:
        info = _entropy_rows(parent[None, :])[0] - (nl / n) * _entropy_rows(left) - (nr / n) * _entropy_rows(right)
        wl = nl / n
        wr = nr / n
        split_info = -(wl * np.log2(wl) + wr * np.log2(wr))
        gains = info / split_info
    best = int(np.argmax(gains))  # first index wins ties
    threshold = 0.5 * (xv[cut[best]] + xv[cut[best] + 1])
    return float(gains[best]), float(threshold)


def fit_tree(X: np.ndarray, y: np.ndarray, criterion: str = "gini",
             rng: np.random.Generator | None = None,
             features_per_split: int | None = None,
             min_samples_leaf: int = 1,
             max_depth: int | None = None) -> DecisionTree:
    """Greedy recursive induction with per-node feature subsampling.

    A node becomes a leaf when it is pure, hits the depth limit, or no valid
    candidate threshold exists (constant features / too few samples). When the
    subsampled features admit no cut but others do, the search widens so that
    consistent data is always fit exactly.
    """
    if criterion not in _CRITERIA:
        raise ValueError(f"criterion must be one of {_CRITERIA}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty dataset")
    n_classes = int(y.max()) + 1 if len(y) else 2
    n_classes = max(n_classes, 2)
    d = X.shape[1]
    m = d if features_per_split is None else max(1, min(features_per_split, d))
    rng = rng or np.random.default_rng(0)

    def build(idx: np.ndarray, depth: int) -> TreeNode:
        counts = np.bincount(y[idx], minlength=n_classes)
        klass = int(np.argmax(counts))  # ties go to the lower class index
        if counts.max() == counts.sum() or (max_depth is not None and depth >= max_depth):
            return TreeNode(klass=klass, dist=tuple(int(c) for c in counts))
        sampled = rng.choice(d, size=m, replace=False)
        rest = rng.permutation(np.setdiff1d(np.arange(d), sampled))
        best_gain = -1.0
        best_feature = None
        best_threshold = None
        for f in sampled:
            res = _best_split_on_feature(X[idx, f], y[idx], n_classes, criterion, min_samples_leaf)
            if res is not None and res[0] > best_gain:
                best_gain, best_threshold = res
                best_feature = int(f)
        if best_feature is None:
            for f in rest:  # widen only when the sample was unsplittable
                res = _best_split_on_feature(X[idx, f], y[idx], n_classes, criterion, min_samples_leaf)
                if res is not None:
                    best_gain, best_threshold = res
                    best_feature = int(f)
                    break
        if best_feature is None:
            return TreeNode(klass=klass, dist=tuple(int(c) for c in counts))
        go_left = X[idx, best_feature] <= best_threshold
        return TreeNode(
            feature=best_feature,
            threshold=best_threshold,
            left=build(idx[go_left], depth + 1),
            right=build(idx[~go_left], depth + 1),
        )

    return DecisionTree(root=build(np.arange(len(X)), 0), criterion=criterion, n_classes=n_classes)


# ---------------------------------------------------------------------------
# random forest


@dataclass
class RandomForestModel:
    trees: list[DecisionTree]
    n_estimators: int
    criterion: str
    features_per_split: int
    seed: int
    feature_names: list[str] = field(default_factory=list)  # columns the trees index
    excluded_features: list[str] = field(default_factory=lambda: ["avg_x"])
    metadata: dict = field(default_factory=dict)
    oob_accuracy: float | None = None

    def predict_matrix(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Majority vote per row; ties break toward class 0.

        Returns (classes, vote fraction for the winning class)."""
        X = np.asarray(X, dtype=np.float64)
        votes = np.stack([t.predict(X) for t in self.trees])  # (trees, rows)
        n_classes = max(t.n_classes for t in self.trees)
        out_class = np.empty(X.shape[0], dtype=np.int64)
        out_frac = np.empty(X.shape[0], dtype=np.float64)
        for i in range(X.shape[0]):
            counts = np.bincount(votes[:, i], minlength=n_classes)
            out_class[i] = int(np.argmax(counts))  # argmax takes the lowest on ties
            out_frac[i] = counts[out_class[i]] / len(self.trees)
        return out_class, out_frac

    def predict_row(self, row: dict) -> tuple[int, float]:
        try:
            x = np.array([[float(row[name]) for name in self.feature_names]])
        except KeyError as exc:
            raise ValueError(f"row is missing feature {exc.args[0]!r}") from exc
        classes, fracs = self.predict_matrix(x)
        return int(classes[0]), float(fracs[0])

    def to_json(self) -> str:
        doc = {
            "schema_version": 1,
            "n_estimators": self.n_estimators,
            "criterion": self.criterion,
            "features_per_split": self.features_per_split,
            "seed": self.seed,
            "feature_names": self.feature_names,
            "excluded_features": self.excluded_features,
            "metadata": self.metadata,
            "oob_accuracy": self.oob_accuracy,
            "trees": [t.to_dict() for t in self.trees],
        }
        return json.dumps(doc, sort_keys=True, indent=None, separators=(",", ":"))

    @classmethod
    def from_json(cls, text: str) -> "RandomForestModel":
        doc = json.loads(text)
        return cls(
            trees=[DecisionTree.from_dict(t) for t in doc["trees"]],
            n_estimators=int(doc["n_estimators"]),
            criterion=doc["criterion"],
            features_per_split=int(doc["features_per_split"]),
            seed=int(doc["seed"]),
            feature_names=list(doc["feature_names"]),
            excluded_features=list(doc["excluded_features"]),
            metadata=doc.get("metadata", {}),
            oob_accuracy=doc.get("oob_accuracy"),
        )


def _tree_seeds(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def fit_forest(X: np.ndarray, y: np.ndarray, n_estimators: int = 100,
               criterion: str = "gini", seed: int = 0,
               feature_names: Sequence[str] | None = None,
               excluded_features: Sequence[str] = ("avg_x",),
               max_depth: int | None = None,
               min_samples_leaf: int = 1,
               compute_oob: bool = False) -> RandomForestModel:
    """Bag n_estimators trees on bootstrap samples of (X, y).

    When feature_names are given, excluded names are dropped from the usable
    columns; features_per_split defaults to floor(sqrt(#usable))."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty dataset")
    if feature_names is not None:
        if len(feature_names) != X.shape[1]:
            raise ValueError("feature_names length must match X columns")
        usable = [i for i, n in enumerate(feature_names) if n not in set(excluded_features)]
        used_names = [feature_names[i] for i in usable]
    else:
        usable = list(range(X.shape[1]))
        used_names = [f"f{i}" for i in usable]
    Xu = X[:, usable]
    mtry = max(1, int(np.floor(np.sqrt(len(usable)))))
    n = len(Xu)
    trees = []
    oob_votes = np.zeros((n, 2), dtype=np.int64) if compute_oob else None
    for rng in _tree_seeds(seed, n_estimators):
        boot = rng.integers(0, n, size=n)
        tree = fit_tree(Xu[boot], y[boot], criterion=criterion, rng=rng,
                        features_per_split=mtry, min_samples_leaf=min_samples_leaf,
                        max_depth=max_depth)
        trees.append(tree)
        if compute_oob:
            out = np.setdiff1d(np.arange(n), np.unique(boot))
            if len(out):
                preds = tree.predict(Xu[out])
                for row, p in zip(out, preds):
                    oob_votes[row, p] += 1
    oob_accuracy = None
    if compute_oob:
        seen = oob_votes.sum(axis=1) > 0
        if seen.any():
            oob_pred = np.argmax(oob_votes[seen], axis=1)
            oob_accuracy = float(np.mean(oob_pred == y[seen]))
    return RandomForestModel(
        trees=trees,
        n_estimators=n_estimators,
        criterion=criterion,
        features_per_split=mtry,
        seed=seed,
        feature_names=used_names,
        excluded_features=list(excluded_features),
        oob_accuracy=oob_accuracy,
    )


def predict(model: RandomForestModel, row) -> tuple[int, float]:
    """Majority-vote prediction for one row (mapping or array of used features)."""
    if isinstance(row, dict):
        return model.predict_row(row)
    classes, fracs = model.predict_matrix(np.atleast_2d(np.asarray(row, dtype=np.float64)))
    return int(classes[0]), float(fracs[0])


# ---------------------------------------------------------------------------
# evaluation and model selection


@dataclass(frozen=True)
class EvaluationReport:
    confusion: tuple[tuple[int, int], tuple[int, int]]  # rows true 0/1, cols pred 0/1
    accuracy: float
    false_positive_rate: float
    false_negative_rate: float

    def to_dict(self) -> dict:
        return {
            "confusion": [list(self.confusion[0]), list(self.confusion[1])],
            "accuracy": self.accuracy,
            "false_positive_rate": self.false_positive_rate,
            "false_negative_rate": self.false_negative_rate,
        }


def report_from_confusion(confusion) -> EvaluationReport:
    """Build the metrics report from a 2x2 confusion matrix, exactly."""
    (tn, fp), (fn, tp) = confusion
    tn, fp, fn, tp = int(tn), int(fp), int(fn), int(tp)
    total = tn + fp + fn + tp
    if total == 0:
        raise ValueError("empty test set")
    accuracy = Fraction(tn + tp, total)
    fpr = Fraction(fp, tn + fp) if tn + fp else Fraction(0)
    fnr = Fraction(fn, fn + tp) if fn + tp else Fraction(0)
    return EvaluationReport(
        confusion=((tn, fp), (fn, tp)),
        accuracy=float(accuracy),
        false_positive_rate=float(fpr),
        false_negative_rate=float(fnr),
    )


def evaluate(model: RandomForestModel, X: np.ndarray, y: np.ndarray) -> EvaluationReport:
    y = np.asarray(y, dtype=np.int64)
    if len(y) == 0:
        raise ValueError("empty test set")
    pred, _ = model.predict_matrix(X)
    tn = int(np.sum((y == 0) & (pred == 0)))
    fp = int(np.sum((y == 0) & (pred == 1)))
    fn = int(np.sum((y == 1) & (pred == 0)))
    tp = int(np.sum((y == 1) & (pred == 1)))
    return report_from_confusion(((tn, fp), (fn, tp)))


def stratified_folds(y: np.ndarray, k: int, seed: int, max_attempts: int = 3) -> list[np.ndarray]:
    """Class-balanced k-fold assignment; every fold's training part must see
    at least two classes, reseeding the shuffle up to max_attempts times."""
    y = np.asarray(y, dtype=np.int64)
    if len(y) < k:
        raise ValueError("fewer rows than folds")
    for attempt in range(max_attempts):
        rng = np.random.default_rng(np.random.SeedSequence((seed, attempt)))
        assignment = np.empty(len(y), dtype=np.int64)
        for cls in np.unique(y):
            idx = np.nonzero(y == cls)[0]
            idx = rng.permutation(idx)
            assignment[idx] = np.arange(len(idx)) % k
        folds = [np.nonzero(assignment == f)[0] for f in range(k)]
        ok = all(len(np.unique(y[np.concatenate([folds[j] for j in range(k) if j != f])])) >= 2
                 for f in range(k))
        if ok:
            return folds
    raise ValueError("could not stratify folds with two classes in every training part")


@dataclass(frozen=True)
class GridSearchResult:
    n_estimators: int
    criterion: str
    mean_accuracy: float
    table: list[dict]


def _cell_seed(seed: int, cell: int, fold: int) -> int:
    return int(np.random.SeedSequence((seed, cell, fold)).generate_state(1, np.uint64)[0])


def grid_search(X: np.ndarray, y: np.ndarray, grid: dict | None = None,
                k_folds: int = 5, seed: int = 0,
                feature_names: Sequence[str] | None = None,
                excluded_features: Sequence[str] = ("avg_x",)) -> GridSearchResult:
    """Exhaustive CV scoring of every grid cell; highest mean accuracy wins,
    ties broken by fewer estimators, then gini before entropy."""
    grid = grid or DEFAULT_GRID
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if feature_names is not None:
        keep = [i for i, n in enumerate(feature_names) if n not in set(excluded_features)]
        X = X[:, keep]
    folds = stratified_folds(y, k_folds, seed)
    cells = [(n, c) for n in grid["n_estimators"] for c in grid["criterion"]]
    table = []
    for ci, (n_est, crit) in enumerate(cells):
        accs = []
        for fi, fold in enumerate(folds):
            test_idx = fold
            train_idx = np.concatenate([folds[j] for j in range(k_folds) if j != fi])
            model = fit_forest(X[train_idx], y[train_idx], n_estimators=n_est,
                               criterion=crit, seed=_cell_seed(seed, ci, fi))
            accs.append(evaluate(model, X[test_idx], y[test_idx]).accuracy)
        table.append({
            "n_estimators": int(n_est),
            "criterion": crit,
            "fold_accuracies": [float(a) for a in accs],
            "mean_accuracy": float(np.mean(accs)),
        })
    ranked = sorted(
        range(len(cells)),
        key=lambda i: (-table[i]["mean_accuracy"], cells[i][0], _CRITERIA.index(cells[i][1])),
    )
    best = ranked[0]
    return GridSearchResult(
        n_estimators=cells[best][0],
        criterion=cells[best][1],
        mean_accuracy=table[best]["mean_accuracy"],
        table=table,
    )
