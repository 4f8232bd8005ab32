"""Tree ensembles built from scratch: random forest, second-order gradient
boosting, and isolation forest.

All trees share one node type. Classification nodes carry class counts,
boosted-tree leaves carry Newton-step weights, isolation leaves carry training
sample counts. Every node also stores its training-mean prediction so path
attributions telescope exactly (see evalx.tree_path_attribution). Prediction
runs over a flattened array form of each tree, one vectorized level at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DataError, NumericError
from .tabular import RngStream


@dataclass
class TreeNode:
    """Internal (feature, threshold: go left iff value <= threshold) or leaf."""

    feature: int | None = None
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0  # leaf payload: class-1 share / boosted weight
    counts: np.ndarray | None = None  # classification trees: class counts
    n_samples: int = 0
    mean: float = 0.0  # training-mean prediction at this node

    @property
    def is_leaf(self) -> bool:
        return self.feature is None


class _FlatTree:
    """Array form of a tree for vectorized batch traversal."""

    def __init__(self, root: TreeNode, leaf_value):
        nodes = []

        def walk(node, depth):
            idx = len(nodes)
            nodes.append(None)
            if node.is_leaf:
                nodes[idx] = (-1, 0.0, -1, -1, leaf_value(node, depth))
            else:
                li = walk(node.left, depth + 1)
                ri = walk(node.right, depth + 1)
                nodes[idx] = (node.feature, node.threshold, li, ri, 0.0)
            return idx

        walk(root, 0)
        arr = np.array(nodes, dtype=np.float64)
        self.feature = arr[:, 0].astype(np.int64)
        self.threshold = arr[:, 1]
        self.left = arr[:, 2].astype(np.int64)
        self.right = arr[:, 3].astype(np.int64)
        self.value = arr[:, 4]

    def apply(self, X: np.ndarray) -> np.ndarray:
        n = X.shape[0]
        pos = np.zeros(n, dtype=np.int64)
        rows = np.arange(n)
        while True:
            feat = self.feature[pos]
            internal = feat >= 0
            if not internal.any():
                break
            xv = X[rows, np.maximum(feat, 0)]
            nxt = np.where(xv <= self.threshold[pos], self.left[pos], self.right[pos])
            pos = np.where(internal, nxt, pos)
        return self.value[pos]


def _check_width(X: np.ndarray, expected: int) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != expected:
        raise DataError(f"feature width {X.shape[1] if X.ndim == 2 else X.shape} does not match training width {expected}")
    return X


# -- random forest -------------------------------------------------------------


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_split: int = 2
    max_features: int | None = None  # default ceil(sqrt(d))


def _gini_best_split(X, y, idx, feature_indices):
    """Minimum weighted Gini over midpoint thresholds of the given features.

    Returns (feature, threshold, weighted_gini) or None when no feature varies.
    Ties resolve to the lower feature index, then the lower threshold.
    """
    best = None
    n = len(idx)
    total1 = int(y[idx].sum())
    for f in sorted(feature_indices):
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        sy = y[idx][order]
        cut = np.flatnonzero(sv[:-1] != sv[1:])
        if len(cut) == 0:
            continue
        c1 = np.cumsum(sy)[cut]
        nl = cut + 1.0
        nr = n - nl
        c1r = total1 - c1
        gl = 1.0 - (c1 / nl) ** 2 - ((nl - c1) / nl) ** 2
        gr = 1.0 - (c1r / nr) ** 2 - ((nr - c1r) / nr) ** 2
        weighted = (nl * gl + nr * gr) / n
        j = int(np.argmin(weighted))
        if best is None or weighted[j] < best[2]:
            thr = (sv[cut[j]] + sv[cut[j] + 1]) / 2.0
            best = (f, float(thr), float(weighted[j]))
    return best


def _grow_classification_tree(X, y, idx, depth, config, m, rng):
    counts = np.array([float((y[idx] == 0).sum()), float((y[idx] == 1).sum())])
    node = TreeNode(counts=counts, n_samples=len(idx), mean=counts[1] / len(idx), value=counts[1] / len(idx))
    pure = counts[0] == 0 or counts[1] == 0
    if pure or depth >= config.max_depth or len(idx) < config.min_samples_split:
        return node
    d = X.shape[1]
    feats = rng.choice(d, size=m, replace=False)
    best = _gini_best_split(X, y, idx, feats)
    if best is None:
        return node
    f, thr, _ = best
    mask = X[idx, f] <= thr
    node.feature = int(f)
    node.threshold = thr
    node.left = _grow_classification_tree(X, y, idx[mask], depth + 1, config, m, rng)
    node.right = _grow_classification_tree(X, y, idx[~mask], depth + 1, config, m, rng)
    return node


@dataclass
class RandomForestModel:
    trees: list
    n_features: int
    config: ForestConfig
    classes: tuple = (0, 1)
    _flat: list = field(default_factory=list, repr=False)

    def _flat_trees(self):
        if not self._flat:
            self._flat = [_FlatTree(t, lambda node, depth: node.counts[1] / node.counts.sum()) for t in self.trees]
        return self._flat

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = _check_width(X, self.n_features)
        p1 = np.zeros(X.shape[0])
        for flat in self._flat_trees():
            p1 += flat.apply(X)
        p1 /= len(self.trees)
        return np.column_stack([1.0 - p1, p1])


def fit_random_forest(X, y, config: ForestConfig | None = None, rng: RngStream | None = None) -> RandomForestModel:
    """Bootstrap ensemble of Gini trees, ceil(sqrt(d)) random features per node.

    Per-tree randomness derives from the tree index, so the fitted model does
    not depend on fitting order.
    """
    config = config or ForestConfig()
    rng = rng or RngStream(0, "forest")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = X.shape
    if n < 2:
        raise DataError(f"need at least 2 rows, got {n}")
    if len(np.unique(y)) < 2:
        raise DataError("labels contain a single class; cannot fit a classifier")
    m = config.max_features or math.ceil(math.sqrt(d))
    m = min(m, d)
    trees = []
    for t in range(config.n_trees):
        tr = rng.child(f"tree/{t}")
        boot = tr.integers(0, n, size=n)
        trees.append(_grow_classification_tree(X, y, boot, 0, config, m, tr))
    return RandomForestModel(trees=trees, n_features=d, config=config)


# -- gradient boosting -----------------------------------------------------------


@dataclass
class BoostConfig:
    learning_rate: float = 0.1
    n_rounds: int = 200
    max_depth: int = 3
    lam: float = 1.0  # L2 penalty on leaf weights
    gamma: float = 0.0  # minimum split gain
    subsample: float = 0.8
    early_stopping_rounds: int = 10


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _logloss(y, p):
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _boost_best_split(X, g, h, idx, lam, gamma):
    """Maximum second-order gain split.

    gain = 1/2 [GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)] - gamma,
    over midpoint thresholds; splits with gain <= 0 are refused.
    """
    G = g[idx].sum()
    H = h[idx].sum()
    parent = G * G / (H + lam)
    best = None
    for f in range(X.shape[1]):
        v = X[idx, f]
        order = np.argsort(v, kind="stable")
        sv = v[order]
        sg = g[idx][order]
        sh = h[idx][order]
        cut = np.flatnonzero(sv[:-1] != sv[1:])
        if len(cut) == 0:
            continue
        GL = np.cumsum(sg)[cut]
        HL = np.cumsum(sh)[cut]
        GR = G - GL
        HR = H - HL
        gain = 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - parent) - gamma
        j = int(np.argmax(gain))
        if gain[j] > 0.0 and (best is None or gain[j] > best[2]):
            thr = (sv[cut[j]] + sv[cut[j] + 1]) / 2.0
            best = (f, float(thr), float(gain[j]))
    return best


def _grow_boost_tree(X, g, h, idx, depth, config):
    node = TreeNode(n_samples=len(idx))
    if depth < config.max_depth and len(idx) >= 2:
        best = _boost_best_split(X, g, h, idx, config.lam, config.gamma)
        if best is not None:
            f, thr, _ = best
            mask = X[idx, f] <= thr
            node.feature = int(f)
            node.threshold = thr
            node.left = _grow_boost_tree(X, g, h, idx[mask], depth + 1, config)
            node.right = _grow_boost_tree(X, g, h, idx[~mask], depth + 1, config)
            nl, nr = node.left.n_samples, node.right.n_samples
            node.mean = (nl * node.left.mean + nr * node.right.mean) / (nl + nr)
            return node
    node.value = float(-g[idx].sum() / (h[idx].sum() + config.lam))
    node.mean = node.value
    return node


@dataclass
class GradientBoostingModel:
    base_score: float
    trees: list
    best_iteration: int
    n_features: int
    config: BoostConfig
    val_losses: list = field(default_factory=list)
    _flat: list = field(default_factory=list, repr=False)

    def _flat_trees(self):
        if not self._flat:
            self._flat = [_FlatTree(t, lambda node, depth: node.value) for t in self.trees]
        return self._flat

    def predict_margin(self, X: np.ndarray) -> np.ndarray:
        X = _check_width(X, self.n_features)
        margin = np.full(X.shape[0], self.base_score)
        for flat in self._flat_trees()[: self.best_iteration]:
            margin += self.config.learning_rate * flat.apply(X)
        return margin

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        p1 = _sigmoid(self.predict_margin(X))
        return np.column_stack([1.0 - p1, p1])


def fit_gradient_boosting(X, y, config: BoostConfig | None = None, validation=None, rng: RngStream | None = None) -> GradientBoostingModel:
    """Boosted regression trees on logistic gradients with early stopping.

    Each round fits one tree to (g, h) = (p - y, p(1 - p)) on a row subsample,
    with Newton leaf weights -G/(H+lam). Training stops once validation logloss
    has not improved for early_stopping_rounds rounds; best_iteration marks the
    round with the lowest validation loss and prediction uses only those trees.
    """
    config = config or BoostConfig()
    rng = rng or RngStream(0, "boost")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n = X.shape[0]
    if len(np.unique(y)) < 2:
        raise DataError("labels contain a single class; cannot fit a classifier")
    if validation is None:
        raise DataError("gradient boosting requires a validation split for early stopping")
    X_val, y_val = validation
    X_val = np.asarray(X_val, dtype=np.float64)
    y_val = np.asarray(y_val, dtype=np.float64)
    if X_val.shape[0] == 0:
        raise DataError("validation split is empty")
    if len(np.unique(y_val)) < 2:
        raise DataError("validation labels contain a single class")

    prior = min(max(float(y.mean()), 1e-6), 1.0 - 1e-6)
    base = math.log(prior / (1.0 - prior))
    margins = np.full(n, base)
    val_margins = np.full(X_val.shape[0], base)

    trees = []
    val_losses = []
    best_loss = math.inf
    best_round = 0
    n_sub = max(1, int(math.floor(n * config.subsample + 0.5)))
    for t in range(config.n_rounds):
        p = _sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        rows = (
            np.arange(n)
            if config.subsample >= 1.0
            else rng.child(f"round/{t}").choice(n, size=n_sub, replace=False)
        )
        tree = _grow_boost_tree(X, g, h, rows, 0, config)
        trees.append(tree)
        flat = _FlatTree(tree, lambda node, depth: node.value)
        margins = margins + config.learning_rate * flat.apply(X)
        val_margins = val_margins + config.learning_rate * flat.apply(X_val)
        loss = _logloss(y_val, _sigmoid(val_margins))
        if not math.isfinite(loss):
            raise NumericError(f"non-finite validation loss at round {t + 1}")
        val_losses.append(loss)
        if loss < best_loss:
            best_loss = loss
            best_round = t + 1
        elif (t + 1) - best_round >= config.early_stopping_rounds:
            break
    return GradientBoostingModel(
        base_score=base,
        trees=trees,
        best_iteration=best_round,
        n_features=X.shape[1],
        config=config,
        val_losses=val_losses,
    )


def predict_proba(model, X) -> np.ndarray:
    """Class-probability pairs [p0, p1] for a forest or boosted model."""
    return model.predict_proba(np.asarray(X, dtype=np.float64))


# -- isolation forest --------------------------------------------------------------


def harmonic(n: int) -> float:
    """Exact n-th harmonic number by summation (H(0) = 0)."""
    return float(sum(1.0 / k for k in range(1, n + 1)))


@lru_cache(maxsize=None)
def average_path_length(m: int) -> float:
    """c(m) = 2 H(m-1) - 2 (m-1)/m, the normalizing expected path length."""
    if m <= 1:
        return 0.0
    return 2.0 * harmonic(m - 1) - 2.0 * (m - 1) / m


def _grow_isolation_tree(X, idx, depth, limit, rng):
    node = TreeNode(n_samples=len(idx))
    if depth >= limit or len(idx) <= 1:
        return node
    lo = X[idx].min(axis=0)
    hi = X[idx].max(axis=0)
    candidates = np.flatnonzero(hi > lo)
    if len(candidates) == 0:
        return node
    f = int(candidates[rng.integers(0, len(candidates))])
    thr = float(rng.uniform(lo[f], hi[f]))
    mask = X[idx, f] <= thr
    node.feature = f
    node.threshold = thr
    node.left = _grow_isolation_tree(X, idx[mask], depth + 1, limit, rng)
    node.right = _grow_isolation_tree(X, idx[~mask], depth + 1, limit, rng)
    return node


@dataclass
class IsolationForestModel:
    trees: list
    psi: int
    n_features: int
    _flat: list = field(default_factory=list, repr=False)

    @property
    def c_psi(self) -> float:
        return average_path_length(self.psi)

    def _flat_trees(self):
        if not self._flat:
            self._flat = [
                _FlatTree(t, lambda node, depth: depth + average_path_length(node.n_samples))
                for t in self.trees
            ]
        return self._flat


def fit_isolation_forest(X, n_trees: int = 100, psi: int = 256, rng: RngStream | None = None) -> IsolationForestModel:
    """Random-split trees on psi-subsamples, height-limited to ceil(log2 psi)."""
    rng = rng or RngStream(0, "iforest")
    X = np.asarray(X, dtype=np.float64)
    n = X.shape[0]
    if psi < 2:
        raise DataError(f"psi must be >= 2, got {psi}")
    if psi > n:
        raise DataError(f"psi={psi} exceeds the {n} available rows")
    limit = math.ceil(math.log2(psi))
    trees = []
    for t in range(n_trees):
        tr = rng.child(f"tree/{t}")
        idx = tr.choice(n, size=psi, replace=False)
        trees.append(_grow_isolation_tree(X, idx, 0, limit, tr))
    return IsolationForestModel(trees=trees, psi=psi, n_features=X.shape[1])


def iforest_score(model: IsolationForestModel, X) -> np.ndarray:
    """Anomaly scores 2^(-mean path length / c(psi)), in (0, 1)."""
    X = _check_width(X, model.n_features)
    total = np.zeros(X.shape[0])
    for flat in model._flat_trees():
        total += flat.apply(X)
    mean_h = total / len(model.trees)
    return np.power(2.0, -mean_h / model.c_psi)
