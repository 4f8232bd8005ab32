import math

import numpy as np
import pytest

from threatbench.errors import DataError
from threatbench.forest import (
    BoostConfig,
    ForestConfig,
    _gini_best_split,
    _logloss,
    _sigmoid,
    average_path_length,
    fit_gradient_boosting,
    fit_isolation_forest,
    fit_random_forest,
    harmonic,
    iforest_score,
    predict_proba,
)
from threatbench.tabular import RngStream


def exhaustive_gini(X, y, idx, features):
    """Brute-force minimum weighted Gini over all midpoint splits."""
    best = None
    n = len(idx)
    for f in sorted(features):
        vals = np.unique(X[idx, f])
        for a, b in zip(vals[:-1], vals[1:]):
            thr = (a + b) / 2.0
            left = idx[X[idx, f] <= thr]
            right = idx[X[idx, f] > thr]
            gini = 0.0
            for part in (left, right):
                p1 = (y[part] == 1).mean()
                gini += len(part) / n * (1.0 - p1**2 - (1.0 - p1) ** 2)
            if best is None or gini < best[2] - 1e-15:
                best = (f, thr, gini)
    return best


class TestRandomForest:
    def test_separable_one_dim_perfect_train_accuracy(self, np_rng):
        X = np_rng.normal(size=(200, 1))
        y = (X[:, 0] > 0).astype(int)
        model = fit_random_forest(X, y, ForestConfig(n_trees=30), RngStream(1, "rf"))
        preds = (model.predict_proba(X)[:, 1] >= 0.5).astype(int)
        assert np.array_equal(preds, y)

    def test_single_class_rejected(self):
        with pytest.raises(DataError, match="single class"):
            fit_random_forest(np.zeros((10, 2)), np.ones(10), ForestConfig(n_trees=2), RngStream(0, "rf"))

    def test_same_seed_identical_models(self, np_rng):
        X = np_rng.normal(size=(80, 3))
        y = (X[:, 0] + X[:, 1] > 0).astype(int)
        a = fit_random_forest(X, y, ForestConfig(n_trees=10), RngStream(4, "rf"))
        b = fit_random_forest(X, y, ForestConfig(n_trees=10), RngStream(4, "rf"))
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))

        def structure(node):
            if node.is_leaf:
                return ("leaf", tuple(node.counts))
            return (node.feature, node.threshold, structure(node.left), structure(node.right))

        assert [structure(t) for t in a.trees] == [structure(t) for t in b.trees]

    def test_per_tree_streams_derived_by_index(self, np_rng):
        # growing a larger forest must reproduce the smaller forest's trees
        X = np_rng.normal(size=(60, 3))
        y = (X[:, 2] > 0.2).astype(int)
        small = fit_random_forest(X, y, ForestConfig(n_trees=3), RngStream(8, "rf"))
        large = fit_random_forest(X, y, ForestConfig(n_trees=6), RngStream(8, "rf"))

        def structure(node):
            if node.is_leaf:
                return ("leaf", tuple(node.counts))
            return (node.feature, node.threshold, structure(node.left), structure(node.right))

        for t_small, t_large in zip(small.trees, large.trees):
            assert structure(t_small) == structure(t_large)

    def test_gini_oracle_small_datasets(self, np_rng):
        for _ in range(25):
            n = int(np_rng.integers(4, 64))
            d = int(np_rng.integers(1, 5))
            X = np.round(np_rng.normal(size=(n, d)), 1)  # force ties
            y = np_rng.integers(0, 2, size=n)
            if len(np.unique(y)) < 2:
                continue
            idx = np.arange(n)
            feats = list(range(d))
            got = _gini_best_split(X, y, idx, feats)
            want = exhaustive_gini(X, y, idx, feats)
            if want is None:
                assert got is None
                continue
            assert got is not None
            assert abs(got[2] - want[2]) <= 1e-12

    def test_all_trees_voting_one(self):
        X = np.array([[0.0], [0.1], [10.0], [10.1]])
        y = np.array([0, 0, 1, 1])
        model = fit_random_forest(X, y, ForestConfig(n_trees=15), RngStream(2, "rf"))
        assert model.predict_proba(np.array([[50.0]]))[0, 1] == 1.0

    def test_probability_bounds_sweep(self, np_rng):
        X = np_rng.normal(size=(150, 4))
        y = (X[:, 0] > 0).astype(int)
        model = fit_random_forest(X, y, ForestConfig(n_trees=10), RngStream(3, "rf"))
        P = predict_proba(model, np_rng.normal(size=(1000, 4)) * 3)
        assert (P >= 0.0).all() and (P <= 1.0).all()
        assert np.allclose(P.sum(axis=1), 1.0)

    def test_width_mismatch(self, np_rng):
        X = np_rng.normal(size=(40, 2))
        y = (X[:, 0] > 0).astype(int)
        model = fit_random_forest(X, y, ForestConfig(n_trees=3), RngStream(0, "rf"))
        with pytest.raises(DataError, match="width"):
            model.predict_proba(np.zeros((5, 3)))


class TestGradientBoosting:
    def test_symmetric_gradients_cancel(self):
        # depth-0 tree, lam=0, prior 0.5: G = 0 so the single leaf weight is 0
        X = np.array([[1.0], [2.0], [3.0], [4.0]])
        y = np.array([1, 1, 0, 0])
        cfg = BoostConfig(n_rounds=1, max_depth=0, lam=0.0, subsample=1.0, early_stopping_rounds=5)
        model = fit_gradient_boosting(X, y, cfg, validation=(X, y), rng=RngStream(0, "gb"))
        assert model.base_score == 0.0
        assert model.trees[0].is_leaf and model.trees[0].value == 0.0
        assert np.allclose(model.predict_margin(X), 0.0)

    def test_leaf_weights_closed_form(self):
        # perfect depth-1 split; hand-computed -G/(H+lam) per leaf
        X = np.array([[0.0], [0.0], [1.0], [1.0]])
        y = np.array([0, 0, 1, 1])
        cfg = BoostConfig(n_rounds=1, max_depth=1, lam=1.0, subsample=1.0)
        model = fit_gradient_boosting(X, y, cfg, validation=(X, y), rng=RngStream(0, "gb"))
        tree = model.trees[0]
        # prior 0.5 -> p=0.5 everywhere: g = +-0.5, h = 0.25
        # left leaf: G = 1.0, H = 0.5 -> w = -1/1.5; right: G = -1.0 -> w = +1/1.5
        assert tree.feature == 0
        assert math.isclose(tree.left.value, -1.0 / 1.5, rel_tol=0, abs_tol=1e-12)
        assert math.isclose(tree.right.value, 1.0 / 1.5, rel_tol=0, abs_tol=1e-12)

    def test_gain_refused_when_nonpositive(self, np_rng):
        # pure-noise labels with a huge gamma: every split refused, trees are stumps
        X = np_rng.normal(size=(50, 2))
        y = np_rng.integers(0, 2, size=50)
        if len(np.unique(y)) < 2:
            y[0] = 1 - y[0]
        cfg = BoostConfig(n_rounds=3, gamma=1e9, subsample=1.0)
        model = fit_gradient_boosting(X, y, cfg, validation=(X, y), rng=RngStream(1, "gb"))
        assert all(t.is_leaf for t in model.trees)

    def test_early_stopping_records_best_round(self, np_rng):
        # inverted validation labels: validation loss rises from round 1,
        # so training stops after patience extra rounds
        X = np_rng.normal(size=(120, 2))
        y = (X[:, 0] > 0).astype(int)
        Xv = np_rng.normal(size=(40, 2))
        yv = (Xv[:, 0] <= 0).astype(int)
        cfg = BoostConfig(n_rounds=50, subsample=1.0, early_stopping_rounds=4)
        model = fit_gradient_boosting(X, y, cfg, validation=(Xv, yv), rng=RngStream(2, "gb"))
        assert model.best_iteration == 1
        assert len(model.val_losses) == model.best_iteration + cfg.early_stopping_rounds
        assert model.val_losses[model.best_iteration - 1] == min(model.val_losses)

    def test_best_iteration_is_argmin(self, np_rng):
        X = np_rng.normal(size=(200, 3))
        y = ((X[:, 0] + 0.3 * np_rng.normal(size=200)) > 0).astype(int)
        Xv = np_rng.normal(size=(60, 3))
        yv = ((Xv[:, 0] + 0.3 * np_rng.normal(size=60)) > 0).astype(int)
        cfg = BoostConfig(n_rounds=40, early_stopping_rounds=5)
        model = fit_gradient_boosting(X, y, cfg, validation=(Xv, yv), rng=RngStream(3, "gb"))
        assert model.val_losses.index(min(model.val_losses)) + 1 == model.best_iteration

    def test_training_loss_descent_full_batch(self, np_rng):
        X = np_rng.normal(size=(150, 3))
        y = ((X[:, 0] - X[:, 1]) > 0).astype(int)
        cfg = BoostConfig(n_rounds=25, subsample=1.0, gamma=0.0, early_stopping_rounds=25)
        model = fit_gradient_boosting(X, y, cfg, validation=(X, y), rng=RngStream(5, "gb"))
        losses = []
        for k in range(1, len(model.trees) + 1):
            model.best_iteration = k
            losses.append(_logloss(y, _sigmoid(model.predict_margin(X))))
        for prev, nxt in zip(losses[:-1], losses[1:]):
            assert nxt <= prev + 1e-12

    def test_zero_trees_predicts_prior(self, np_rng):
        X = np_rng.normal(size=(40, 2))
        y = np.array([0, 1] * 20)
        cfg = BoostConfig(n_rounds=1, subsample=1.0)
        model = fit_gradient_boosting(X, y, cfg, validation=(X, y), rng=RngStream(0, "gb"))
        model.best_iteration = 0
        p = model.predict_proba(X)[:, 1]
        assert np.allclose(p, _sigmoid(model.base_score))

    def test_missing_validation_rejected(self, np_rng):
        X = np_rng.normal(size=(20, 2))
        y = np.array([0, 1] * 10)
        with pytest.raises(DataError, match="validation"):
            fit_gradient_boosting(X, y, BoostConfig(), validation=None, rng=RngStream(0, "gb"))

    def test_single_class_rejected(self):
        X = np.zeros((10, 1))
        with pytest.raises(DataError, match="single class"):
            fit_gradient_boosting(X, np.ones(10), BoostConfig(), validation=(X, np.ones(10)), rng=RngStream(0, "gb"))


class TestIsolationForest:
    def test_exact_harmonic_normalizer(self):
        assert average_path_length(2) == 1.0
        # oracle: straight summation
        m = 256
        oracle = 2.0 * sum(1.0 / k for k in range(1, m)) - 2.0 * (m - 1) / m
        assert average_path_length(256) == oracle
        assert abs(oracle - 10.248689925634562) < 1e-12
        assert harmonic(0) == 0.0 and harmonic(1) == 1.0

    def test_c_monotone_increasing(self):
        values = [average_path_length(m) for m in range(2, 600)]
        assert all(b > a for a, b in zip(values[:-1], values[1:]))

    def test_scores_in_unit_interval_and_repeatable(self, np_rng):
        X = np_rng.normal(size=(300, 3))
        model = fit_isolation_forest(X, 50, 128, RngStream(6, "if"))
        s1 = iforest_score(model, X)
        s2 = iforest_score(model, X)
        assert np.array_equal(s1, s2)
        assert (s1 > 0).all() and (s1 < 1).all()

    def test_planted_outlier_gets_top_score(self, np_rng):
        hits = 0
        trials = 20
        for t in range(trials):
            X = np_rng.normal(size=(500, 2))
            X = np.vstack([X, [[10.0, 10.0]]])
            model = fit_isolation_forest(X, 100, 256, RngStream(100 + t, "if"))
            hits += int(np.argmax(iforest_score(model, X)) == 500)
        assert hits >= int(0.95 * trials)

    def test_single_leaf_tree_scores_half(self):
        # identical rows cannot be split: every path length is c(psi) exactly
        X = np.tile([[3.0, 1.0]], (8, 1))
        model = fit_isolation_forest(X, 10, 8, RngStream(0, "if"))
        assert np.allclose(iforest_score(model, X), 0.5)

    def test_psi_larger_than_n_rejected(self, np_rng):
        with pytest.raises(DataError, match="psi"):
            fit_isolation_forest(np_rng.normal(size=(10, 2)), 5, 11, RngStream(0, "if"))

    def test_determinism(self, np_rng):
        X = np_rng.normal(size=(200, 2))
        a = fit_isolation_forest(X, 20, 64, RngStream(9, "if"))
        b = fit_isolation_forest(X, 20, 64, RngStream(9, "if"))
        assert np.array_equal(iforest_score(a, X), iforest_score(b, X))

    def test_width_mismatch(self, np_rng):
        X = np_rng.normal(size=(50, 2))
        model = fit_isolation_forest(X, 5, 32, RngStream(0, "if"))
        with pytest.raises(DataError, match="width"):
            iforest_score(model, np.zeros((3, 4)))
