"""
Baseline regressors for the comparison tables

All baselines share the fit(X, y, sample_weight=None) / predict(X) interface so grid
search and leave-one-intersection-out evaluation treat them alike:
- KNNRegressor: z-scored Euclidean k-nearest neighbours
- CARTRegressor: single weighted regression tree
- BaggedForest: bootstrap-aggregated trees with per-split feature subsampling
- AdaBoostR2Regressor: AdaBoost.R2 trained on source data only
"""

import logging
from typing import Any, Dict, List, Literal, Optional

import numpy as np

from tmc_transfer.boosting import AdaBoostEnsemble, adaboost_r2_fit
from tmc_transfer.config import TreeParams
from tmc_transfer.errors import ArgumentError
from tmc_transfer.weak_learner import RegressionTree, fit_tree

logger = logging.getLogger(__name__)

KNN_BATCH = 256


class Regressor:
    """Common interface; subclasses implement fit and predict"""

    name = "regressor"

    def fit(self, X: np.ndarray, y: np.ndarray, sample_weight: Optional[np.ndarray] = None) -> "Regressor":
        raise NotImplementedError

    def predict(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def get_params(self) -> Dict[str, Any]:
        return {}


def _check_training(X: np.ndarray, y: np.ndarray):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ArgumentError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if X.shape[0] == 0:
        raise ArgumentError("empty training set")
    return X, y


class KNNRegressor(Regressor):
    """
    k-nearest-neighbour regression on features z-scored with training statistics

    Distance ties go to the earlier training row. With inverse-distance weighting an
    exact match (distance 0) takes all the weight among the neighbours that match.
    Columns constant in the training data are ignored.
    """

    name = "KNN"

    def __init__(self, k: int = 10, weighting: Literal["uniform", "inverse_distance"] = "uniform"):
        if k < 1:
            raise ArgumentError(f"k must be >= 1, got {k}")
        if weighting not in ("uniform", "inverse_distance"):
            raise ArgumentError(f"unknown weighting '{weighting}'")
        self.k = k
        self.weighting = weighting

    def get_params(self) -> Dict[str, Any]:
        return {"k": self.k, "weighting": self.weighting}

    def fit(self, X, y, sample_weight=None) -> "KNNRegressor":
        X, y = _check_training(X, y)
        if self.k > X.shape[0]:
            raise ArgumentError(f"k={self.k} exceeds the {X.shape[0]} training instances")
        self.mean_ = X.mean(axis=0)
        std = X.std(axis=0)
        self.active_ = np.ptp(X, axis=0) > 0
        self.scale_ = np.where(self.active_, std, 1.0)
        self.X_ = self._transform(X)
        self.y_ = y
        return self

    def _transform(self, X: np.ndarray) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.mean_) / self.scale_
        return Z[:, self.active_]

    def neighbors(self, X: np.ndarray):
        """(indices, distances) of the k nearest training rows, nearest first"""
        Q = self._transform(np.atleast_2d(X))
        indices = np.empty((Q.shape[0], self.k), dtype=np.int64)
        distances = np.empty((Q.shape[0], self.k))
        for start in range(0, Q.shape[0], KNN_BATCH):
            block = Q[start:start + KNN_BATCH]
            d2 = ((block[:, None, :] - self.X_[None, :, :]) ** 2).sum(axis=2)
            order = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
            indices[start:start + len(block)] = order
            distances[start:start + len(block)] = np.sqrt(np.take_along_axis(d2, order, axis=1))
        return indices, distances

    def predict(self, X) -> np.ndarray:
        indices, distances = self.neighbors(X)
        labels = self.y_[indices]
        if self.weighting == "uniform":
            return labels.mean(axis=1)
        exact = distances == 0
        with np.errstate(divide="ignore"):
            weights = np.where(exact.any(axis=1, keepdims=True), exact.astype(float), 1.0 / distances)
        return (weights * labels).sum(axis=1) / weights.sum(axis=1)


def knn_fit_predict(X_train: np.ndarray, y_train: np.ndarray, X_query: np.ndarray, k: int,
                    weighting: Literal["uniform", "inverse_distance"] = "uniform") -> np.ndarray:
    return KNNRegressor(k, weighting).fit(X_train, y_train).predict(X_query)


class CARTRegressor(Regressor):
    name = "CART"

    def __init__(self, tree: Optional[TreeParams] = None):
        self.tree = tree or TreeParams()

    def get_params(self) -> Dict[str, Any]:
        return {"tree": self.tree.model_dump()}

    def fit(self, X, y, sample_weight=None) -> "CARTRegressor":
        X, y = _check_training(X, y)
        self.tree_: RegressionTree = fit_tree(X, y, sample_weight, self.tree)
        return self

    def predict(self, X) -> np.ndarray:
        return self.tree_.predict(X)


class BaggedForest(Regressor):
    """
    Bagged regression trees; bootstrap draws enter the tree fit as multiplicity weights

    Tree t draws from the substream (seed, t), so the forest is a pure function of seed.
    """

    name = "RF"

    def __init__(self, n_trees: int = 50, tree: Optional[TreeParams] = None,
                 feature_fraction: float = 0.5, seed: int = 0, bootstrap: bool = True):
        if n_trees < 1:
            raise ArgumentError(f"n_trees must be >= 1, got {n_trees}")
        self.n_trees = n_trees
        self.tree = tree or TreeParams(max_depth=8, min_samples_leaf=2)
        self.feature_fraction = feature_fraction
        self.seed = seed
        self.bootstrap = bootstrap

    def get_params(self) -> Dict[str, Any]:
        return {"n_trees": self.n_trees, "tree": self.tree.model_dump(),
                "feature_fraction": self.feature_fraction, "bootstrap": self.bootstrap}

    def fit(self, X, y, sample_weight=None) -> "BaggedForest":
        X, y = _check_training(X, y)
        n = X.shape[0]
        base = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        self.trees_: List[RegressionTree] = []
        for t in range(self.n_trees):
            rng = np.random.default_rng([self.seed, t])
            weights = base
            if self.bootstrap:
                counts = rng.multinomial(n, np.full(n, 1.0 / n))
                weights = base * counts
                if weights.sum() <= 0:
                    weights = base
            elif sample_weight is None:
                weights = None
            self.trees_.append(fit_tree(X, y, weights, self.tree, self.feature_fraction, rng))
        return self

    def predict(self, X) -> np.ndarray:
        return np.mean([tree.predict(X) for tree in self.trees_], axis=0)


def forest_fit(X: np.ndarray, y: np.ndarray, n_trees: int = 50, tree: Optional[TreeParams] = None,
               feature_fraction: float = 0.5, seed: int = 0, bootstrap: bool = True) -> BaggedForest:
    return BaggedForest(n_trees, tree, feature_fraction, seed, bootstrap).fit(X, y)


class AdaBoostR2Regressor(Regressor):
    """Plain AdaBoost.R2 on pooled source data, predictions clamped at 0"""

    name = "AdaBoost"

    def __init__(self, iterations: int = 30, tree: Optional[TreeParams] = None,
                 loss: Literal["linear", "square", "exponential"] = "linear"):
        self.iterations = iterations
        self.tree = tree or TreeParams()
        self.loss = loss

    def get_params(self) -> Dict[str, Any]:
        return {"iterations": self.iterations, "tree": self.tree.model_dump(), "loss": self.loss}

    def fit(self, X, y, sample_weight=None) -> "AdaBoostR2Regressor":
        X, y = _check_training(X, y)
        self.ensemble_: AdaBoostEnsemble = adaboost_r2_fit(X, y, sample_weight, self.iterations,
                                                           self.tree, self.loss)
        return self

    def predict(self, X) -> np.ndarray:
        return self.ensemble_.predict(X)
