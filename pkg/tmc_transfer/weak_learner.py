"""
Weighted CART regression tree, the weak estimator G(x, gamma_t)

The fitted tree is stored in flat arrays (node i: feature, threshold, left, right,
value) so batch prediction is a handful of vectorized passes; `to_node` / `from_node`
convert to the nested TreeNode form used in model files.
"""

from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Union

import numpy as np

from tmc_transfer.config import TreeParams
from tmc_transfer.errors import ArgumentError, NumericError

LEAF = -1
_GAIN_TIE = 1e-12


@dataclass(frozen=True)
class TreeNode:
    """Internal node (feature, threshold, left, right) or leaf (value)"""

    value: float
    feature: Optional[int] = None
    threshold: Optional[float] = None
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_dict(self) -> Dict[str, Any]:
        if self.is_leaf:
            return {"value": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "value": self.value,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TreeNode":
        if "feature" not in data:
            return cls(value=float(data["value"]))
        return cls(
            value=float(data.get("value", 0.0)),
            feature=int(data["feature"]),
            threshold=float(data["threshold"]),
            left=cls.from_dict(data["left"]),
            right=cls.from_dict(data["right"]),
        )


class RegressionTree:
    """Fitted tree in array form"""

    def __init__(self, feature, threshold, left, right, value, n_features: int):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.n_features = int(n_features)

    @property
    def node_count(self) -> int:
        return len(self.value)

    def depth(self) -> int:
        return self.to_node().depth()

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _check_matrix(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            split = self.feature[node]
            active = np.flatnonzero(split != LEAF)
            if active.size == 0:
                break
            current = node[active]
            go_left = X[active, split[active]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
        return self.value[node]

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf index reached by each row"""
        X = _check_matrix(X, self.n_features)
        node = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            split = self.feature[node]
            active = np.flatnonzero(split != LEAF)
            if active.size == 0:
                return node
            current = node[active]
            go_left = X[active, split[active]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])

    def to_node(self, index: int = 0) -> TreeNode:
        if self.feature[index] == LEAF:
            return TreeNode(value=float(self.value[index]))
        return TreeNode(
            value=float(self.value[index]),
            feature=int(self.feature[index]),
            threshold=float(self.threshold[index]),
            left=self.to_node(int(self.left[index])),
            right=self.to_node(int(self.right[index])),
        )

    @classmethod
    def from_node(cls, root: TreeNode, n_features: int) -> "RegressionTree":
        feature: List[int] = []
        threshold: List[float] = []
        left: List[int] = []
        right: List[int] = []
        value: List[float] = []

        def add(node: TreeNode) -> int:
            index = len(value)
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(node.value)
            if not node.is_leaf:
                feature[index] = node.feature
                threshold[index] = node.threshold
                left[index] = add(node.left)
                right[index] = add(node.right)
            return index

        add(root)
        return cls(feature, threshold, left, right, value, n_features)

    def to_dict(self) -> Dict[str, Any]:
        return {"n_features": self.n_features, "root": self.to_node().to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RegressionTree":
        return cls.from_node(TreeNode.from_dict(data["root"]), int(data["n_features"]))


def _check_matrix(X: np.ndarray, n_features: Optional[int] = None) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.ndim != 2:
        raise ArgumentError(f"expected a 2-D matrix, got {X.ndim} dimensions")
    if n_features is not None and X.shape[1] != n_features:
        raise ArgumentError(f"dimension mismatch: tree expects {n_features} features, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise NumericError("non-finite value in feature matrix")
    return X


def fit_tree(X: np.ndarray,
             y: np.ndarray,
             weights: Optional[np.ndarray] = None,
             params: Optional[TreeParams] = None,
             feature_fraction: float = 1.0,
             rng: Optional[np.random.Generator] = None) -> RegressionTree:
    """
    Grow a tree by greedy weighted-SSE splits

    Args:
        X: n x p feature matrix
        y: n targets
        weights: nonnegative instance weights (uniform if None)
        params: depth / leaf-size limits
        feature_fraction: share of features examined at each split (forest use)
        rng: generator for feature subsampling; required when feature_fraction < 1

    Returns:
        RegressionTree
    """
    params = params or TreeParams()
    X = _check_matrix(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    n, p = X.shape
    if y.shape[0] != n:
        raise ArgumentError(f"X has {n} rows but y has {y.shape[0]}")
    if n == 0:
        raise ArgumentError("cannot fit a tree on zero instances")
    if not np.all(np.isfinite(y)):
        raise NumericError("non-finite value in targets")

    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    if w.shape[0] != n:
        raise ArgumentError(f"X has {n} rows but weights has {w.shape[0]}")
    if not np.all(np.isfinite(w)):
        raise NumericError("non-finite value in weights")
    if np.any(w < 0):
        raise ArgumentError("weights must be nonnegative")
    if w.sum() <= 0:
        raise ArgumentError("weights sum to zero")

    if not 0.0 < feature_fraction <= 1.0:
        raise ArgumentError(f"feature_fraction must be in (0, 1], got {feature_fraction}")
    n_candidates = p if feature_fraction >= 1.0 else max(1, int(round(feature_fraction * p)))
    if n_candidates < p and rng is None:
        raise ArgumentError("feature subsampling needs a random generator")

    # Zero-weight rows take no part in the fit
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    min_leaf_weight = params.min_weight_fraction_leaf * w.sum()

    builder = _TreeBuilder(X, y, w, params, min_leaf_weight, n_candidates, rng)
    return builder.build(p)


class _TreeBuilder:
    def __init__(self, X, y, w, params: TreeParams, min_leaf_weight: float,
                 n_candidates: int, rng: Optional[np.random.Generator]):
        self.X = X
        self.y = y
        self.w = w
        self.params = params
        self.min_leaf_weight = min_leaf_weight
        self.n_candidates = n_candidates
        self.rng = rng
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []

    def _new_node(self, value: float) -> int:
        self.feature.append(LEAF)
        self.threshold.append(0.0)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.value) - 1

    def build(self, n_features: int) -> RegressionTree:
        all_rows = np.arange(self.X.shape[0])
        root = self._new_node(_weighted_mean(self.y, self.w))
        stack = [(root, all_rows, 0)]
        while stack:
            node, rows, depth = stack.pop()
            split = self._best_split(rows, depth)
            if split is None:
                continue
            feature, threshold, left_rows, right_rows = split
            self.feature[node] = feature
            self.threshold[node] = threshold
            left = self._new_node(_weighted_mean(self.y[left_rows], self.w[left_rows]))
            right = self._new_node(_weighted_mean(self.y[right_rows], self.w[right_rows]))
            self.left[node] = left
            self.right[node] = right
            # right pushed first so the left subtree gets the lower node ids
            stack.append((right, right_rows, depth + 1))
            stack.append((left, left_rows, depth + 1))
        return RegressionTree(self.feature, self.threshold, self.left, self.right,
                              self.value, n_features)

    def _best_split(self, rows: np.ndarray, depth: int):
        params = self.params
        k = rows.size
        if params.max_depth is not None and depth >= params.max_depth:
            return None
        if k < 2 * params.min_samples_leaf:
            return None
        y_node = self.y[rows]
        if np.ptp(y_node) == 0:
            return None
        w_node = self.w[rows]
        if w_node.sum() <= 0:
            return None

        if self.n_candidates < self.X.shape[1]:
            candidates = np.sort(self.rng.choice(self.X.shape[1], self.n_candidates, replace=False))
        else:
            candidates = np.arange(self.X.shape[1])

        Xn = self.X[np.ix_(rows, candidates)]
        order = np.argsort(Xn, axis=0, kind="stable")
        xs = np.take_along_axis(Xn, order, axis=0)
        ws = w_node[order]
        wys = (w_node * y_node)[order]

        cw = np.cumsum(ws, axis=0)[:-1]
        cwy = np.cumsum(wys, axis=0)[:-1]
        total_w = cw[-1] + ws[-1] if k > 1 else ws[0]
        total_wy = cwy[-1] + wys[-1] if k > 1 else wys[0]
        right_w = total_w - cw
        right_wy = total_wy - cwy

        left_count = np.arange(1, k)[:, None]
        valid = xs[:-1] < xs[1:]
        valid &= left_count >= params.min_samples_leaf
        valid &= (k - left_count) >= params.min_samples_leaf
        valid &= (cw > 0) & (right_w > 0)
        if self.min_leaf_weight > 0:
            valid &= (cw >= self.min_leaf_weight) & (right_w >= self.min_leaf_weight)
        if not valid.any():
            return None

        with np.errstate(divide="ignore", invalid="ignore"):
            gain = cwy ** 2 / cw + right_wy ** 2 / right_w - total_wy ** 2 / total_w
        gain = np.where(valid, gain, -np.inf)

        # feature-major scan: lowest feature index, then smallest threshold
        by_feature = gain.T
        best = by_feature.max()
        if not np.isfinite(best) or best <= 0:
            return None
        tolerance = _GAIN_TIE * best
        flat = np.flatnonzero(by_feature.ravel() >= best - tolerance)[0]
        column, position = divmod(int(flat), k - 1)

        lo, hi = xs[position, column], xs[position + 1, column]
        threshold = (lo + hi) / 2.0
        if not lo <= threshold < hi:
            threshold = lo
        feature = int(candidates[column])
        goes_left = self.X[rows, feature] <= threshold
        return feature, float(threshold), rows[goes_left], rows[~goes_left]


def _weighted_mean(y: np.ndarray, w: np.ndarray) -> float:
    return float(np.dot(w, y) / w.sum())


def predict_tree(tree: Union[RegressionTree, TreeNode], x: np.ndarray) -> float:
    """
    Route one vector to its leaf: x[feature] <= threshold goes left

    Args:
        tree: Fitted RegressionTree or a nested TreeNode
        x: feature vector of the trained dimensionality
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if isinstance(tree, RegressionTree):
        if x.shape[0] != tree.n_features:
            raise ArgumentError(f"dimension mismatch: tree expects {tree.n_features} features, got {x.shape[0]}")
        return float(tree.predict(x.reshape(1, -1))[0])

    node = tree
    while not node.is_leaf:
        if node.feature >= x.shape[0]:
            raise ArgumentError(f"dimension mismatch: split on feature {node.feature} but x has {x.shape[0]}")
        node = node.left if x[node.feature] <= node.threshold else node.right
    return float(node.value)
