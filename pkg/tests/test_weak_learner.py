"""
Unit Tests for the weighted regression tree
"""

import pytest
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))

from tmc_transfer.config import TreeParams
from tmc_transfer.errors import ArgumentError, NumericError
from tmc_transfer.weak_learner import RegressionTree, TreeNode, fit_tree, predict_tree

LEAF_ONE = TreeParams(max_depth=4, min_samples_leaf=1)


class TestTreeFitting:
    """Test split search and stopping rules"""

    def test_step_function(self):
        """Single step is recovered exactly with a midpoint threshold"""
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 0.0, 10.0, 10.0])
        tree = fit_tree(X, y, params=LEAF_ONE)
        np.testing.assert_allclose(tree.predict(X), y)
        root = tree.to_node()
        assert root.feature == 0
        assert root.threshold == 1.5

    def test_constant_target_is_a_leaf(self):
        """No split when y is constant"""
        X = np.arange(10, dtype=float).reshape(-1, 1)
        tree = fit_tree(X, np.full(10, 3.0), params=LEAF_ONE)
        assert tree.node_count == 1
        assert tree.predict(X[:1])[0] == 3.0

    def test_tie_goes_to_lowest_feature(self):
        """Duplicate columns: the split uses feature 0"""
        x = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
        X = np.column_stack([x, x])
        y = np.array([1.0, 1.0, 1.0, 5.0, 5.0, 5.0])
        tree = fit_tree(X, y, params=LEAF_ONE)
        assert tree.to_node().feature == 0

    def test_max_depth(self):
        """Depth never exceeds max_depth"""
        rng = np.random.default_rng(0)
        X = rng.random((200, 3))
        y = rng.random(200)
        for depth in (1, 2, 3):
            tree = fit_tree(X, y, params=TreeParams(max_depth=depth, min_samples_leaf=1))
            assert tree.depth() <= depth

    def test_min_samples_leaf(self):
        """Every leaf holds at least min_samples_leaf rows"""
        rng = np.random.default_rng(1)
        X = rng.random((120, 2))
        y = X[:, 0] * 10 + rng.random(120)
        tree = fit_tree(X, y, params=TreeParams(max_depth=None, min_samples_leaf=7))
        _, counts = np.unique(tree.apply(X), return_counts=True)
        assert counts.min() >= 7

    def test_weighted_leaf_value(self):
        """Leaf value is the weighted mean"""
        X = np.zeros((2, 1))
        tree = fit_tree(X, np.array([0.0, 4.0]), weights=np.array([3.0, 1.0]), params=LEAF_ONE)
        assert tree.predict(X)[0] == pytest.approx(1.0)

    def test_zero_weight_rows_ignored(self):
        """A zero-weight outlier does not move the fit"""
        X = np.array([[0.0], [1.0], [2.0], [3.0]])
        y = np.array([0.0, 0.0, 10.0, 1000.0])
        tree = fit_tree(X, y, weights=np.array([1.0, 1.0, 1.0, 0.0]), params=LEAF_ONE)
        assert tree.predict(np.array([[3.0]]))[0] == pytest.approx(10.0)

    def test_weights_scale_invariant(self):
        """Multiplying all weights by a constant leaves the tree unchanged"""
        rng = np.random.default_rng(2)
        X = rng.random((80, 3))
        y = X @ np.array([1.0, -2.0, 0.5]) + 0.1 * rng.random(80)
        w = rng.random(80) + 0.1
        base = fit_tree(X, y, weights=w, params=LEAF_ONE)
        scaled = fit_tree(X, y, weights=2.0 * w, params=LEAF_ONE)
        np.testing.assert_allclose(base.predict(X), scaled.predict(X))

    @pytest.mark.parametrize("seed", range(5))
    def test_root_split_matches_exhaustive_search(self, seed):
        """Root split has the lowest weighted SSE over every feature and midpoint"""
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 51))
        X = rng.random((n, 3))
        y = rng.random(n) * 10
        w = rng.random(n) + 0.05
        tree = fit_tree(X, y, weights=w, params=TreeParams(max_depth=1, min_samples_leaf=1))

        def sse(mask):
            mean = np.dot(w[mask], y[mask]) / w[mask].sum()
            return float(np.dot(w[mask], (y[mask] - mean) ** 2))

        best = (np.inf, None, None)
        for j in range(3):
            values = np.unique(X[:, j])
            for lo, hi in zip(values[:-1], values[1:]):
                threshold = (lo + hi) / 2.0
                left = X[:, j] <= threshold
                cost = sse(left) + sse(~left)
                if cost < best[0] - 1e-12 * abs(best[0] if np.isfinite(best[0]) else 1.0):
                    best = (cost, j, threshold)

        root = tree.to_node()
        assert root.feature == best[1]
        assert root.threshold == pytest.approx(best[2])
        left = X[:, root.feature] <= root.threshold
        assert sse(left) + sse(~left) == pytest.approx(best[0], rel=1e-9)

    def test_unlimited_depth_memorizes(self):
        """Distinct rows and leaf size 1: every training target is reproduced"""
        rng = np.random.default_rng(5)
        X = rng.random((40, 2))
        y = rng.random(40) * 100
        tree = fit_tree(X, y, params=TreeParams(max_depth=None, min_samples_leaf=1))
        np.testing.assert_allclose(tree.predict(X), y)

    def test_piecewise_constant_output(self):
        """Predictions on new points take only leaf values"""
        rng = np.random.default_rng(6)
        X = rng.random((100, 2))
        y = X[:, 0] * 3 + X[:, 1]
        tree = fit_tree(X, y, params=TreeParams(max_depth=3, min_samples_leaf=2))
        leaf_values = {float(tree.value[i]) for i in range(tree.node_count) if tree.left[i] == -1}
        outputs = set(tree.predict(rng.random((500, 2))).tolist())
        assert len(leaf_values) <= 8
        assert outputs <= leaf_values

    def test_feature_fraction_deterministic(self):
        """Feature subsampling is reproducible from the generator seed"""
        rng = np.random.default_rng(3)
        X = rng.random((100, 6))
        y = X.sum(axis=1)
        first = fit_tree(X, y, params=LEAF_ONE, feature_fraction=0.5, rng=np.random.default_rng(9))
        second = fit_tree(X, y, params=LEAF_ONE, feature_fraction=0.5, rng=np.random.default_rng(9))
        np.testing.assert_array_equal(first.predict(X), second.predict(X))


class TestTreeErrors:
    """Test argument checking"""

    def test_negative_weights(self):
        with pytest.raises(ArgumentError):
            fit_tree(np.zeros((3, 1)), np.zeros(3), weights=np.array([1.0, -1.0, 1.0]))

    def test_all_zero_weights(self):
        with pytest.raises(ArgumentError):
            fit_tree(np.zeros((3, 1)), np.zeros(3), weights=np.zeros(3))

    def test_non_finite_features(self):
        X = np.array([[0.0], [np.nan]])
        with pytest.raises(NumericError):
            fit_tree(X, np.zeros(2))

    def test_feature_fraction_needs_rng(self):
        with pytest.raises(ArgumentError):
            fit_tree(np.random.default_rng(0).random((10, 4)), np.arange(10.0), feature_fraction=0.5)

    def test_dimension_mismatch(self):
        X = np.array([[0.0, 1.0], [1.0, 0.0]])
        tree = fit_tree(X, np.array([0.0, 1.0]), params=LEAF_ONE)
        with pytest.raises(ArgumentError, match="dimension mismatch"):
            tree.predict(np.zeros((1, 3)))
        with pytest.raises(ArgumentError, match="dimension mismatch"):
            predict_tree(tree, np.zeros(3))


class TestTreeForms:
    """Test nested node form"""

    def test_node_form_predicts_the_same(self):
        """to_node / from_node / from_dict keep predictions"""
        rng = np.random.default_rng(4)
        X = rng.random((60, 3))
        y = np.where(X[:, 1] > 0.5, 4.0, 1.0) + X[:, 2]
        tree = fit_tree(X, y, params=LEAF_ONE)
        node = tree.to_node()
        rebuilt = RegressionTree.from_dict(tree.to_dict())
        np.testing.assert_array_equal(rebuilt.predict(X), tree.predict(X))
        for row in X[:10]:
            assert predict_tree(node, row) == predict_tree(tree, row)

    def test_leaf_dict(self):
        leaf = TreeNode(value=2.5)
        assert TreeNode.from_dict(leaf.to_dict()) == leaf
        assert leaf.depth() == 0


# Test runner
if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
