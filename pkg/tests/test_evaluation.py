"""
Unit Tests for metrics, leave-one-intersection-out evaluation and grid search
"""

import math
import pytest
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent.parent))

from tmc_transfer.baselines import CARTRegressor
from tmc_transfer.config import BoostingSettings, EvalSettings, LassoSettings, RunConfig, TreeParams
from tmc_transfer.domain_model import LABEL_NAMES
from tmc_transfer.errors import ArgumentError
from tmc_transfer.evaluation import (
    ModelFactory, RegressorFactory, build_factories, expand_grid, grid_search,
    loio_evaluate, mae, make_regressor, rmse, tune_config,
)

FAST_CONFIG = RunConfig(
    seed=3,
    lasso=LassoSettings(grid_size=8),
    boosting=BoostingSettings(steps=2, folds=2, iterations=2,
                              tree=TreeParams(max_depth=3, min_samples_leaf=2)),
    eval=EvalSettings(folds=2, forest_trees=5, knn_k=5),
)


class OracleFactory(ModelFactory):
    """Looks the answers up by key; proves the target reaches models label-free"""

    name = "Oracle"

    def __init__(self, dataset):
        self.lookup = {inst.key: inst for inst in dataset}

    def fit_predict(self, train, target, selection, seed):
        if target.is_labeled:
            raise AssertionError("target labels leaked into the fold")
        return {m: np.array([self.lookup[inst.key].label(m) for inst in target]) for m in LABEL_NAMES}


class BrokenFactory(ModelFactory):
    name = "Broken"

    def fit_predict(self, train, target, selection, seed):
        raise RuntimeError("boom")


class TestMetrics:
    """Test MAE and RMSE"""

    def test_known_values(self):
        assert mae([1, 2, 3], [2, 2, 5]) == pytest.approx(1.0)
        assert rmse([1, 2, 3], [2, 2, 5]) == pytest.approx(math.sqrt(5 / 3))

    def test_perfect_prediction(self):
        assert mae([4.0, 5.0], [4.0, 5.0]) == 0.0
        assert rmse([4.0, 5.0], [4.0, 5.0]) == 0.0

    def test_match_direct_formulas(self):
        rng = np.random.default_rng(8)
        for _ in range(1000):
            size = int(rng.integers(1, 30))
            y = (rng.random(size) * 100).tolist()
            y_hat = (rng.random(size) * 100).tolist()
            direct_mae = sum(abs(a - b) for a, b in zip(y, y_hat)) / size
            direct_rmse = math.sqrt(sum((a - b) ** 2 for a, b in zip(y, y_hat)) / size)
            assert mae(y, y_hat) == pytest.approx(direct_mae, rel=1e-12, abs=1e-12)
            assert rmse(y, y_hat) == pytest.approx(direct_rmse, rel=1e-12, abs=1e-12)

    def test_translation_invariance(self):
        rng = np.random.default_rng(9)
        y, y_hat = rng.random(40) * 50, rng.random(40) * 50
        for shift in (-17.5, 3.0, 1000.0):
            assert mae(y + shift, y_hat + shift) == pytest.approx(mae(y, y_hat), rel=1e-9)
            assert rmse(y + shift, y_hat + shift) == pytest.approx(rmse(y, y_hat), rel=1e-9)

    def test_absolute_homogeneity(self):
        """metric(c y, c y_hat) = |c| metric(y, y_hat)"""
        rng = np.random.default_rng(10)
        y, y_hat = rng.random(40) * 50, rng.random(40) * 50
        for c in (-2.5, 0.1, 7.0):
            assert mae(c * y, c * y_hat) == pytest.approx(abs(c) * mae(y, y_hat), rel=1e-12)
            assert rmse(c * y, c * y_hat) == pytest.approx(abs(c) * rmse(y, y_hat), rel=1e-12)

    def test_rmse_dominates_mae(self):
        rng = np.random.default_rng(0)
        y, y_hat = rng.random(50), rng.random(50)
        assert rmse(y, y_hat) >= mae(y, y_hat)

    def test_bad_inputs(self):
        with pytest.raises(ArgumentError):
            mae([], [])
        with pytest.raises(ArgumentError):
            rmse([1.0], [1.0, 2.0])


class TestLOIO:
    """Test the leave-one-intersection-out protocol"""

    def test_oracle_scores_zero(self, small_network):
        dataset = small_network.dataset
        report = loio_evaluate(dataset, {"Oracle": OracleFactory(dataset)}, FAST_CONFIG)
        assert report.failures == []
        assert report.fold_counts() == {"Oracle": 4}
        assert (report.mae_table().to_numpy() == 0).all()
        assert (report.rmse_table().to_numpy() == 0).all()

    def test_two_folds(self, small_network):
        dataset = small_network.dataset
        pair = dataset.for_intersection("INT000").concat(dataset.for_intersection("INT001"))
        report = loio_evaluate(pair, {"Oracle": OracleFactory(pair)}, FAST_CONFIG)
        assert report.fold_counts() == {"Oracle": 2}
        assert len(report.breakdown()) == 2 * len(LABEL_NAMES)

    def test_failures_are_recorded(self, small_network):
        dataset = small_network.dataset
        factories = {"Oracle": OracleFactory(dataset), "Broken": BrokenFactory()}
        report = loio_evaluate(dataset, factories, FAST_CONFIG)
        assert len(report.failures) == 4
        assert all(f["error"] == "boom" and f["success"] is False for f in report.failures)
        table = report.mae_table()
        assert table.loc["Oracle"].notna().all()
        assert table.loc["Broken"].isna().all()
        assert report.to_dict()["mae"]["Broken"]["Through"] is None

    def test_needs_two_intersections(self, small_network):
        single = small_network.dataset.for_intersection("INT000")
        with pytest.raises(ArgumentError):
            loio_evaluate(single, {"Oracle": OracleFactory(single)}, FAST_CONFIG)

    def test_all_models_table(self, small_network):
        """TL and the three baselines produce one row each, in config order"""
        factories = build_factories(FAST_CONFIG)
        assert list(factories) == ["TL", "KNN", "RF", "AdaBoost"]
        report = loio_evaluate(small_network.dataset, factories, FAST_CONFIG)
        assert report.failures == []
        mae_table = report.mae_table()
        assert mae_table.shape == (4, 3)
        assert list(mae_table.columns) == ["Left-turn", "Through", "Right-turn"]
        assert list(mae_table.index) == ["TL", "KNN", "RF", "AdaBoost"]
        assert (mae_table.to_numpy() >= 0).all()
        assert (report.rmse_table().to_numpy() >= mae_table.to_numpy() - 1e-9).all()

    def test_parallel_folds_match_serial(self, small_network):
        factories = {"KNN": RegressorFactory("KNN", lambda s: make_regressor("KNN", FAST_CONFIG, s))}
        serial = loio_evaluate(small_network.dataset, factories, FAST_CONFIG, jobs=1)
        parallel = loio_evaluate(small_network.dataset, factories, FAST_CONFIG, jobs=4)
        assert serial.records == parallel.records


class TestGridSearch:
    """Test exhaustive grid search"""

    def test_expand_grid_order(self):
        points = expand_grid({"a": [1, 2], "b": [3, 4]})
        assert points == [{"a": 1, "b": 3}, {"a": 1, "b": 4}, {"a": 2, "b": 3}, {"a": 2, "b": 4}]

    def test_empty_grid(self):
        with pytest.raises(ArgumentError):
            expand_grid({"a": []})

    def test_depth_two_wins_the_tie(self):
        """Depths 2, 3 and 4 fit the two-step surface exactly; the earliest wins"""
        levels = [0.0, 0.25, 0.75, 1.0]
        grid = np.array([(a, b) for a in levels for b in levels] * 4)
        y = 10.0 * (grid[:, 0] > 0.5) + 5.0 * (grid[:, 1] > 0.5)

        def factory(max_depth):
            return CARTRegressor(TreeParams(max_depth=max_depth, min_samples_leaf=1))

        result = grid_search(factory, {"max_depth": [1, 2, 3, 4]}, grid, y, folds=5, seed=0)
        assert result.best_params == {"max_depth": 2}
        assert result.best_score == pytest.approx(0.0, abs=1e-12)
        assert result.table["mean_rmse"].iloc[0] > 1.0
        assert list(result.table.columns) == ["max_depth", "mean_rmse", "std_rmse"]

    def test_tune_config(self, small_network):
        config = FAST_CONFIG.model_copy(update={"eval": FAST_CONFIG.eval.model_copy(update={"models": ["KNN", "AdaBoost"]})})
        tuned, results = tune_config(small_network.dataset, config)
        assert set(results) == {"KNN", "AdaBoost"}
        assert tuned.eval.knn_k == results["KNN"].best_params["k"]
        assert tuned.boosting.iterations == results["AdaBoost"].best_params["iterations"]
        assert tuned.boosting.tree.max_depth == results["AdaBoost"].best_params["max_depth"]
        assert len(results["KNN"].table) == 4


# Test runner
if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
