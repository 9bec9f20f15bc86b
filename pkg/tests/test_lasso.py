"""
Unit Tests for Lasso feature selection
Coordinate descent optimality, lambda grid, cross-validation and selection union
"""

import dataclasses
import pytest
import sys
from pathlib import Path

import numpy as np
from sklearn.model_selection import KFold

sys.path.insert(0, str(Path(__file__).parent.parent))

from tmc_transfer.config import LassoSettings
from tmc_transfer.datagen import generate_network
from tmc_transfer.domain_model import PREDICTOR_NAMES, Dataset
from tmc_transfer.errors import ArgumentError, NumericError
from tmc_transfer.lasso import (
    FeatureSelection, fit_lasso, fit_movement_model, lambda_grid, lambda_max, lasso_path,
    select_features, select_lambda, standardize,
)


@pytest.fixture(scope="module")
def regression_data():
    """200 x 24 design, response driven by three columns"""
    rng = np.random.default_rng(123)
    X = rng.normal(size=(200, 24))
    y = 3.0 * X[:, 0] - 2.0 * X[:, 5] + 1.5 * X[:, 10] + 0.1 * rng.normal(size=200)
    return X, y


class TestCoordinateDescent:
    """Test fit_lasso against closed forms and optimality conditions"""

    def test_orthonormal_soft_threshold(self):
        """With X'X = I the solution is S(x'y, lam/2)"""
        X = np.eye(3)
        y = np.array([3.0, -1.0, 0.2])
        fit = fit_lasso(X, y, lam=2.0)
        np.testing.assert_allclose(fit.coef, [2.0, 0.0, 0.0], atol=1e-12)
        assert fit.converged

    def test_kkt_conditions(self, regression_data):
        """Stationarity: 2 x_j'r = lam sign(b_j) on the support, |2 x_j'r| <= lam off it"""
        X, y = regression_data
        X_std, y_c, _ = standardize(X, y)
        lam = 0.1 * lambda_max(X_std, y_c)
        fit = fit_lasso(X_std, y_c, lam, tol=1e-10)
        gradient = 2.0 * X_std.T @ (y_c - X_std @ fit.coef)
        support = fit.coef != 0
        np.testing.assert_allclose(gradient[support], lam * np.sign(fit.coef[support]), atol=1e-4 * lam)
        assert np.all(np.abs(gradient[~support]) <= lam * (1 + 1e-6))

    @pytest.mark.parametrize("seed", range(20))
    def test_kkt_random_problems(self, seed):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(200, 24))
        y = X @ (rng.normal(size=24) * (rng.random(24) < 0.3)) + rng.normal(size=200)
        X_std, y_c, _ = standardize(X, y)
        lam = float(rng.uniform(0.02, 0.5)) * lambda_max(X_std, y_c)
        fit = fit_lasso(X_std, y_c, lam, tol=1e-10)
        gradient = 2.0 * X_std.T @ (y_c - X_std @ fit.coef)
        support = fit.coef != 0
        np.testing.assert_allclose(gradient[support], lam * np.sign(fit.coef[support]), atol=1e-4 * lam)
        assert np.all(np.abs(gradient[~support]) <= lam * (1 + 1e-6))

    def test_lambda_max_zeroes_everything(self, regression_data):
        """No coefficient survives at lam_max"""
        X, y = regression_data
        X_std, y_c, _ = standardize(X, y)
        fit = fit_lasso(X_std, y_c, lambda_max(X_std, y_c))
        assert np.all(fit.coef == 0)

    def test_objective_non_increasing(self, regression_data):
        """Every sweep lowers (or keeps) the objective"""
        X, y = regression_data
        X_std, y_c, _ = standardize(X, y)
        fit = fit_lasso(X_std, y_c, 0.01 * lambda_max(X_std, y_c), track_objective=True)
        steps = np.diff(fit.objective)
        assert np.all(steps <= 1e-9 * fit.objective[0])

    def test_zero_lambda_is_least_squares(self):
        """lam = 0 on a full-rank design gives the OLS coefficients"""
        rng = np.random.default_rng(31)
        X = rng.normal(size=(60, 5))
        y = X @ np.array([1.0, -0.5, 2.0, 0.0, 0.3]) + rng.normal(size=60)
        fit = fit_lasso(X, y, lam=0.0, tol=1e-13, max_iter=100000)
        ols, *_ = np.linalg.lstsq(X, y, rcond=None)
        np.testing.assert_allclose(fit.coef, ols, atol=1e-8)

    @pytest.mark.parametrize("c", [0.25, 3.7])
    def test_scale_equivariance(self, regression_data, c):
        """fit(X, c y, c lam) = c fit(X, y, lam)"""
        X, y = regression_data
        X_std, y_c, _ = standardize(X, y)
        lam = 0.05 * lambda_max(X_std, y_c)
        base = fit_lasso(X_std, y_c, lam, tol=1e-12, max_iter=100000)
        scaled = fit_lasso(X_std, c * y_c, c * lam, tol=1e-12, max_iter=100000)
        np.testing.assert_allclose(scaled.coef, c * base.coef, rtol=1e-6, atol=1e-9)
        np.testing.assert_array_equal(scaled.coef != 0, base.coef != 0)

    def test_support_shrinks_as_lambda_grows(self):
        """Orthonormal columns: the support along a descending grid never shrinks"""
        rng = np.random.default_rng(32)
        Q, _ = np.linalg.qr(rng.normal(size=(100, 10)))
        y = Q @ rng.normal(size=10) * 5 + rng.normal(size=100)
        grid = lambda_grid(lambda_max(Q, y), 25)
        path = lasso_path(Q, y, grid, tol=1e-12)
        support_sizes = (np.abs(path) > 0).sum(axis=1)
        assert np.all(np.diff(support_sizes) >= 0)
        assert support_sizes[0] == 0
        assert support_sizes[-1] == 10

    def test_negative_lambda(self):
        with pytest.raises(ArgumentError):
            fit_lasso(np.eye(2), np.ones(2), lam=-1.0)

    def test_non_finite_input(self):
        with pytest.raises(NumericError):
            fit_lasso(np.array([[np.inf, 0.0], [0.0, 1.0]]), np.ones(2), lam=1.0)


class TestStandardize:
    """Test column scaling"""

    def test_constant_column(self):
        """Constant column maps to zeros and is flagged"""
        X = np.column_stack([np.arange(5.0), np.full(5, 7.0)])
        X_std, y_c, stats = standardize(X, np.arange(5.0))
        assert np.all(X_std[:, 1] == 0)
        assert stats.constant.tolist() == [False, True]
        assert X_std[:, 0].std(ddof=1) == pytest.approx(1.0)
        assert y_c.mean() == pytest.approx(0.0)

    def test_round_trip(self, regression_data):
        """X_std * std + mean and y_c + y_mean give back the inputs"""
        X, y = regression_data
        X_std, y_c, stats = standardize(X, y)
        np.testing.assert_allclose(X_std * stats.stds + stats.means, X, atol=1e-10)
        np.testing.assert_allclose(y_c + stats.y_mean, y, atol=1e-10)
        np.testing.assert_allclose(X_std.std(axis=0, ddof=1), 1.0, atol=1e-12)


class TestLambdaSelection:
    """Test the grid and cross-validated choice"""

    def test_grid_endpoints(self):
        """Log grid from lam_max down to 1e-4 lam_max"""
        grid = lambda_grid(10.0, 50)
        assert len(grid) == 50
        assert grid[0] == pytest.approx(10.0)
        assert grid[-1] == pytest.approx(1e-3)
        assert np.all(np.diff(grid) < 0)

    def test_selected_lambda_is_on_grid(self, regression_data):
        X, y = regression_data
        X_std, y_c, _ = standardize(X, y)
        lam = select_lambda(X_std, y_c, n_folds=5, grid_size=20, seed=0)
        grid = lambda_grid(lambda_max(X_std, y_c), 20)
        assert np.any(np.isclose(grid, lam))

    def test_single_point_grid(self, regression_data):
        X, y = regression_data
        X_std, y_c, _ = standardize(X, y)
        lam = select_lambda(X_std, y_c, n_folds=5, grid_size=1, seed=0)
        assert lam == pytest.approx(lambda_max(X_std, y_c))

    def test_fold_penalty_scaled_by_fold_size(self, regression_data):
        """Each fold is fit at lam * n_train / n; the CV argmin is a full-data grid point"""
        X, y = regression_data
        X_std, y_c, _ = standardize(X, y)
        X_std, y_c = X_std[:103], y_c[:103]
        grid = lambda_grid(lambda_max(X_std, y_c), 15)
        errors = np.zeros(len(grid))
        for train, test in KFold(n_splits=4, shuffle=True, random_state=2).split(X_std):
            x_mean, y_mean = X_std[train].mean(axis=0), y_c[train].mean()
            path = lasso_path(X_std[train] - x_mean, y_c[train] - y_mean, grid * (len(train) / 103))
            predictions = (X_std[test] - x_mean) @ path.T + y_mean
            errors += ((predictions - y_c[test][:, None]) ** 2).mean(axis=0)
        expected = grid[int(np.argmin(errors / 4))]
        assert select_lambda(X_std, y_c, n_folds=4, grid_size=15, seed=2) == pytest.approx(expected)

    def test_pure_noise_prefers_sparse_models(self):
        """Independent response: cross-validation keeps the model small"""
        rng = np.random.default_rng(7)
        X = rng.normal(size=(200, 24))
        y = rng.normal(size=200)
        model = fit_movement_model(X, y, settings=LassoSettings(grid_size=30), seed=0)
        X_std, y_c, _ = standardize(X, y)
        assert model.lambda_ >= 0.05 * lambda_max(X_std, y_c)
        assert len(model.selected) <= 12

    def test_too_few_rows_for_folds(self):
        with pytest.raises(ArgumentError):
            select_lambda(np.ones((3, 2)), np.ones(3), n_folds=5)


class TestMovementModel:
    """Test variable recovery and back-transformation"""

    def test_recovers_true_support(self, regression_data):
        """The three driving columns are selected with near-true raw coefficients"""
        X, y = regression_data
        model = fit_movement_model(X, y, seed=0)
        names = [PREDICTOR_NAMES[i] for i in (0, 5, 10)]
        assert set(names) <= model.selected
        np.testing.assert_allclose(model.coefficients[[0, 5, 10]], [3.0, -2.0, 1.5], atol=0.1)
        assert np.mean(np.abs(model.predict(X) - y)) < 0.2

    def test_constant_column_never_selected(self, regression_data):
        X, y = regression_data
        X = X.copy()
        X[:, 3] = 5.0
        model = fit_movement_model(X, y, seed=0)
        assert PREDICTOR_NAMES[3] not in model.selected
        assert model.coefficients[3] == 0.0


class TestSelectFeatures:
    """Test the per-movement union on generated data"""

    def test_union_and_table(self, small_network):
        selection = select_features(small_network.dataset, LassoSettings(grid_size=20), seed=1)
        assert list(selection.selected) == [n for n in PREDICTOR_NAMES if n in selection.selected]
        for model in selection.models.values():
            assert model.selected <= set(selection.selected)
        assert set(selection.selected) & {"o_tm", "d_tm", "g_tm"}

        table = selection.coefficient_table()
        assert table.shape == (24, 3)
        assert list(table.columns) == ["Left turn", "Through", "Right turn"]
        with pytest.raises(ArgumentError):
            selection.coefficient_table("bogus")

    def test_dict_round_trip(self, small_network):
        selection = select_features(small_network.dataset, LassoSettings(grid_size=10), seed=1)
        restored = FeatureSelection.from_dict(selection.to_dict())
        assert restored.selected == selection.selected
        X = small_network.dataset.features()
        np.testing.assert_allclose(restored.models["v_tm"].predict(X), selection.models["v_tm"].predict(X))

    def test_recovers_known_drivers_on_generated_data(self):
        """Labels rebuilt from three generated variables: the union keeps all three in 9 of 10 seeds"""
        drivers = ["o_tm", "g_lm", "d_lm"]
        hits = 0
        for seed in range(10):
            dataset = generate_network(4, 1, seed=seed).dataset
            Z = dataset.features(drivers)
            Z = (Z - Z.mean(axis=0)) / Z.std(axis=0, ddof=1)
            noise = np.random.default_rng(seed).normal(scale=2.0, size=(len(dataset), 3))
            labels = np.maximum(100.0 + 10.0 * Z @ np.array([[1.0, 0.5, 1.0], [-1.0, 1.0, 0.5], [1.0, -1.0, 1.0]])
                                + noise, 0.0)
            rebuilt = Dataset(dataclasses.replace(inst, v_lm=float(v[0]), v_tm=float(v[1]), v_rm=float(v[2]))
                              for inst, v in zip(dataset, labels))
            selection = select_features(rebuilt, LassoSettings(grid_size=20), seed=seed)
            hits += set(drivers) <= set(selection.selected)
        assert hits >= 9

    def test_unlabeled_dataset_rejected(self, small_network):
        with pytest.raises(ArgumentError):
            select_features(small_network.dataset.without_labels())


# Test runner
if __name__ == "__main__":
    pytest.main([__file__, "-v", "--tb=short"])
