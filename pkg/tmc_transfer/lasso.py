"""
Lasso feature selection by cyclic coordinate descent

Objective (unscaled RSS):  sum_i (y_i - sum_j x_ij b_j)^2 + lam * sum_j |b_j|
Coordinate update:         b_j = S(rho_j, lam / 2) / (x_j' x_j)
Smallest all-zero penalty: lam_max = 2 * max_j |x_j' y|
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold

from tmc_transfer.config import LassoSettings
from tmc_transfer.domain_model import LABEL_NAMES, MOVEMENT_TITLES, PREDICTOR_NAMES, Dataset
from tmc_transfer.errors import ArgumentError, NumericError

logger = logging.getLogger(__name__)

SELECTION_TOLERANCE = 1e-8
GRID_RATIO = 1e-4


@dataclass(frozen=True)
class StandardizationStats:
    """Column means / sample stds of X and the response mean"""

    means: np.ndarray
    stds: np.ndarray
    y_mean: float

    @property
    def constant(self) -> np.ndarray:
        return self.stds == 0

    def to_dict(self) -> Dict:
        return {"means": self.means.tolist(), "stds": self.stds.tolist(), "y_mean": self.y_mean}

    @classmethod
    def from_dict(cls, data: Dict) -> "StandardizationStats":
        return cls(np.asarray(data["means"], dtype=np.float64),
                   np.asarray(data["stds"], dtype=np.float64),
                   float(data["y_mean"]))


@dataclass(frozen=True)
class LassoFit:
    coef: np.ndarray
    n_iter: int
    converged: bool
    objective: List[float] = field(default_factory=list)


@dataclass(frozen=True)
class LassoModel:
    """
    Fitted movement model on the original predictor scale

    `coefficients` are raw-scale (b_j / std_j); `standardized` keeps the descent output.
    """

    lambda_: float
    coefficients: np.ndarray
    intercept: float
    standardized: np.ndarray
    stats: StandardizationStats
    variable_names: Tuple[str, ...]
    selected: FrozenSet[str]
    converged: bool = True

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return X @ self.coefficients + self.intercept

    def to_dict(self) -> Dict:
        return {
            "lambda": self.lambda_,
            "coefficients": self.coefficients.tolist(),
            "intercept": self.intercept,
            "standardized": self.standardized.tolist(),
            "stats": self.stats.to_dict(),
            "variable_names": list(self.variable_names),
            "selected": [v for v in self.variable_names if v in self.selected],
            "converged": self.converged,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "LassoModel":
        return cls(
            lambda_=float(data["lambda"]),
            coefficients=np.asarray(data["coefficients"], dtype=np.float64),
            intercept=float(data["intercept"]),
            standardized=np.asarray(data["standardized"], dtype=np.float64),
            stats=StandardizationStats.from_dict(data["stats"]),
            variable_names=tuple(data["variable_names"]),
            selected=frozenset(data["selected"]),
            converged=bool(data.get("converged", True)),
        )


def standardize(X: np.ndarray, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, StandardizationStats]:
    """
    Center and scale predictors to unit sample std; center the response

    Constant columns map to zeros and are flagged through stats.constant.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ArgumentError(f"shape mismatch: X {X.shape}, y {y.shape}")
    if X.shape[0] < 2:
        raise ArgumentError("standardize needs at least 2 instances")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise NumericError("non-finite value in lasso inputs")

    means = X.mean(axis=0)
    stds = X.std(axis=0, ddof=1)
    stds = np.where(np.ptp(X, axis=0) == 0, 0.0, stds)
    scale = np.where(stds > 0, stds, 1.0)
    X_std = np.where(stds > 0, (X - means) / scale, 0.0)
    y_mean = float(y.mean())
    return X_std, y - y_mean, StandardizationStats(means, stds, y_mean)


def lasso_objective(X: np.ndarray, y: np.ndarray, coef: np.ndarray, lam: float) -> float:
    residual = y - X @ coef
    return float(residual @ residual + lam * np.abs(coef).sum())


def fit_lasso(X: np.ndarray,
              y: np.ndarray,
              lam: float,
              tol: float = 1e-7,
              max_iter: int = 10000,
              init: Optional[np.ndarray] = None,
              track_objective: bool = False) -> LassoFit:
    """
    Cyclic coordinate descent with soft-thresholding

    Args:
        X: standardized n x p matrix (any column scaling is accepted)
        y: centered response
        lam: L1 penalty, >= 0
        tol: stop once the largest coefficient change in a sweep is below tol
        max_iter: sweep limit; reaching it is reported via converged=False
        init: warm start
        track_objective: record the objective after every sweep

    Returns:
        LassoFit
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if lam < 0:
        raise ArgumentError(f"lambda must be nonnegative, got {lam}")
    if tol <= 0:
        raise ArgumentError(f"tol must be positive, got {tol}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and math.isfinite(lam)):
        raise NumericError("non-finite value in lasso inputs")

    gram = X.T @ X
    xty = X.T @ y
    diag = np.diag(gram).copy()
    active = np.flatnonzero(diag > 0)
    coef = np.zeros(X.shape[1]) if init is None else np.array(init, dtype=np.float64)
    coef[diag <= 0] = 0.0
    half = lam / 2.0

    objective: List[float] = []
    if track_objective:
        objective.append(lasso_objective(X, y, coef, lam))

    converged = False
    n_iter = 0
    # gradient term kept incrementally: g = X'X b
    g = gram @ coef
    for n_iter in range(1, max_iter + 1):
        max_change = 0.0
        for j in active:
            old = coef[j]
            rho = xty[j] - g[j] + diag[j] * old
            new = np.sign(rho) * max(abs(rho) - half, 0.0) / diag[j]
            if new != old:
                delta = new - old
                g += gram[:, j] * delta
                coef[j] = new
                max_change = max(max_change, abs(delta))
        if track_objective:
            objective.append(lasso_objective(X, y, coef, lam))
        if max_change < tol:
            converged = True
            break

    if not converged:
        logger.warning("lasso did not converge in %d sweeps (lambda=%.6g)", max_iter, lam)
    return LassoFit(coef=coef, n_iter=n_iter, converged=converged, objective=objective)


def lambda_max(X: np.ndarray, y: np.ndarray) -> float:
    return float(2.0 * np.max(np.abs(np.asarray(X).T @ np.asarray(y)))) if np.size(X) else 0.0


def lambda_grid(lam_max: float, grid_size: int) -> np.ndarray:
    """Log-spaced from lam_max down to 1e-4 * lam_max"""
    if grid_size < 1:
        raise ArgumentError(f"grid_size must be >= 1, got {grid_size}")
    if lam_max <= 0:
        return np.zeros(grid_size)
    if grid_size == 1:
        return np.array([lam_max])
    return np.geomspace(lam_max, GRID_RATIO * lam_max, grid_size)


def lasso_path(X: np.ndarray, y: np.ndarray, lambdas: Sequence[float],
               tol: float = 1e-7, max_iter: int = 10000) -> np.ndarray:
    """Warm-started fits along a decreasing lambda grid; returns len(lambdas) x p"""
    path = np.zeros((len(lambdas), X.shape[1]))
    coef = None
    for i, lam in enumerate(lambdas):
        fit = fit_lasso(X, y, float(lam), tol=tol, max_iter=max_iter, init=coef)
        coef = fit.coef
        path[i] = coef
    return path


def select_lambda(X: np.ndarray,
                  y: np.ndarray,
                  n_folds: int = 5,
                  grid_size: int = 50,
                  seed: int = 0,
                  tol: float = 1e-7,
                  max_iter: int = 10000) -> float:
    """
    Choose lambda by minimum mean K-fold validation MSE

    Folds are shuffled deterministically from seed; each training fold is re-centered
    and fit along the warm-started path. The RSS term grows with the row count, so a
    fold with n_train rows is fit at lambda * n_train / n; the returned value is the
    full-data grid point.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if n_folds < 2:
        raise ArgumentError(f"n_folds must be >= 2, got {n_folds}")
    if X.shape[0] < n_folds:
        raise ArgumentError(f"{X.shape[0]} instances cannot form {n_folds} folds")

    grid = lambda_grid(lambda_max(X, y), grid_size)
    if grid_size == 1 or grid[0] == 0:
        return float(grid[0])

    errors = np.zeros(len(grid))
    folds = KFold(n_splits=n_folds, shuffle=True, random_state=seed)
    for train, test in folds.split(X):
        x_mean = X[train].mean(axis=0)
        y_mean = y[train].mean()
        fold_grid = grid * (len(train) / X.shape[0])
        path = lasso_path(X[train] - x_mean, y[train] - y_mean, fold_grid, tol=tol, max_iter=max_iter)
        predictions = (X[test] - x_mean) @ path.T + y_mean
        errors += ((predictions - y[test][:, None]) ** 2).mean(axis=0)
    errors /= n_folds

    best = int(np.argmin(errors))
    logger.debug("lambda grid [%.4g .. %.4g], chose %.4g (cv mse %.4g)",
                 grid[0], grid[-1], grid[best], errors[best])
    return float(grid[best])


def fit_movement_model(X: np.ndarray, y: np.ndarray,
                       variable_names: Sequence[str] = PREDICTOR_NAMES,
                       settings: Optional[LassoSettings] = None,
                       seed: int = 0) -> LassoModel:
    """standardize -> select_lambda -> fit_lasso -> back-transform"""
    settings = settings or LassoSettings()
    X_std, y_c, stats = standardize(X, y)
    lam = select_lambda(X_std, y_c, n_folds=settings.folds, grid_size=settings.grid_size,
                        seed=seed, tol=settings.tolerance, max_iter=settings.max_iter)
    fit = fit_lasso(X_std, y_c, lam, tol=settings.tolerance, max_iter=settings.max_iter)

    scale = np.where(stats.stds > 0, stats.stds, 1.0)
    raw = np.where(stats.constant, 0.0, fit.coef / scale)
    intercept = stats.y_mean - float(raw @ stats.means)
    selected = frozenset(
        name for name, b in zip(variable_names, fit.coef) if abs(b) >= SELECTION_TOLERANCE
    )
    return LassoModel(lam, raw, intercept, fit.coef, stats, tuple(variable_names), selected, fit.converged)


@dataclass(frozen=True)
class FeatureSelection:
    """Per-movement Lasso models plus the selected-variable union"""

    models: Dict[str, LassoModel]
    selected: Tuple[str, ...]

    def coefficient_table(self, scale: str = "raw") -> pd.DataFrame:
        """24 rows x {Left turn, Through, Right turn}"""
        if scale not in ("raw", "standardized"):
            raise ArgumentError(f"scale must be 'raw' or 'standardized', got '{scale}'")
        columns = {}
        for movement in LABEL_NAMES:
            model = self.models[movement]
            values = model.coefficients if scale == "raw" else model.standardized
            columns[MOVEMENT_TITLES[movement]] = values
        table = pd.DataFrame(columns, index=pd.Index(PREDICTOR_NAMES, name="variable"))
        return table + 0.0  # -0.0 renders as 0

    def to_dict(self) -> Dict:
        return {
            "selected": list(self.selected),
            "models": {movement: model.to_dict() for movement, model in self.models.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "FeatureSelection":
        models = {movement: LassoModel.from_dict(m) for movement, m in data["models"].items()}
        return cls(models=models, selected=tuple(data["selected"]))


def select_features(dataset: Dataset,
                    settings: Optional[LassoSettings] = None,
                    seed: int = 0) -> FeatureSelection:
    """
    Fit one Lasso model per movement and take the union of selected variables

    Args:
        dataset: labeled source data
        settings: grid size, folds, tolerance
        seed: fold shuffling seed (shared by the three movements)

    Returns:
        FeatureSelection with the union ordered as PREDICTOR_NAMES
    """
    dataset.require_labeled("feature selection")
    X = dataset.features()
    models = {}
    for movement in LABEL_NAMES:
        models[movement] = fit_movement_model(X, dataset.labels(movement), PREDICTOR_NAMES, settings, seed)
        logger.info("lasso %s: lambda=%.4g, %d variables selected", movement,
                    models[movement].lambda_, len(models[movement].selected))

    union = tuple(name for name in PREDICTOR_NAMES if any(name in m.selected for m in models.values()))
    if not union:
        logger.warning("lasso selected no variables for any movement")
    return FeatureSelection(models=models, selected=union)
