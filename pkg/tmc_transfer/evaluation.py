"""
Evaluation: metrics, leave-one-intersection-out protocol and grid search

Every fold hides the held-out intersection's labels (a label-stripped view is all the
models ever see) and scores each model per movement. Fold failures are recorded as
{'success': False, 'error': ...} entries and the sweep carries on.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import KFold
from tqdm import tqdm

from tmc_transfer.baselines import AdaBoostR2Regressor, BaggedForest, KNNRegressor, Regressor
from tmc_transfer.config import RunConfig, TreeParams, config_echo, derive_seed
from tmc_transfer.domain_model import LABEL_NAMES, Dataset
from tmc_transfer.errors import ArgumentError
from tmc_transfer.lasso import FeatureSelection, select_features
from tmc_transfer.pipeline import TransferPipeline, resolve_variables

logger = logging.getLogger(__name__)

TABLE_COLUMNS: Dict[str, str] = {"v_lm": "Left-turn", "v_tm": "Through", "v_rm": "Right-turn"}

SELECT_KEY = 11
FOREST_KEY = 12
GRID_KEY = 13


def _pair(y, y_hat) -> Tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise ArgumentError(f"length mismatch: {y.size} vs {y_hat.size}")
    if y.size == 0:
        raise ArgumentError("metrics need at least one value")
    return y, y_hat


def mae(y, y_hat) -> float:
    """Mean absolute error"""
    y, y_hat = _pair(y, y_hat)
    return float(np.mean(np.abs(y - y_hat)))


def rmse(y, y_hat) -> float:
    """Root mean squared error"""
    y, y_hat = _pair(y, y_hat)
    return float(math.sqrt(np.mean((y - y_hat) ** 2)))


class ModelFactory:
    """Trains on a labeled pool and predicts the three movements for a label-stripped target"""

    name = "model"

    def fit_predict(self, train: Dataset, target: Dataset, selection: FeatureSelection,
                    seed: int) -> Dict[str, np.ndarray]:
        raise NotImplementedError


class TransferFactory(ModelFactory):
    """The full transfer pipeline with the fold's feature selection"""

    name = "TL"

    def __init__(self, config: RunConfig, jobs: int = 1):
        self.config = config
        self.jobs = jobs

    def fit_predict(self, train, target, selection, seed):
        config = self.config.model_copy(update={"seed": seed})
        result = TransferPipeline(train, config, self.jobs, selection=selection).run(target)
        return {m: result.predictions[f"{m}_hat"].to_numpy() for m in LABEL_NAMES}


class RegressorFactory(ModelFactory):
    """A pooled supervised baseline, one regressor per movement on the selected variables"""

    def __init__(self, name: str, build: Callable[[int], Regressor]):
        self.name = name
        self.build = build

    def fit_predict(self, train, target, selection, seed):
        variables = resolve_variables(selection)
        X_train = train.features(variables)
        X_target = target.features(variables)
        predictions = {}
        for index, movement in enumerate(LABEL_NAMES):
            model = self.build(derive_seed(seed, index))
            model.fit(X_train, train.labels(movement))
            predictions[movement] = np.maximum(model.predict(X_target), 0.0)
        return predictions


def make_regressor(name: str, config: RunConfig, seed: int = 0, **overrides) -> Regressor:
    """Baseline regressor named as in EvalSettings.models, with config defaults"""
    settings = config.eval
    if name == "KNN":
        return KNNRegressor(overrides.get("k", settings.knn_k), overrides.get("weighting", settings.knn_weighting))
    if name == "RF":
        tree = settings.forest_tree
        if "max_depth" in overrides:
            tree = tree.model_copy(update={"max_depth": overrides["max_depth"]})
        return BaggedForest(overrides.get("n_trees", settings.forest_trees), tree,
                            overrides.get("feature_fraction", settings.forest_feature_fraction), seed)
    if name in ("AdaBoost", "TL"):
        tree = config.boosting.tree
        if "max_depth" in overrides:
            tree = tree.model_copy(update={"max_depth": overrides["max_depth"]})
        return AdaBoostR2Regressor(overrides.get("iterations", config.boosting.iterations), tree,
                                   config.boosting.loss)
    raise ArgumentError(f"unknown model '{name}'")


def build_factories(config: RunConfig, jobs: int = 1) -> Dict[str, ModelFactory]:
    """Factories for config.eval.models, in that order"""
    factories: Dict[str, ModelFactory] = {}
    for name in config.eval.models:
        if name == "TL":
            factories[name] = TransferFactory(config, jobs)
        else:
            factories[name] = RegressorFactory(
                name, lambda s, name=name: make_regressor(name, config, derive_seed(s, FOREST_KEY)))
    return factories


@dataclass
class EvalReport:
    """Per-fold scores plus the averaged comparison tables"""

    models: List[str]
    records: List[Dict[str, Any]]
    failures: List[Dict[str, Any]]
    seed: int
    config: Dict[str, Any] = field(default_factory=dict)

    def breakdown(self) -> pd.DataFrame:
        """model, intersection_id, movement, mae, rmse, n per successful fold"""
        columns = ["model", "intersection_id", "movement", "mae", "rmse", "n"]
        return pd.DataFrame(self.records, columns=columns)

    def _table(self, metric: str) -> pd.DataFrame:
        frame = self.breakdown()
        table = pd.DataFrame(index=pd.Index(self.models, name="model"), columns=list(TABLE_COLUMNS.values()),
                             dtype=np.float64)
        if len(frame):
            means = frame.groupby(["model", "movement"], sort=False)[metric].mean()
            for (model, movement), value in means.items():
                table.loc[model, TABLE_COLUMNS[movement]] = value
        return table

    def mae_table(self) -> pd.DataFrame:
        return self._table("mae")

    def rmse_table(self) -> pd.DataFrame:
        return self._table("rmse")

    def fold_counts(self) -> Dict[str, int]:
        frame = self.breakdown()
        return {m: int(frame.loc[frame["model"] == m, "intersection_id"].nunique()) for m in self.models}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "models": list(self.models),
            "mae": _table_dict(self.mae_table()),
            "rmse": _table_dict(self.rmse_table()),
            "breakdown": self.records,
            "failures": self.failures,
            "config": self.config,
        }


def _table_dict(table: pd.DataFrame) -> Dict[str, Dict[str, Optional[float]]]:
    return {
        model: {column: (None if pd.isna(value) else float(value)) for column, value in row.items()}
        for model, row in table.iterrows()
    }


def _evaluate_fold(dataset: Dataset, held_out: str, fold: int, factories: Mapping[str, ModelFactory],
                   config: RunConfig) -> List[Dict[str, Any]]:
    train = dataset.excluding_intersection(held_out)
    truth = dataset.for_intersection(held_out)
    target = truth.without_labels()
    outcomes: List[Dict[str, Any]] = []

    try:
        selection = select_features(train, config.lasso, derive_seed(config.seed, SELECT_KEY, fold))
    except Exception as e:
        logger.warning("fold %s: feature selection failed: %s", held_out, e)
        return [{'success': False, 'model': name, 'intersection_id': held_out, 'error': str(e)}
                for name in factories]

    for name, factory in factories.items():
        try:
            predictions = factory.fit_predict(train, target, selection, derive_seed(config.seed, fold))
            for movement in LABEL_NAMES:
                y = truth.labels(movement)
                outcomes.append({
                    'success': True,
                    'model': name,
                    'intersection_id': held_out,
                    'movement': movement,
                    'mae': mae(y, predictions[movement]),
                    'rmse': rmse(y, predictions[movement]),
                    'n': int(len(y)),
                })
        except Exception as e:
            logger.warning("fold %s: model %s failed: %s", held_out, name, e)
            outcomes.append({'success': False, 'model': name, 'intersection_id': held_out, 'error': str(e)})
    return outcomes


def loio_evaluate(dataset: Dataset,
                  factories: Mapping[str, ModelFactory],
                  config: Optional[RunConfig] = None,
                  jobs: int = 1,
                  progress: bool = False) -> EvalReport:
    """
    Leave-one-intersection-out comparison

    Args:
        dataset: labeled data with at least 2 intersections
        factories: model name -> factory, in report row order
        config: run configuration (seed, lasso settings, ...)
        jobs: folds evaluated concurrently
        progress: show a tqdm bar over folds

    Returns:
        EvalReport averaging each model's per-intersection metrics
    """
    config = config or RunConfig()
    dataset.require_labeled("evaluation")
    ids = dataset.intersection_ids
    if len(ids) < 2:
        raise ArgumentError(f"leave-one-intersection-out needs >= 2 intersections, got {len(ids)}")
    if not factories:
        raise ArgumentError("no models to evaluate")

    bar = tqdm(total=len(ids), desc="LOIO folds", unit="fold", disable=not progress)
    fold_results: List[List[Dict[str, Any]]] = []
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(ids))) as executor:
            futures = [executor.submit(_evaluate_fold, dataset, held_out, fold, factories, config)
                       for fold, held_out in enumerate(ids)]
            for future in futures:
                fold_results.append(future.result())
                bar.update(1)
    else:
        for fold, held_out in enumerate(ids):
            fold_results.append(_evaluate_fold(dataset, held_out, fold, factories, config))
            bar.update(1)
    bar.close()

    records, failures = [], []
    for outcomes in fold_results:
        for outcome in outcomes:
            if outcome['success']:
                records.append({k: v for k, v in outcome.items() if k != 'success'})
            else:
                failures.append(outcome)
    if failures:
        logger.warning("%d model folds failed", len(failures))
    return EvalReport(list(factories), records, failures, config.seed, config_echo(config))


@dataclass
class GridSearchResult:
    best_params: Dict[str, Any]
    table: pd.DataFrame

    @property
    def best_score(self) -> float:
        return float(self.table["mean_rmse"].min())


def expand_grid(param_grid: Mapping[str, Sequence[Any]]) -> List[Dict[str, Any]]:
    """Cartesian product in insertion order (last key varies fastest)"""
    if not param_grid or any(len(values) == 0 for values in param_grid.values()):
        raise ArgumentError("parameter grid is empty")
    names = list(param_grid)
    return [dict(zip(names, combo)) for combo in itertools.product(*(param_grid[n] for n in names))]


def grid_search(factory: Callable[..., Regressor],
                param_grid: Mapping[str, Sequence[Any]],
                X: np.ndarray,
                y: np.ndarray,
                folds: int = 5,
                seed: int = 0,
                jobs: int = 1) -> GridSearchResult:
    """
    Exhaustive K-fold CV over a parameter grid, scored by mean RMSE

    Fold assignment is fixed by seed and shared by every grid point; ties go to the
    earlier grid point.
    """
    points = expand_grid(param_grid)
    if folds < 2:
        raise ArgumentError(f"folds must be >= 2, got {folds}")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] < folds:
        raise ArgumentError(f"{X.shape[0]} instances cannot form {folds} folds")
    splits = list(KFold(n_splits=folds, shuffle=True, random_state=seed).split(X))

    def score(params: Dict[str, Any]) -> List[float]:
        errors = []
        for train, test in splits:
            model = factory(**params).fit(X[train], y[train])
            errors.append(rmse(y[test], model.predict(X[test])))
        return errors

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(points))) as executor:
            fold_errors = list(executor.map(score, points))
    else:
        fold_errors = [score(p) for p in points]

    rows = []
    for params, errors in zip(points, fold_errors):
        rows.append({**params, "mean_rmse": float(np.mean(errors)), "std_rmse": float(np.std(errors))})
    table = pd.DataFrame(rows)
    best = int(np.argmin(table["mean_rmse"].to_numpy()))
    return GridSearchResult(points[best], table)


TUNING_GRIDS: Dict[str, Dict[str, List[Any]]] = {
    "KNN": {"k": [5, 10, 20, 40]},
    "RF": {"n_trees": [25, 50], "max_depth": [6, 8, None]},
    "AdaBoost": {"iterations": [10, 30], "max_depth": [3, 4, 6]},
    "TL": {"iterations": [10, 30], "max_depth": [3, 4, 6]},
}


def tune_config(dataset: Dataset, config: RunConfig, jobs: int = 1,
                movement: str = "v_tm") -> Tuple[RunConfig, Dict[str, GridSearchResult]]:
    """
    Grid-search each configured model on the pooled data and fold the winners into the config

    TL shares AdaBoost.R2 as its inner learner, so its iterations and tree depth are
    tuned through a plain AdaBoost.R2 fit on the pool.
    """
    dataset.require_labeled("tuning")
    selection = select_features(dataset, config.lasso, derive_seed(config.seed, SELECT_KEY))
    X = dataset.features(resolve_variables(selection))
    y = dataset.labels(movement)
    results: Dict[str, GridSearchResult] = {}
    seed = derive_seed(config.seed, GRID_KEY)

    for name in config.eval.models:
        factory = lambda name=name, **params: make_regressor(name, config, seed, **params)
        results[name] = grid_search(factory, TUNING_GRIDS[name], X, y, config.eval.folds, seed, jobs)
        logger.info("tuned %s: %s (cv rmse %.3f)", name, results[name].best_params, results[name].best_score)

    updates: Dict[str, Any] = {}
    eval_settings = config.eval
    if "KNN" in results:
        eval_settings = eval_settings.model_copy(update={"knn_k": results["KNN"].best_params["k"]})
    if "RF" in results:
        best = results["RF"].best_params
        eval_settings = eval_settings.model_copy(update={
            "forest_trees": best["n_trees"],
            "forest_tree": eval_settings.forest_tree.model_copy(update={"max_depth": best["max_depth"]}),
        })
    updates["eval"] = eval_settings
    boosted = results.get("TL") or results.get("AdaBoost")
    if boosted is not None:
        best = boosted.best_params
        updates["boosting"] = config.boosting.model_copy(update={
            "iterations": best["iterations"],
            "tree": TreeParams(**{**config.boosting.tree.model_dump(), "max_depth": best["max_depth"]}),
        })
    return config.model_copy(update=updates), results
