"""
AdaBoost.R2 and Two-stage TrAdaBoost.R2

The pool is ordered source block first (n rows), target block second (m rows).
The outer loop moves weight mass onto the target block on the fixed schedule
f_t = m/(n+m) + t/(S-1) * (1 - m/(n+m)),  t = 0..S-1,
each stage scored by F-fold cross-validation over the target block only.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from sklearn.model_selection import KFold

from tmc_transfer.config import BoostingSettings, TreeParams
from tmc_transfer.errors import ArgumentError, NumericError
from tmc_transfer.weak_learner import RegressionTree, fit_tree

logger = logging.getLogger(__name__)

LossKind = Literal["linear", "square", "exponential"]

RESIDUAL_FLOOR = 1e-12
DEGENERATE_BETA = 0.999
BETA_FLOOR = 1e-308
BISECTION_TOL = 1e-8
BISECTION_MAX_ITER = 200


def adjusted_errors(residuals: np.ndarray, loss: LossKind = "linear") -> np.ndarray:
    """
    Map absolute residuals into [0, 1] relative to the largest one

    linear r/D, square (r/D)^2, exponential 1 - exp(-r/D); D is floored at 1e-12.
    """
    r = np.asarray(residuals, dtype=np.float64)
    if np.any(r < 0):
        raise ArgumentError("residuals must be nonnegative")
    if r.size == 0:
        return r.copy()
    scaled = r / max(float(r.max()), RESIDUAL_FLOOR)
    if loss == "linear":
        return scaled
    if loss == "square":
        return scaled ** 2
    if loss == "exponential":
        return 1.0 - np.exp(-scaled)
    raise ArgumentError(f"unknown loss kind '{loss}'")


def weighted_median(values: Sequence[float], weights: Sequence[float]) -> float:
    """Smallest value whose cumulative weight (ascending order) reaches half the total"""
    values = np.asarray(values, dtype=np.float64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if values.size == 0:
        raise ArgumentError("weighted_median of an empty sequence")
    if values.shape != weights.shape:
        raise ArgumentError("values and weights differ in length")
    if weights.sum() <= 0:
        raise ArgumentError("weights must have a positive sum")
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(weights[order])
    position = int(np.argmax(cumulative >= 0.5 * cumulative[-1]))
    return float(values[order][position])


def _weighted_median_rows(predictions: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Row-wise weighted_median of an (n_samples, n_estimators) matrix"""
    order = np.argsort(predictions, axis=1, kind="stable")
    cumulative = np.cumsum(weights[order], axis=1)
    reached = cumulative >= 0.5 * cumulative[:, -1][:, None]
    position = reached.argmax(axis=1)
    rows = np.arange(predictions.shape[0])
    return predictions[rows, order[rows, position]]


@dataclass
class WeightVector:
    """Instance weights over the pool; source block first"""

    weights: np.ndarray
    n: int
    m: int

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.shape != (self.n + self.m,):
            raise ArgumentError(f"weight vector of length {self.weights.shape} does not match n+m={self.n + self.m}")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ArgumentError("weights must be finite and nonnegative")

    @classmethod
    def uniform(cls, n: int, m: int) -> "WeightVector":
        if n + m <= 0:
            raise ArgumentError("empty pool")
        return cls(np.full(n + m, 1.0 / (n + m)), n, m)

    @property
    def source(self) -> np.ndarray:
        return self.weights[:self.n]

    @property
    def target(self) -> np.ndarray:
        return self.weights[self.n:]

    @property
    def target_mass(self) -> float:
        return float(self.target.sum())

    def copy(self) -> "WeightVector":
        return WeightVector(self.weights.copy(), self.n, self.m)


@dataclass(frozen=True)
class BetaSolution:
    beta: float
    target_mass: float
    degenerate: bool = False
    limit: bool = False


def update_weights(weights: WeightVector, source_errors: np.ndarray, beta: float) -> WeightVector:
    """
    w_i <- w_i * beta^e_i / Z on the source block, w_i / Z on the target block

    beta = 0 is the limit update: the whole source block goes to zero, rows with
    e_i = 0 included (no 0^0 = 1 carry-over), so the target block holds all the mass.
    """
    e = np.asarray(source_errors, dtype=np.float64)
    if e.shape != (weights.n,):
        raise ArgumentError(f"expected {weights.n} source errors, got {e.shape}")
    if not 0.0 <= beta <= 1.0:
        raise ArgumentError(f"beta must lie in [0, 1], got {beta}")

    updated = weights.weights.copy()
    if beta == 0.0:
        updated[:weights.n] = 0.0
    elif beta != 1.0:
        updated[:weights.n] *= np.power(beta, e)
    total = updated.sum()
    if total <= 0:
        raise NumericError("weight update removed all mass")
    return WeightVector(updated / total, weights.n, weights.m)


def solve_beta(weights: WeightVector, source_errors: np.ndarray, target_fraction: float) -> BetaSolution:
    """
    Bisection for beta in (0, 1] so that the updated target mass equals target_fraction

    Target mass after the update is monotone decreasing in beta. If every source error
    is zero no beta moves mass and (1, degenerate) is returned; target_fraction = 1 is
    solved by the beta -> 0 limit.
    """
    e = np.asarray(source_errors, dtype=np.float64)
    if e.shape != (weights.n,):
        raise ArgumentError(f"expected {weights.n} source errors, got {e.shape}")
    if np.any(e < 0) or np.any(e > 1):
        raise ArgumentError("source errors must lie in [0, 1]")
    current = weights.target_mass
    f = float(target_fraction)
    if not (current - BISECTION_TOL <= f <= 1.0):
        raise ArgumentError(f"target fraction {f} outside [{current}, 1]")

    if f <= current + BISECTION_TOL:
        return BetaSolution(1.0, current)
    if weights.n == 0 or not np.any(e > 0):
        logger.warning("all source errors are zero; target mass stays at %.6f", current)
        return BetaSolution(1.0, current, degenerate=True)
    if f >= 1.0:
        return BetaSolution(0.0, 1.0, limit=True)

    def mass(beta: float) -> float:
        return update_weights(weights, e, beta).target_mass

    lo, hi = 0.0, 1.0
    beta, achieved = 1.0, current
    for _ in range(BISECTION_MAX_ITER):
        beta = (lo + hi) / 2.0
        achieved = mass(beta)
        if abs(achieved - f) <= BISECTION_TOL:
            break
        if achieved < f:
            hi = beta
        else:
            lo = beta

    degenerate = abs(achieved - f) > BISECTION_TOL
    if degenerate:
        logger.warning("target mass %.6f unreachable, best %.6f at beta=%.3g", f, achieved, beta)
    return BetaSolution(beta, achieved, degenerate=degenerate)


def stage_schedule(n: int, m: int, steps: int) -> List[float]:
    """Target-mass fractions f_0..f_{S-1}; f_0 = m/(n+m) and f_{S-1} = 1 exactly"""
    if steps < 1:
        raise ArgumentError(f"steps must be >= 1, got {steps}")
    if m < 1 or n < 0:
        raise ArgumentError(f"invalid pool sizes n={n}, m={m}")
    start = m / (n + m)
    if steps == 1:
        return [start]
    schedule = []
    for t in range(steps):
        if t == 0:
            schedule.append(start)
        elif t == steps - 1:
            schedule.append(1.0)
        else:
            schedule.append(start + (t / (steps - 1)) * (1.0 - start))
    return schedule


class AdaBoostEnsemble:
    """Weak trees combined by weighted median with stage weights ln(1/beta)"""

    def __init__(self, trees: List[RegressionTree], stage_log_weights: List[float],
                 loss_kind: LossKind = "linear", degenerate: bool = False):
        if len(trees) != len(stage_log_weights) or not trees:
            raise ArgumentError("ensemble needs one stage weight per tree and at least one tree")
        self.trees = list(trees)
        self.stage_log_weights = [float(w) for w in stage_log_weights]
        self.loss_kind = loss_kind
        self.degenerate = degenerate

    @property
    def n_features(self) -> int:
        return self.trees[0].n_features

    def raw_predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(1, -1)
        predictions = np.column_stack([tree.predict(X) for tree in self.trees])
        return _weighted_median_rows(predictions, np.asarray(self.stage_log_weights))

    def predict(self, X: np.ndarray) -> np.ndarray:
        """Weighted-median prediction, clamped at 0"""
        return np.maximum(self.raw_predict(X), 0.0)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "loss_kind": self.loss_kind,
            "degenerate": self.degenerate,
            "stage_log_weights": self.stage_log_weights,
            "trees": [tree.to_dict() for tree in self.trees],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AdaBoostEnsemble":
        return cls(
            trees=[RegressionTree.from_dict(t) for t in data["trees"]],
            stage_log_weights=list(data["stage_log_weights"]),
            loss_kind=data.get("loss_kind", "linear"),
            degenerate=bool(data.get("degenerate", False)),
        )


def _check_weights(init_weights: Optional[np.ndarray], n: int) -> np.ndarray:
    if init_weights is None:
        return np.full(n, 1.0 / n)
    w = np.asarray(init_weights, dtype=np.float64).ravel()
    if w.shape != (n,):
        raise ArgumentError(f"expected {n} weights, got {w.shape}")
    if not np.all(np.isfinite(w)) or np.any(w < 0) or w.sum() <= 0:
        raise ArgumentError("weights must be finite, nonnegative and sum to a positive value")
    return w / w.sum()


def adaboost_r2_fit(X: np.ndarray,
                    y: np.ndarray,
                    init_weights: Optional[np.ndarray] = None,
                    iterations: int = 30,
                    tree_params: Optional[TreeParams] = None,
                    loss: LossKind = "linear",
                    frozen_source: Optional[Union[int, np.ndarray]] = None,
                    weight_log: Optional[List[np.ndarray]] = None) -> AdaBoostEnsemble:
    """
    Drucker's AdaBoost.R2 with weighted tree fits

    Args:
        X, y: training pool
        init_weights: starting weights (normalized to 1; uniform if None)
        iterations: boosting rounds T
        tree_params: weak learner limits
        loss: adjusted-error kind
        frozen_source: source rows whose weights never change, as a leading-block
            count or a boolean mask / index array; the target block is rescaled to
            keep its total mass. If every row is frozen the weights never move.
        weight_log: if given, receives a copy of the weights before every round

    Returns:
        AdaBoostEnsemble
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = X.shape[0]
    if iterations < 1:
        raise ArgumentError(f"iterations must be >= 1, got {iterations}")
    if n == 0 or y.shape[0] != n:
        raise ArgumentError("empty or mismatched training pool")
    w = _check_weights(init_weights, n)

    frozen = np.zeros(n, dtype=bool)
    if frozen_source is not None:
        if isinstance(frozen_source, (int, np.integer)):
            frozen[:int(frozen_source)] = True
        else:
            index = np.asarray(frozen_source)
            if index.dtype == bool:
                frozen = index.copy()
            else:
                frozen[index.astype(np.int64)] = True
    free = ~frozen

    trees: List[RegressionTree] = []
    stage_weights: List[float] = []
    degenerate = False

    for round_index in range(iterations):
        if weight_log is not None:
            weight_log.append(w.copy())
        tree = fit_tree(X, y, w, tree_params)
        errors = adjusted_errors(np.abs(tree.predict(X) - y), loss)
        error_rate = float(np.dot(w, errors))

        if error_rate <= 0:
            trees.append(tree)
            stage_weights.append(math.log(1.0 / BETA_FLOOR))
            break
        if error_rate >= 0.5:
            if round_index == 0:
                logger.warning("first boosting round has weighted error %.4f >= 0.5; keeping one tree", error_rate)
                trees.append(tree)
                stage_weights.append(math.log(1.0 / DEGENERATE_BETA))
                degenerate = True
            break

        beta = error_rate / (1.0 - error_rate)
        trees.append(tree)
        stage_weights.append(math.log(1.0 / max(beta, BETA_FLOOR)))

        factor = np.power(beta, 1.0 - errors)
        if frozen_source is None:
            w = w * factor
            w /= w.sum()
        elif free.any():
            mass = w[free].sum()
            boosted = w[free] * factor[free]
            boosted_sum = boosted.sum()
            if boosted_sum > 0:
                w = w.copy()
                w[free] = boosted * (mass / boosted_sum)

    return AdaBoostEnsemble(trees, stage_weights, loss, degenerate)


@dataclass
class TrAModel:
    """Stage ensembles of the two-stage run; predictions come from the CV-best stage"""

    stage_models: List[AdaBoostEnsemble]
    stage_errors: List[float]
    chosen_stage: int
    config: Dict[str, Any]
    betas: List[float] = field(default_factory=list)
    target_masses: List[float] = field(default_factory=list)
    degenerate_stages: List[int] = field(default_factory=list)
    weight_trace: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def chosen(self) -> AdaBoostEnsemble:
        return self.stage_models[self.chosen_stage]

    @property
    def n_features(self) -> int:
        return self.chosen.n_features

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self.chosen.predict(X)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "config": self.config,
            "chosen_stage": self.chosen_stage,
            "stage_errors": self.stage_errors,
            "betas": self.betas,
            "target_masses": self.target_masses,
            "degenerate_stages": self.degenerate_stages,
            "stage_models": [model.to_dict() for model in self.stage_models],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrAModel":
        return cls(
            stage_models=[AdaBoostEnsemble.from_dict(s) for s in data["stage_models"]],
            stage_errors=[float(e) for e in data["stage_errors"]],
            chosen_stage=int(data["chosen_stage"]),
            config=dict(data.get("config", {})),
            betas=[float(b) for b in data.get("betas", [])],
            target_masses=[float(t) for t in data.get("target_masses", [])],
            degenerate_stages=[int(s) for s in data.get("degenerate_stages", [])],
        )


def predict(model: Union[TrAModel, AdaBoostEnsemble], X: np.ndarray) -> np.ndarray:
    """Prediction for either model kind, clamped at 0"""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if X.shape[1] != model.n_features:
        raise ArgumentError(f"dimension mismatch: model expects {model.n_features} features, got {X.shape[1]}")
    return model.predict(X)


def _rmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def _cv_stage_error(X_source, y_source, X_target, y_target, weights: WeightVector,
                    settings: BoostingSettings, folds: List[Tuple[np.ndarray, np.ndarray]],
                    jobs: int) -> float:
    source_w = weights.source
    target_w = weights.target
    target_mass = target_w.sum()

    def run_fold(split: Tuple[np.ndarray, np.ndarray]) -> float:
        train, test = split
        kept = target_w[train]
        kept_sum = kept.sum()
        scaled = kept * (target_mass / kept_sum) if kept_sum > 0 else np.full(len(train), target_mass / len(train))
        pool_X = np.vstack([X_source, X_target[train]])
        pool_y = np.concatenate([y_source, y_target[train]])
        pool_w = np.concatenate([source_w, scaled])
        if pool_w.sum() <= 0:
            pool_w = np.full(len(pool_y), 1.0)
        model = adaboost_r2_fit(pool_X, pool_y, pool_w, settings.iterations, settings.tree,
                                settings.loss, frozen_source=len(y_source))
        return _rmse(y_target[test], model.predict(X_target[test]))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=min(jobs, len(folds))) as executor:
            fold_errors = list(executor.map(run_fold, folds))
    else:
        fold_errors = [run_fold(split) for split in folds]
    return float(np.mean(fold_errors))


def two_stage_fit(X_source: np.ndarray,
                  y_source: np.ndarray,
                  X_target: np.ndarray,
                  y_target: np.ndarray,
                  settings: Optional[BoostingSettings] = None,
                  seed: int = 0,
                  jobs: int = 1) -> TrAModel:
    """
    Two-stage TrAdaBoost.R2

    Each outer step t: fit one weighted tree on the pool to get adjusted errors,
    solve beta so the target block holds f_t of the mass, update the weights, then
    score a frozen-source AdaBoost.R2 by F-fold CV over the target block and keep the
    full-pool frozen-source ensemble as the stage model.

    Args:
        X_source, y_source: source pool
        X_target, y_target: labeled rows playing the target role (the substituted slice)
        settings: S, F, T, loss, tree params
        seed: target-fold shuffling seed
        jobs: workers for the CV folds

    Returns:
        TrAModel with chosen_stage = argmin of the stage CV errors
    """
    settings = settings or BoostingSettings()
    X_source = np.asarray(X_source, dtype=np.float64)
    X_target = np.asarray(X_target, dtype=np.float64)
    y_source = np.asarray(y_source, dtype=np.float64).ravel()
    y_target = np.asarray(y_target, dtype=np.float64).ravel()
    n, m = len(y_source), len(y_target)
    if n == 0 or m == 0:
        raise ArgumentError("two_stage_fit needs non-empty source and target data")
    if X_source.shape[0] != n or X_target.shape[0] != m or X_source.shape[1] != X_target.shape[1]:
        raise ArgumentError("source/target matrices do not match their labels or each other")
    if m < settings.folds:
        raise ArgumentError(f"{m} target instances cannot form {settings.folds} folds")

    X = np.vstack([X_source, X_target])
    y = np.concatenate([y_source, y_target])
    splitter = KFold(n_splits=settings.folds, shuffle=True, random_state=seed)
    folds = list(splitter.split(X_target))
    schedule = stage_schedule(n, m, settings.steps)

    weights = WeightVector.uniform(n, m)
    stage_models: List[AdaBoostEnsemble] = []
    stage_errors: List[float] = []
    betas: List[float] = []
    masses: List[float] = []
    degenerate_stages: List[int] = []
    trace: List[np.ndarray] = []

    for t, fraction in enumerate(schedule):
        if t > 0:
            tree = fit_tree(X, y, weights.weights, settings.tree)
            errors = adjusted_errors(np.abs(tree.predict(X) - y), settings.loss)
            solution = solve_beta(weights, errors[:n], fraction)
            weights = update_weights(weights, errors[:n], solution.beta)
            if solution.degenerate:
                degenerate_stages.append(t)
            betas.append(solution.beta)
        else:
            betas.append(1.0)
        masses.append(weights.target_mass)
        trace.append(weights.weights.copy())

        error = _cv_stage_error(X_source, y_source, X_target, y_target, weights, settings, folds, jobs)
        model = adaboost_r2_fit(X, y, weights.weights, settings.iterations, settings.tree,
                                settings.loss, frozen_source=n)
        stage_models.append(model)
        stage_errors.append(error)
        logger.debug("stage %d: target mass %.4f, cv rmse %.4f", t, masses[-1], error)

    chosen = int(np.argmin(stage_errors))
    config = {
        "steps": settings.steps,
        "folds": settings.folds,
        "iterations": settings.iterations,
        "loss": settings.loss,
        "tree": settings.tree.model_dump(),
        "seed": seed,
    }
    return TrAModel(stage_models, stage_errors, chosen, config, betas, masses, degenerate_stages, trace)
