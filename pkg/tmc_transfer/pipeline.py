"""
Transfer pipeline
Coordinates the stages for one target intersection:
- Lasso feature selection on the labeled source pool
- similar-intersection matching on time-of-day profiles
- data substitution from the matched intersection
- one Two-stage TrAdaBoost.R2 model per movement, trained in parallel
- clamped TMC estimates for every target row
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, TypeVar

import numpy as np
import pandas as pd

from tmc_transfer.boosting import TrAModel, two_stage_fit
from tmc_transfer.config import RunConfig, config_echo, derive_seed
from tmc_transfer.domain_model import KEY_NAMES, LABEL_NAMES, PREDICTOR_NAMES, Dataset
from tmc_transfer.errors import ArgumentError, PipelineStageError
from tmc_transfer.lasso import FeatureSelection, select_features
from tmc_transfer.matching import IntersectionMatcher, MatchResult, SubstitutionResult, substitute_target

logger = logging.getLogger(__name__)

PREDICTION_COLUMNS = list(KEY_NAMES) + [f"{movement}_hat" for movement in LABEL_NAMES]

SELECT_KEY = 1
TRAIN_KEY = 2

T = TypeVar("T")


def _stage(name: str, func: Callable[..., T], *args, **kwargs) -> T:
    try:
        return func(*args, **kwargs)
    except PipelineStageError:
        raise
    except Exception as e:
        raise PipelineStageError(name, e) from e


@dataclass
class TransferPlan:
    """Everything needed to estimate TMCs for one target intersection"""

    target_id: str
    selected_variables: List[str]
    selection: FeatureSelection
    match: MatchResult
    substitution: SubstitutionResult
    substitute_keys: List[List[Any]]
    models: Dict[str, TrAModel]
    config: Dict[str, Any] = field(default_factory=dict)

    def predict(self, dataset: Dataset) -> pd.DataFrame:
        """Estimates for every row of `dataset`, in PREDICTION_COLUMNS layout"""
        X = dataset.features(self.selected_variables)
        frame = pd.DataFrame({
            "intersection_id": [inst.intersection_id for inst in dataset],
            "approach_id": [inst.approach_id for inst in dataset],
            "day_index": [inst.day_index for inst in dataset],
            "interval_index": [inst.interval_index for inst in dataset],
        })
        for movement in LABEL_NAMES:
            if len(dataset):
                frame[f"{movement}_hat"] = np.maximum(self.models[movement].predict(X), 0.0)
            else:
                frame[f"{movement}_hat"] = pd.Series(dtype=np.float64)
        return frame[PREDICTION_COLUMNS]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "target_id": self.target_id,
            "selected_variables": list(self.selected_variables),
            "selection": self.selection.to_dict(),
            "match": self.match.to_dict(),
            "substitution": self.substitution.to_dict(),
            "substitute_keys": [list(key) for key in self.substitute_keys],
            "models": {movement: model.to_dict() for movement, model in self.models.items()},
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TransferPlan":
        return cls(
            target_id=data["target_id"],
            selected_variables=list(data["selected_variables"]),
            selection=FeatureSelection.from_dict(data["selection"]),
            match=MatchResult.from_dict(data["match"]),
            substitution=SubstitutionResult.from_dict(data["substitution"]),
            substitute_keys=[list(key) for key in data["substitute_keys"]],
            models={movement: TrAModel.from_dict(m) for movement, m in data["models"].items()},
            config=dict(data.get("config", {})),
        )


@dataclass
class PipelineResult:
    plan: TransferPlan
    predictions: pd.DataFrame
    timings: Dict[str, float] = field(default_factory=dict)


def resolve_variables(selection: FeatureSelection) -> List[str]:
    """The Lasso union, or all predictors when the union is empty"""
    if selection.selected:
        return list(selection.selected)
    logger.warning("empty variable selection; training on all %d predictors", len(PREDICTOR_NAMES))
    return list(PREDICTOR_NAMES)


class TransferPipeline:
    """
    Runs the transfer stages for one or many target intersections

    Feature selection and source profiles depend only on the source pool, so they are
    computed once per pipeline and shared across targets.
    """

    def __init__(self, source: Dataset, config: Optional[RunConfig] = None, jobs: int = 1,
                 selection: Optional[FeatureSelection] = None):
        self.config = config or RunConfig()
        self.jobs = max(1, int(jobs))
        self.source = source
        _stage("select", source.require_labeled, "source")
        if selection is None:
            selection = _stage("select", select_features, source, self.config.lasso,
                               derive_seed(self.config.seed, SELECT_KEY))
        self.selection = selection
        self.variables = resolve_variables(selection)
        self.matcher = _stage("match", IntersectionMatcher, source, self.variables)

    def run(self, target: Dataset, jobs: Optional[int] = None) -> PipelineResult:
        """
        Estimate TMCs for one target intersection

        Args:
            target: feature rows of a single intersection; labels, if present, are ignored
            jobs: worker budget for this target (defaults to the pipeline's)

        Returns:
            PipelineResult with the TransferPlan and the prediction frame
        """
        jobs = self.jobs if jobs is None else max(1, jobs)
        timings: Dict[str, float] = {}
        start = time.time()

        match = _stage("match", self.matcher.match, target)
        timings["match"] = round(time.time() - start, 3)

        substitute_start = time.time()
        matched_rows = self.source.indices_of(match.chosen)
        substitution = _stage("substitute", substitute_target, self.source.subset(matched_rows), target,
                              self.config.matching.substitution_fraction, self.variables)
        chosen_rows = matched_rows[substitution.indices]
        keep = np.ones(len(self.source), dtype=bool)
        keep[chosen_rows] = False
        source_part = self.source.subset(np.flatnonzero(keep))
        target_part = self.source.subset(chosen_rows)
        timings["substitute"] = round(time.time() - substitute_start, 3)
        logger.info("target %s: %d source rows, %d substituted from %s (threshold %.4f)", match.target_id,
                    len(source_part), len(target_part), match.chosen, substitution.threshold)

        train_start = time.time()
        models = _stage("train", self._train_movements, source_part, target_part, jobs)
        timings["train"] = round(time.time() - train_start, 3)

        plan = TransferPlan(
            target_id=match.target_id,
            selected_variables=list(self.variables),
            selection=self.selection,
            match=match,
            substitution=substitution,
            substitute_keys=[list(self.source[i].key) for i in chosen_rows],
            models=models,
            config=config_echo(self.config),
        )
        predictions = _stage("predict", plan.predict, target)
        timings["total"] = round(time.time() - start, 3)
        return PipelineResult(plan, predictions, timings)

    def _train_movements(self, source_part: Dataset, target_part: Dataset, jobs: int) -> Dict[str, TrAModel]:
        X_source = source_part.features(self.variables)
        X_target = target_part.features(self.variables)
        settings = self.config.boosting

        def train(index: int, movement: str) -> TrAModel:
            return two_stage_fit(
                X_source, source_part.labels(movement), X_target, target_part.labels(movement),
                settings, seed=derive_seed(self.config.seed, TRAIN_KEY, index),
                jobs=max(1, jobs // len(LABEL_NAMES)),
            )

        if jobs == 1:
            return {movement: train(i, movement) for i, movement in enumerate(LABEL_NAMES)}

        with ThreadPoolExecutor(max_workers=min(jobs, len(LABEL_NAMES))) as executor:
            futures = {movement: executor.submit(train, i, movement) for i, movement in enumerate(LABEL_NAMES)}
            return {movement: future.result() for movement, future in futures.items()}

    def run_all(self, targets: Dataset) -> List[PipelineResult]:
        """One plan per target intersection, in intersection-id order"""
        ids = targets.intersection_ids
        if not ids:
            raise ArgumentError("target dataset is empty")
        views = [targets.for_intersection(i) for i in ids]
        if self.jobs == 1 or len(views) == 1:
            return [self.run(view) for view in views]
        with ThreadPoolExecutor(max_workers=min(self.jobs, len(views))) as executor:
            futures = [executor.submit(self.run, view, 1) for view in views]
            return [future.result() for future in futures]


def run_pipeline(source: Dataset, target: Dataset, config: Optional[RunConfig] = None,
                 jobs: int = 1) -> PipelineResult:
    """select -> match -> substitute -> train x3 -> predict, for a single target intersection"""
    return TransferPipeline(source, config, jobs).run(target)


def run_all_targets(source: Dataset, targets: Dataset, config: Optional[RunConfig] = None,
                    jobs: int = 1) -> List[PipelineResult]:
    return TransferPipeline(source, config, jobs).run_all(targets)


def predictions_for(results: Sequence[PipelineResult]) -> pd.DataFrame:
    """Concatenate per-target prediction frames"""
    if not results:
        return pd.DataFrame(columns=PREDICTION_COLUMNS)
    return pd.concat([r.predictions for r in results], ignore_index=True)
