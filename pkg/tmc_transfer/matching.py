"""
Similar-intersection matching and target-domain data substitution

Intersections are compared through 16-bin time-of-day profiles of the time-varying
predictors (mean over days and approaches). The source with the largest summed
Pearson correlation is the match; its instances closest to the target (cosine
similarity in a jointly z-scored space) are substituted into the target role.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from tmc_transfer.domain_model import N_BINS, PREDICTOR_NAMES, TIME_VARYING_FEATURES, Dataset
from tmc_transfer.errors import ArgumentError, MatchingError

logger = logging.getLogger(__name__)


class Correlation(NamedTuple):
    r: float
    degenerate: bool


def pearson(a: Sequence[float], b: Sequence[float]) -> Correlation:
    """
    Sample Pearson correlation

    A zero-variance input gives r = 0 with the degenerate flag set.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ArgumentError(f"length mismatch: {a.size} vs {b.size}")
    if a.size < 2:
        raise ArgumentError("pearson needs at least 2 values")
    if np.all(a == a[0]) or np.all(b == b[0]):
        return Correlation(0.0, True)
    da = a - a.mean()
    db = b - b.mean()
    denominator = math.sqrt(float(np.dot(da, da)) * float(np.dot(db, db)))
    if denominator == 0:
        return Correlation(0.0, True)
    r = float(np.dot(da, db)) / denominator
    return Correlation(max(-1.0, min(1.0, r)), False)


@dataclass(frozen=True)
class ProfileVector:
    """Mean value per peak bin of one variable at one intersection; NaN where no data"""

    intersection_id: str
    variable: str
    values: np.ndarray
    counts: np.ndarray

    @property
    def present(self) -> np.ndarray:
        return self.counts > 0

    @property
    def missing_bins(self) -> List[int]:
        return [int(b) for b in np.flatnonzero(~self.present)]


def time_varying(variables: Sequence[str]) -> List[str]:
    """Variables eligible for profile matching, in the given order"""
    for name in variables:
        if name not in PREDICTOR_NAMES:
            raise ArgumentError(f"unknown predictor '{name}'")
    return [name for name in variables if name in TIME_VARYING_FEATURES]


def build_profiles(dataset: Dataset, intersection_id: str,
                   variables: Sequence[str]) -> Dict[str, ProfileVector]:
    """
    16-bin profiles for the time-varying members of `variables`

    Static and calendar variables are skipped. Bins without observations stay NaN and
    are reported by ProfileVector.missing_bins.
    """
    names = time_varying(variables)
    view = dataset.for_intersection(intersection_id)
    frame = pd.DataFrame(view.features(names), columns=names)
    frame["bin"] = [inst.interval_index for inst in view]

    grouped = frame.groupby("bin")
    means = grouped[names].mean().reindex(range(N_BINS))
    counts = grouped.size().reindex(range(N_BINS), fill_value=0).to_numpy()
    if np.any(counts == 0):
        logger.debug("intersection %s has no data in bins %s", intersection_id,
                     np.flatnonzero(counts == 0).tolist())

    return {
        name: ProfileVector(intersection_id, name, means[name].to_numpy(dtype=np.float64), counts)
        for name in names
    }


@dataclass
class MatchResult:
    """Sources ranked by summed profile correlation; the first entry is the match"""

    target_id: str
    ranking: List[Tuple[str, float]]
    variables: List[str]
    degenerate: Dict[str, List[str]] = field(default_factory=dict)

    @property
    def chosen(self) -> str:
        return self.ranking[0][0]

    @property
    def chosen_score(self) -> float:
        return self.ranking[0][1]

    def score_of(self, source_id: str) -> float:
        return dict(self.ranking)[source_id]

    def to_dict(self) -> Dict:
        return {
            "target_id": self.target_id,
            "chosen": self.chosen,
            "variables": list(self.variables),
            "ranking": [{"intersection_id": i, "score": s} for i, s in self.ranking],
            "degenerate": {k: list(v) for k, v in self.degenerate.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "MatchResult":
        return cls(
            target_id=data["target_id"],
            ranking=[(r["intersection_id"], float(r["score"])) for r in data["ranking"]],
            variables=list(data["variables"]),
            degenerate={k: list(v) for k, v in data.get("degenerate", {}).items()},
        )


def _single_target_id(target: Dataset) -> str:
    ids = target.intersection_ids
    if len(ids) != 1:
        raise ArgumentError(f"expected one target intersection, got {len(ids)}")
    return ids[0]


class IntersectionMatcher:
    """
    Ranks source intersections against a target by profile correlation

    Source profiles are built once and reused for every target.
    """

    def __init__(self, source: Dataset, variables: Sequence[str]):
        if len(source) == 0:
            raise ArgumentError("source dataset is empty")
        names = time_varying(variables)
        if not names:
            names = list(TIME_VARYING_FEATURES)
            logger.warning("no time-varying variable selected; matching on all %d event features", len(names))
        self.variables = names
        self.source_profiles = {
            source_id: build_profiles(source, source_id, names) for source_id in source.intersection_ids
        }

    def score(self, source_id: str, target_profiles: Dict[str, ProfileVector]) -> Tuple[float, List[str], int]:
        """Summed correlation, degenerate variables, variables with common bins"""
        total = 0.0
        degenerate: List[str] = []
        usable = 0
        for name in self.variables:
            s = self.source_profiles[source_id][name]
            t = target_profiles[name]
            common = s.present & t.present
            if not common.any():
                continue
            usable += 1
            if common.sum() < 2:
                degenerate.append(name)
                continue
            corr = pearson(s.values[common], t.values[common])
            if corr.degenerate:
                degenerate.append(name)
            else:
                total += corr.r
        return total, degenerate, usable

    def match(self, target: Dataset) -> MatchResult:
        target_id = _single_target_id(target)
        target_profiles = build_profiles(target, target_id, self.variables)

        scores = []
        degenerate: Dict[str, List[str]] = {}
        usable_any = False
        for source_id in self.source_profiles:
            total, flagged, usable = self.score(source_id, target_profiles)
            usable_any = usable_any or usable > 0
            scores.append((source_id, total))
            if flagged:
                degenerate[source_id] = flagged
                logger.debug("degenerate correlations for %s vs %s: %s", source_id, target_id, flagged)
        if not usable_any:
            raise MatchingError(f"target {target_id} shares no peak bins with any source intersection")

        if degenerate:
            logger.warning("target %s: zero-variance profiles against %d source intersections scored as r=0",
                           target_id, len(degenerate))
        ranking = sorted(scores, key=lambda item: (-item[1], item[0]))
        logger.info("target %s matched to %s (score %.4f)", target_id, ranking[0][0], ranking[0][1])
        return MatchResult(target_id, ranking, list(self.variables), degenerate)


def match_intersections(source: Dataset, target: Dataset, variables: Sequence[str]) -> MatchResult:
    """
    Pick the source intersection whose profiles correlate best with the target's

    Score = sum over the time-varying selected variables of the Pearson correlation
    over bins present at both; ties go to the lexicographically smallest id.
    """
    return IntersectionMatcher(source, variables).match(target)


@dataclass
class SubstitutionResult:
    """Rows of the matched source that play the target role"""

    indices: np.ndarray
    similarities: np.ndarray
    threshold: float
    zero_norm: np.ndarray
    fraction: float

    @property
    def size(self) -> int:
        return int(len(self.indices))

    def to_dict(self) -> Dict:
        return {
            "indices": [int(i) for i in self.indices],
            "threshold": self.threshold,
            "fraction": self.fraction,
            "zero_norm_count": int(self.zero_norm.sum()),
            "similarities": [float(s) for s in self.similarities],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "SubstitutionResult":
        similarities = np.asarray(data["similarities"], dtype=np.float64)
        return cls(
            indices=np.asarray(data["indices"], dtype=np.int64),
            similarities=similarities,
            threshold=float(data["threshold"]),
            zero_norm=np.zeros(len(similarities), dtype=bool),
            fraction=float(data["fraction"]),
        )


def substitution_size(fraction: float, n: int) -> int:
    """ceil(fraction * n), at least one and at most n"""
    if not 0 < fraction <= 1:
        raise ArgumentError(f"fraction must lie in (0, 1], got {fraction}")
    return min(n, max(1, math.ceil(round(fraction * n, 9))))


def cosine_similarities(X_source: np.ndarray, X_target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Cosine similarity of each source row to the target centroid

    Rows are z-scored with statistics of source and target combined; constant
    columns contribute zero. Zero-norm vectors get similarity 0 and a flag.
    """
    X_source = np.asarray(X_source, dtype=np.float64)
    X_target = np.asarray(X_target, dtype=np.float64)
    combined = np.vstack([X_source, X_target])
    mean = combined.mean(axis=0)
    std = combined.std(axis=0)
    constant = np.ptp(combined, axis=0) == 0
    std[constant] = 1.0
    Z_source = (X_source - mean) / std
    Z_source[:, constant] = 0.0
    Z_target = (X_target - mean) / std
    Z_target[:, constant] = 0.0

    centroid = Z_target.mean(axis=0)
    centroid_norm = float(np.linalg.norm(centroid))
    norms = np.linalg.norm(Z_source, axis=1)
    zero_norm = norms == 0
    if centroid_norm == 0:
        logger.warning("target centroid has zero norm; every similarity is 0")
        return np.zeros(len(X_source)), np.ones(len(X_source), dtype=bool)
    if zero_norm.any():
        logger.warning("%d source instances have zero norm after standardization", int(zero_norm.sum()))

    similarities = np.zeros(len(X_source))
    ok = ~zero_norm
    similarities[ok] = (Z_source[ok] @ centroid) / (norms[ok] * centroid_norm)
    return np.clip(similarities, -1.0, 1.0), zero_norm


def substitute_target(source: Dataset, target: Dataset, fraction: float = 0.10,
                      variables: Optional[Sequence[str]] = None) -> SubstitutionResult:
    """
    Indices of the matched-source instances most similar to the target

    Args:
        source: instances of the matched source intersection
        target: target feature rows (labels not used)
        fraction: share of source instances to substitute
        variables: predictors to compare on (all 24 by default)

    Returns:
        SubstitutionResult; indices are in descending similarity, ties in original
        order, and threshold is the similarity of the last selected instance
    """
    if len(source) == 0 or len(target) == 0:
        raise ArgumentError("substitution needs non-empty source and target data")
    names = list(variables) if variables is not None else list(PREDICTOR_NAMES)
    similarities, zero_norm = cosine_similarities(source.features(names), target.features(names))

    k = substitution_size(fraction, len(source))
    order = np.argsort(-similarities, kind="stable")
    chosen = order[:k]
    return SubstitutionResult(
        indices=chosen.astype(np.int64),
        similarities=similarities,
        threshold=float(similarities[chosen[-1]]),
        zero_norm=zero_norm,
        fraction=fraction,
    )
