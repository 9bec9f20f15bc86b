"""
Run configuration, environment loading and seed derivation

Defaults follow the framework: S = 10 steps, F = 5 folds, 10% data substitution.
Precedence is default < --config JSON file < command line flag.
"""

import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import numpy as np
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field
from pydantic import ValidationError as PydanticValidationError

from tmc_transfer.errors import ArgumentError, StorageError, ValidationError

LOG_LEVELS = {
    "error": logging.ERROR,
    "warn": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}

ModelName = Literal["TL", "KNN", "RF", "AdaBoost"]


class _Settings(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class TreeParams(_Settings):
    """CART hyper-parameters; max_depth None grows until the other stops fire"""

    max_depth: Optional[int] = Field(4, ge=1)
    min_samples_leaf: int = Field(5, ge=1)
    min_weight_fraction_leaf: float = Field(0.0, ge=0.0, le=0.5)


class LassoSettings(_Settings):
    grid_size: int = Field(50, ge=1)
    folds: int = Field(5, ge=2)
    tolerance: float = Field(1e-7, gt=0.0)
    max_iter: int = Field(10000, ge=1)


class BoostingSettings(_Settings):
    steps: int = Field(10, ge=1)
    folds: int = Field(5, ge=2)
    iterations: int = Field(30, ge=1)
    loss: Literal["linear", "square", "exponential"] = "linear"
    tree: TreeParams = TreeParams()


class MatchingSettings(_Settings):
    substitution_fraction: float = Field(0.10, gt=0.0, le=1.0)


class EvalSettings(_Settings):
    models: List[ModelName] = ["TL", "KNN", "RF", "AdaBoost"]
    folds: int = Field(5, ge=2)
    knn_k: int = Field(10, ge=1)
    knn_weighting: Literal["uniform", "inverse_distance"] = "uniform"
    forest_trees: int = Field(50, ge=1)
    forest_feature_fraction: float = Field(0.5, gt=0.0, le=1.0)
    forest_tree: TreeParams = TreeParams(max_depth=8, min_samples_leaf=2)


class GeneratorSettings(_Settings):
    approaches: int = Field(4, ge=3, le=4)
    noise_scale: float = Field(0.1, gt=0.0)
    feature_noise: float = Field(0.1, ge=0.0)


class RunConfig(_Settings):
    """Complete configuration for one CLI invocation"""

    seed: int = 42
    jobs: Optional[int] = Field(None, ge=1)
    lasso: LassoSettings = LassoSettings()
    boosting: BoostingSettings = BoostingSettings()
    matching: MatchingSettings = MatchingSettings()
    eval: EvalSettings = EvalSettings()
    generator: GeneratorSettings = GeneratorSettings()


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def build_config(config_path: Optional[str] = None,
                 overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Layer defaults, an optional JSON config file, and CLI overrides

    Args:
        config_path: Path of a JSON file with any subset of RunConfig keys
        overrides: Nested dict of flag values; None values are ignored

    Returns:
        Validated RunConfig
    """
    layered: Dict[str, Any] = {}

    if config_path:
        try:
            with open(config_path, "r", encoding="utf-8") as f:
                file_values = json.load(f)
        except OSError as e:
            raise ValidationError(f"cannot read config file: {e}") from e
        except json.JSONDecodeError as e:
            raise ValidationError(f"config file is not valid JSON: {e}") from e
        if not isinstance(file_values, dict):
            raise ValidationError("config file must hold a JSON object")
        layered = _deep_merge(layered, file_values)

    if overrides:
        layered = _deep_merge(layered, _drop_none(overrides))

    try:
        return RunConfig.model_validate(layered)
    except PydanticValidationError as e:
        raise ValidationError(f"invalid configuration: {e}") from e


def _drop_none(values: Dict[str, Any]) -> Dict[str, Any]:
    cleaned = {}
    for key, value in values.items():
        if isinstance(value, dict):
            nested = _drop_none(value)
            if nested:
                cleaned[key] = nested
        elif value is not None:
            cleaned[key] = value
    return cleaned


def resolve_jobs(jobs: Optional[int] = None) -> int:
    """Worker count: explicit value, else TMC_JOBS, else processor count"""
    if jobs is not None:
        return max(1, int(jobs))
    env_jobs = os.getenv("TMC_JOBS")
    if env_jobs:
        try:
            return max(1, int(env_jobs))
        except ValueError:
            raise ArgumentError(f"TMC_JOBS must be an integer, got '{env_jobs}'")
    return os.cpu_count() or 1


def derive_seed(seed: int, *keys: int) -> int:
    """Deterministic 32-bit substream seed from (seed, keys...)"""
    sequence = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(k) for k in keys]])
    return int(sequence.generate_state(1)[0])


def configure_logging(level_name: Optional[str] = None) -> int:
    """
    Send diagnostics to stderr at the level named by TMC_LOG

    Returns:
        The numeric level applied
    """
    load_dotenv()
    name = (level_name or os.getenv("TMC_LOG") or "warn").strip().lower()
    if name not in LOG_LEVELS:
        raise ArgumentError(f"TMC_LOG must be one of {sorted(LOG_LEVELS)}, got '{name}'")

    level = LOG_LEVELS[name]
    logger = logging.getLogger("tmc_transfer")
    logger.setLevel(level)
    if not logger.handlers:
        handler = logging.StreamHandler(sys.stderr)
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
        logger.addHandler(handler)
    logger.propagate = False
    return level


def config_echo(config: RunConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json")


def ensure_parent(path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise StorageError(f"cannot create directory {path.parent}: {e.strerror or e}") from e
    return path
