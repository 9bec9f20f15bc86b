"""
CSV ingestion and JSON persistence

Tabular data is CSV (header-driven, see domain_model.CSV_COLUMNS); models, plans and
reports are JSON. Persisted models use a versioned envelope:
    {format_version, created, model_type, config, payload}
"""

import json
import logging
import os
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import pandas as pd
from pydantic import BaseModel, ConfigDict
from pydantic import ValidationError as PydanticValidationError

from tmc_transfer.boosting import AdaBoostEnsemble, TrAModel
from tmc_transfer.config import ensure_parent
from tmc_transfer.domain_model import CSV_COLUMNS, Dataset, validate_instance
from tmc_transfer.errors import ModelFormatError, ValidationError
from tmc_transfer.lasso import FeatureSelection
from tmc_transfer.pipeline import TransferPlan

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
MAX_DIAGNOSTICS = 20

ModelType = Literal["TransferPlan", "TrAModel", "AdaBoostEnsemble", "FeatureSelection"]

MODEL_TYPES = {
    "TransferPlan": TransferPlan,
    "TrAModel": TrAModel,
    "AdaBoostEnsemble": AdaBoostEnsemble,
    "FeatureSelection": FeatureSelection,
}

Persistable = Union[TransferPlan, TrAModel, AdaBoostEnsemble, FeatureSelection]


class ModelEnvelope(BaseModel):
    model_config = ConfigDict(extra="forbid")

    format_version: int
    created: str
    model_type: ModelType
    config: Dict[str, Any] = {}
    payload: Dict[str, Any]


def build_timestamp() -> str:
    """SOURCE_DATE_EPOCH when set, else the Unix epoch, so equal runs write equal files"""
    raw = os.getenv("SOURCE_DATE_EPOCH", "0")
    try:
        seconds = int(raw)
    except ValueError:
        logger.warning("ignoring non-integer SOURCE_DATE_EPOCH '%s'", raw)
        seconds = 0
    return datetime.fromtimestamp(seconds, tz=timezone.utc).isoformat()


def ingest_csv(path: Union[str, Path], allow_unlabeled: bool = False) -> Dataset:
    """
    Parse and validate a domain-model CSV

    Args:
        path: CSV file with the CSV_COLUMNS header, any column order
        allow_unlabeled: accept rows whose label cells are empty (target files)

    Returns:
        Dataset in file order

    Raises:
        ValidationError: header mismatch (missing / extra columns listed) or row
            failures, reported with their file line numbers
    """
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, na_filter=False)
    except FileNotFoundError:
        raise ValidationError(f"no such file: {path}")
    except pd.errors.EmptyDataError:
        raise ValidationError(f"{path} is empty")
    except (OSError, pd.errors.ParserError) as e:
        raise ValidationError(f"cannot read {path}: {e}")

    header = [str(c).strip() for c in frame.columns]
    frame.columns = header
    missing = [c for c in CSV_COLUMNS if c not in header]
    extra = [c for c in header if c not in CSV_COLUMNS]
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing columns: {', '.join(missing)}")
        if extra:
            parts.append(f"unexpected columns: {', '.join(extra)}")
        raise ValidationError(f"header mismatch in {path.name} ({'; '.join(parts)})", row=1)

    instances = []
    diagnostics: List[str] = []
    for position, record in enumerate(frame.to_dict("records")):
        line = position + 2
        try:
            instances.append(validate_instance(record, row=line, allow_unlabeled=allow_unlabeled))
        except ValidationError as e:
            diagnostics.append(str(e))

    if diagnostics:
        shown = "; ".join(diagnostics[:MAX_DIAGNOSTICS])
        more = f" (+{len(diagnostics) - MAX_DIAGNOSTICS} more)" if len(diagnostics) > MAX_DIAGNOSTICS else ""
        raise ValidationError(f"{len(diagnostics)} invalid rows in {path.name}: {shown}{more}")

    try:
        dataset = Dataset(instances)
    except ValidationError as e:
        line = e.row + 1 if e.row is not None else None
        raise ValidationError(e.message, row=line, field=e.field) from None
    logger.info("read %d instances from %s", len(dataset), path)
    return dataset


def write_dataset_csv(dataset: Dataset, path: Union[str, Path]) -> Path:
    path = ensure_parent(Path(path))
    dataset.to_frame().to_csv(path, index=False, lineterminator="\n")
    return path


def write_frame_csv(frame: pd.DataFrame, path: Union[str, Path], index: bool = False) -> Path:
    path = ensure_parent(Path(path))
    frame.to_csv(path, index=index, lineterminator="\n")
    return path


def write_json(data: Any, path: Union[str, Path]) -> Path:
    path = ensure_parent(Path(path))
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        json.dump(data, f, indent=2)
        f.write("\n")
    return path


def save_model(model: Persistable, path: Union[str, Path], config: Optional[Dict[str, Any]] = None) -> Path:
    """Write `model` inside a versioned envelope"""
    for model_type, cls in MODEL_TYPES.items():
        if isinstance(model, cls):
            break
    else:
        raise ModelFormatError(f"cannot persist objects of type {type(model).__name__}")

    envelope = ModelEnvelope(
        format_version=FORMAT_VERSION,
        created=build_timestamp(),
        model_type=model_type,
        config=config or {},
        payload=model.to_dict(),
    )
    return write_json(envelope.model_dump(), path)


def load_model(path: Union[str, Path], expected: Optional[str] = None) -> Persistable:
    """
    Read a model written by save_model

    Raises:
        ModelFormatError: unreadable or truncated file, unsupported format_version,
            envelope or payload schema violation, or a model of another type than `expected`
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as e:
        raise ModelFormatError(f"cannot read model file {path}: {e}")
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"model file {path} is truncated or not JSON: {e}")

    if not isinstance(raw, dict):
        raise ModelFormatError(f"model file {path} does not hold an envelope object")
    version = raw.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported format_version {version!r} in {path} (expected {FORMAT_VERSION})")

    try:
        envelope = ModelEnvelope.model_validate(raw)
    except PydanticValidationError as e:
        raise ModelFormatError(f"invalid model envelope in {path}: {e}")
    if expected is not None and envelope.model_type != expected:
        raise ModelFormatError(f"{path} holds a {envelope.model_type}, expected {expected}")

    try:
        return MODEL_TYPES[envelope.model_type].from_dict(envelope.payload)
    except (KeyError, TypeError, ValueError, IndexError) as e:
        raise ModelFormatError(f"invalid {envelope.model_type} payload in {path}: {e}")
