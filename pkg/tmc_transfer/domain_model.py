"""
Domain model: variable schema, encodings and validation

One observation is an (intersection, approach, 15-minute peak interval) row holding
24 predictors in the fixed order of PREDICTOR_NAMES plus three movement-count labels.
"""

import math
from dataclasses import dataclass, fields
from functools import cached_property
from typing import Any, Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from tmc_transfer.errors import ArgumentError, ValidationError

# Through-movement event features, left-turn event features, lanes, POI, codes
PREDICTOR_NAMES: Tuple[str, ...] = (
    "o_tm", "d_tm", "g_tm", "c_tm", "m_tm", "s_tm",
    "o_lm", "d_lm", "g_lm", "c_lm", "m_lm", "s_lm", "p_lm",
    "l_sl", "l_el", "l_tl", "l_er", "l_sr",
    "e_poie", "e_poic",
    "r", "l", "h_moh", "h_hod",
)

PREDICTOR_LABELS: Dict[str, str] = {
    "o_tm": "Occupancy time of through detectors (s)",
    "d_tm": "Detector triggers of through movement",
    "g_tm": "Green time of through movement (s)",
    "c_tm": "Cycles of through movement",
    "m_tm": "Mean gap between through detections (s)",
    "s_tm": "Std of gap between through detections (s)",
    "o_lm": "Occupancy time of left-turn detectors (s)",
    "d_lm": "Detector triggers of left-turn movement",
    "g_lm": "Protected green time of left turn (s)",
    "c_lm": "Cycles of left-turn movement",
    "m_lm": "Mean gap between left-turn detections (s)",
    "s_lm": "Std of gap between left-turn detections (s)",
    "p_lm": "Permissive green time of left turn (s)",
    "l_sl": "Number of shared left turn lanes",
    "l_el": "Number of exclusive left turn lanes",
    "l_tl": "Number of through lanes",
    "l_er": "Number of exclusive right turn lanes",
    "l_sr": "Number of shared right turn lanes",
    "e_poie": "POI employees within 400 m",
    "e_poic": "POI categories within 400 m",
    "r": "Road type",
    "l": "Left-turn type",
    "h_moh": "Minute of hour",
    "h_hod": "Hour of day",
}

EVENT_FEATURES: Tuple[str, ...] = PREDICTOR_NAMES[:13]
DURATION_FEATURES: Tuple[str, ...] = ("o_tm", "g_tm", "o_lm", "g_lm", "p_lm")
INTEGER_FEATURES: Tuple[str, ...] = PREDICTOR_NAMES[13:]
STATIC_FEATURES: Tuple[str, ...] = ("l_sl", "l_el", "l_tl", "l_er", "l_sr", "e_poie", "e_poic", "r", "l")
CALENDAR_FEATURES: Tuple[str, ...] = ("h_moh", "h_hod")
TIME_VARYING_FEATURES: Tuple[str, ...] = EVENT_FEATURES

LABEL_NAMES: Tuple[str, ...] = ("v_lm", "v_tm", "v_rm")
MOVEMENT_TITLES: Dict[str, str] = {"v_lm": "Left turn", "v_tm": "Through", "v_rm": "Right turn"}
KEY_NAMES: Tuple[str, ...] = ("intersection_id", "approach_id", "day_index", "interval_index")
CSV_COLUMNS: Tuple[str, ...] = KEY_NAMES + PREDICTOR_NAMES + LABEL_NAMES

INTERVAL_SECONDS = 900.0
PEAK_HOURS: Tuple[int, ...] = (7, 8, 16, 17)
N_BINS = 4 * len(PEAK_HOURS)

ROAD_TYPES: Dict[str, int] = {"major": 1, "minor": 2}
LEFT_TURN_TYPES: Dict[str, int] = {"permissive": 1, "protected_permissive": 2, "protected": 3}


def encode_road_type(kind: str) -> int:
    """major -> 1, minor -> 2"""
    token = str(kind).strip().lower()
    if token not in ROAD_TYPES:
        raise ValidationError(f"unknown road type '{kind}'", field="r")
    return ROAD_TYPES[token]


def decode_road_type(code: int) -> str:
    for kind, value in ROAD_TYPES.items():
        if value == code:
            return kind
    raise ValidationError(f"unknown road type code {code}", field="r")


def encode_left_turn_type(kind: str) -> int:
    """permissive -> 1, protected_permissive -> 2, protected -> 3"""
    token = str(kind).strip().lower()
    if token not in LEFT_TURN_TYPES:
        raise ValidationError(f"unknown left-turn type '{kind}'", field="l")
    return LEFT_TURN_TYPES[token]


def decode_left_turn_type(code: int) -> str:
    for kind, value in LEFT_TURN_TYPES.items():
        if value == code:
            return kind
    raise ValidationError(f"unknown left-turn type code {code}", field="l")


def encode_interval(hour: int, quarter: int) -> Tuple[int, int]:
    """
    Encode a clock interval as (h_moh, h_hod)

    Args:
        hour: 0..23, 0 is midnight
        quarter: 0..3, the 15-minute slot within the hour

    Returns:
        (quarter + 1, hour)
    """
    if not _is_int(hour) or not 0 <= hour <= 23:
        raise ValidationError(f"hour must be an integer in 0..23, got {hour}", field="h_hod")
    if not _is_int(quarter) or not 0 <= quarter <= 3:
        raise ValidationError(f"quarter must be an integer in 0..3, got {quarter}", field="h_moh")
    return int(quarter) + 1, int(hour)


def decode_interval(h_moh: int, h_hod: int) -> Tuple[int, int]:
    """Inverse of encode_interval: returns (hour, quarter)"""
    if not _is_int(h_moh) or not 1 <= h_moh <= 4:
        raise ValidationError(f"h_moh must be in 1..4, got {h_moh}", field="h_moh")
    if not _is_int(h_hod) or not 0 <= h_hod <= 23:
        raise ValidationError(f"h_hod must be in 0..23, got {h_hod}", field="h_hod")
    return int(h_hod), int(h_moh) - 1


def interval_to_clock(interval_index: int) -> Tuple[int, int]:
    """Peak bin 0..15 -> (hour, quarter) over 07:00-09:00 and 16:00-18:00"""
    if not _is_int(interval_index) or not 0 <= interval_index < N_BINS:
        raise ValidationError(f"interval_index must be in 0..{N_BINS - 1}, got {interval_index}",
                              field="interval_index")
    return PEAK_HOURS[interval_index // 4], interval_index % 4


def clock_to_interval(hour: int, quarter: int) -> int:
    if hour not in PEAK_HOURS:
        raise ValidationError(f"hour {hour} lies outside the peak windows", field="h_hod")
    return PEAK_HOURS.index(hour) * 4 + quarter


def _is_int(value: Any) -> bool:
    return isinstance(value, (int, np.integer)) and not isinstance(value, bool)


@dataclass(frozen=True)
class FeatureVector:
    """The 24 predictors of one observation, in PREDICTOR_NAMES order"""

    o_tm: float
    d_tm: float
    g_tm: float
    c_tm: float
    m_tm: float
    s_tm: float
    o_lm: float
    d_lm: float
    g_lm: float
    c_lm: float
    m_lm: float
    s_lm: float
    p_lm: float
    l_sl: int
    l_el: int
    l_tl: int
    l_er: int
    l_sr: int
    e_poie: int
    e_poic: int
    r: int
    l: int
    h_moh: int
    h_hod: int

    def __post_init__(self) -> None:
        for name in EVENT_FEATURES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValidationError("value must be finite", field=name)
            if value < 0:
                raise ValidationError(f"value must be nonnegative, got {value}", field=name)
        for name in DURATION_FEATURES:
            value = getattr(self, name)
            if value > INTERVAL_SECONDS:
                raise ValidationError(
                    f"range: duration {value} exceeds interval length {INTERVAL_SECONDS:.0f} s",
                    field=name)
        for name in INTEGER_FEATURES:
            value = getattr(self, name)
            if not _is_int(value):
                raise ValidationError(f"value must be an integer, got {value!r}", field=name)
            if value < 0:
                raise ValidationError(f"value must be nonnegative, got {value}", field=name)
        if self.r not in ROAD_TYPES.values():
            raise ValidationError(f"road type code must be 1 or 2, got {self.r}", field="r")
        if self.l not in LEFT_TURN_TYPES.values():
            raise ValidationError(f"left-turn type code must be 1..3, got {self.l}", field="l")
        decode_interval(self.h_moh, self.h_hod)

    def to_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in PREDICTOR_NAMES], dtype=np.float64)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "FeatureVector":
        if len(values) != len(PREDICTOR_NAMES):
            raise ArgumentError(f"expected {len(PREDICTOR_NAMES)} predictors, got {len(values)}")
        kwargs = {}
        for name, value in zip(PREDICTOR_NAMES, values):
            kwargs[name] = int(value) if name in INTEGER_FEATURES else float(value)
        return cls(**kwargs)


@dataclass(frozen=True)
class LabeledInstance:
    """
    One keyed observation; labels are None for unlabeled target rows
    """

    intersection_id: str
    approach_id: str
    day_index: int
    interval_index: int
    features: FeatureVector
    v_lm: Optional[float] = None
    v_tm: Optional[float] = None
    v_rm: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.intersection_id:
            raise ValidationError("identifier must not be empty", field="intersection_id")
        if not self.approach_id:
            raise ValidationError("identifier must not be empty", field="approach_id")
        if not _is_int(self.day_index) or self.day_index < 0:
            raise ValidationError(f"day_index must be a nonnegative integer, got {self.day_index}",
                                  field="day_index")
        hour, quarter = interval_to_clock(self.interval_index)
        if self.features.h_hod != hour:
            raise ValidationError(
                f"h_hod {self.features.h_hod} disagrees with interval_index {self.interval_index}",
                field="h_hod")
        if self.features.h_moh != quarter + 1:
            raise ValidationError(
                f"h_moh {self.features.h_moh} disagrees with interval_index {self.interval_index}",
                field="h_moh")

        labels = [self.v_lm, self.v_tm, self.v_rm]
        present = [v is not None for v in labels]
        if any(present) and not all(present):
            raise ValidationError("either all three labels or none must be given", field="v_lm")
        for name, value in zip(LABEL_NAMES, labels):
            if value is None:
                continue
            if not math.isfinite(value):
                raise ValidationError("label must be finite", field=name)
            if value < 0:
                raise ValidationError(f"label must be nonnegative, got {value}", field=name)

    @property
    def key(self) -> Tuple[str, str, int, int]:
        return self.intersection_id, self.approach_id, self.day_index, self.interval_index

    @property
    def is_labeled(self) -> bool:
        return self.v_lm is not None

    def label(self, movement: str) -> Optional[float]:
        if movement not in LABEL_NAMES:
            raise ArgumentError(f"unknown movement '{movement}'")
        return getattr(self, movement)

    def unlabeled(self) -> "LabeledInstance":
        return LabeledInstance(self.intersection_id, self.approach_id, self.day_index,
                               self.interval_index, self.features)


def _parse_number(raw: Any, name: str, row: Optional[int], integer: bool) -> Any:
    if raw is None or (isinstance(raw, float) and math.isnan(raw)) or (isinstance(raw, str) and not raw.strip()):
        raise ValidationError("missing field", row=row, field=name)
    if isinstance(raw, (bool, np.bool_)):
        raise ValidationError(f"non-numeric token {raw!r}", row=row, field=name)
    if isinstance(raw, (int, np.integer)):
        return int(raw) if integer else float(raw)
    try:
        value = float(str(raw).strip()) if isinstance(raw, str) else float(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"non-numeric token {raw!r}", row=row, field=name)
    if not math.isfinite(value):
        raise ValidationError(f"non-finite value {raw!r}", row=row, field=name)
    if integer:
        if value != int(value):
            raise ValidationError(f"expected an integer, got {raw!r}", row=row, field=name)
        return int(value)
    return value


def _is_blank(raw: Any) -> bool:
    if raw is None:
        return True
    if isinstance(raw, float) and math.isnan(raw):
        return True
    return isinstance(raw, str) and not raw.strip()


def validate_instance(raw: Mapping[str, Any],
                      row: Optional[int] = None,
                      allow_unlabeled: bool = False) -> LabeledInstance:
    """
    Build a validated LabeledInstance from a raw record

    Args:
        raw: Mapping of column name -> raw token (string or number)
        row: Row number used in diagnostics
        allow_unlabeled: Accept rows whose three label cells are empty

    Returns:
        LabeledInstance

    Raises:
        ValidationError naming the row and field for every failure
    """
    if not isinstance(raw, Mapping):
        raise ValidationError(f"record must be a mapping, got {type(raw).__name__}", row=row)

    for name in KEY_NAMES + PREDICTOR_NAMES:
        if name not in raw:
            raise ValidationError("missing field", row=row, field=name)

    intersection_id = str(raw["intersection_id"]).strip() if not _is_blank(raw["intersection_id"]) else ""
    approach_id = str(raw["approach_id"]).strip() if not _is_blank(raw["approach_id"]) else ""

    try:
        day_index = _parse_number(raw["day_index"], "day_index", row, integer=True)
        interval_index = _parse_number(raw["interval_index"], "interval_index", row, integer=True)
        values = {
            name: _parse_number(raw[name], name, row, integer=name in INTEGER_FEATURES)
            for name in PREDICTOR_NAMES
        }

        labels: List[Optional[float]] = [None, None, None]
        blank = [_is_blank(raw.get(name)) for name in LABEL_NAMES]
        if all(blank):
            if not allow_unlabeled:
                raise ValidationError("missing field", row=row, field=LABEL_NAMES[0])
        else:
            labels = [_parse_number(raw.get(name), name, row, integer=False) for name in LABEL_NAMES]

        features = FeatureVector(**values)
        return LabeledInstance(intersection_id, approach_id, day_index, interval_index,
                               features, *labels)
    except ValidationError as e:
        if e.row is None and row is not None:
            raise ValidationError(e.message, row=row, field=e.field) from None
        raise


class Dataset:
    """
    Ordered, immutable collection of instances with cached numpy views
    """

    variable_names: Tuple[str, ...] = PREDICTOR_NAMES

    def __init__(self, instances: Iterable[LabeledInstance]):
        self._instances: Tuple[LabeledInstance, ...] = tuple(instances)
        seen = set()
        for position, instance in enumerate(self._instances):
            if instance.key in seen:
                raise ValidationError(f"duplicate key {instance.key}", row=position + 1,
                                      field="intersection_id")
            seen.add(instance.key)

    def __len__(self) -> int:
        return len(self._instances)

    def __iter__(self) -> Iterator[LabeledInstance]:
        return iter(self._instances)

    def __getitem__(self, index: int) -> LabeledInstance:
        return self._instances[index]

    @property
    def instances(self) -> Tuple[LabeledInstance, ...]:
        return self._instances

    @cached_property
    def _matrix(self) -> np.ndarray:
        if not self._instances:
            return np.empty((0, len(PREDICTOR_NAMES)))
        return np.vstack([inst.features.to_array() for inst in self._instances])

    @cached_property
    def intersection_ids(self) -> Tuple[str, ...]:
        return tuple(sorted({inst.intersection_id for inst in self._instances}))

    @cached_property
    def intersection_column(self) -> np.ndarray:
        return np.array([inst.intersection_id for inst in self._instances], dtype=object)

    @property
    def is_labeled(self) -> bool:
        return bool(self._instances) and all(inst.is_labeled for inst in self._instances)

    def require_labeled(self, what: str = "training") -> None:
        if not self._instances:
            raise ArgumentError(f"{what} dataset is empty")
        if not self.is_labeled:
            raise ArgumentError(f"{what} dataset contains unlabeled instances")

    def features(self, variables: Optional[Sequence[str]] = None) -> np.ndarray:
        """n x q predictor matrix for the given variables (all 24 by default)"""
        if variables is None:
            return self._matrix.copy()
        columns = [_variable_index(name) for name in variables]
        return self._matrix[:, columns]

    def labels(self, movement: str) -> np.ndarray:
        if movement not in LABEL_NAMES:
            raise ArgumentError(f"unknown movement '{movement}'")
        values = [inst.label(movement) for inst in self._instances]
        if any(v is None for v in values):
            raise ArgumentError("dataset contains unlabeled instances")
        return np.asarray(values, dtype=np.float64)

    def subset(self, indices: Iterable[int]) -> "Dataset":
        return Dataset(self._instances[i] for i in indices)

    def indices_of(self, intersection_id: str) -> np.ndarray:
        return np.flatnonzero(self.intersection_column == intersection_id)

    def for_intersection(self, intersection_id: str) -> "Dataset":
        indices = self.indices_of(intersection_id)
        if len(indices) == 0:
            raise ArgumentError(f"intersection '{intersection_id}' not present in dataset")
        return self.subset(indices)

    def excluding_intersection(self, intersection_id: str) -> "Dataset":
        return self.subset(np.flatnonzero(self.intersection_column != intersection_id))

    def without_labels(self) -> "Dataset":
        """Label-stripped view for held-out targets"""
        return Dataset(inst.unlabeled() for inst in self._instances)

    def concat(self, other: "Dataset") -> "Dataset":
        return Dataset(self._instances + other.instances)

    def to_frame(self) -> pd.DataFrame:
        """DataFrame with CSV_COLUMNS; empty label cells become NaN"""
        records = []
        for inst in self._instances:
            record: Dict[str, Any] = {
                "intersection_id": inst.intersection_id,
                "approach_id": inst.approach_id,
                "day_index": inst.day_index,
                "interval_index": inst.interval_index,
            }
            for f in fields(FeatureVector):
                record[f.name] = getattr(inst.features, f.name)
            for name in LABEL_NAMES:
                value = inst.label(name)
                record[name] = np.nan if value is None else value
            records.append(record)
        return pd.DataFrame.from_records(records, columns=list(CSV_COLUMNS))


def _variable_index(name: str) -> int:
    try:
        return PREDICTOR_NAMES.index(name)
    except ValueError:
        raise ArgumentError(f"unknown predictor '{name}'") from None


def variable_indices(variables: Sequence[str]) -> List[int]:
    return [_variable_index(name) for name in variables]
