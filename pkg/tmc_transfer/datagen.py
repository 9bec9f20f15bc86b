"""
Synthetic multi-intersection TMC generator

Structural model, per intersection, day, peak bin b and approach a:
    volume      = demand[b] * approach_factor[a] * LogNormal(-s^2/2, s)    s = noise_scale
    v_lm/tm/rm  = volume * (p_left, p_through, p_right)
and every event feature is a linear function of the labels times LogNormal feature
noise, durations capped at the 900 s interval. The recorded IntersectionParams are
the ground truth for the generated data.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from tmc_transfer.config import GeneratorSettings
from tmc_transfer.domain_model import (
    INTERVAL_SECONDS, LABEL_NAMES, LEFT_TURN_TYPES, N_BINS, ROAD_TYPES,
    Dataset, FeatureVector, LabeledInstance, interval_to_clock,
)
from tmc_transfer.errors import ArgumentError

logger = logging.getLogger(__name__)

APPROACH_IDS: Tuple[str, ...] = ("N", "S", "E", "W")
SIMPLEX_TOL = 1e-9

# left-turn share ranges by left-turn type code; protected phasing goes with heavier lefts
_LEFT_SHARE = {1: (0.08, 0.15), 2: (0.12, 0.22), 3: (0.18, 0.30)}
_LEFT_GREEN = {1: (0.0, 0.3), 2: (30.0, 1.0), 3: (60.0, 1.5)}


class IntersectionParams(BaseModel):
    """Ground-truth parameters of one synthetic intersection"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    intersection_id: str
    lanes: Tuple[int, int, int, int, int]  # l_sl, l_el, l_tl, l_er, l_sr
    road_type: int
    left_turn_type: int
    demand: Tuple[float, ...]
    approach_factors: Tuple[float, ...]
    poi_employees: int = Field(ge=0)
    poi_categories: int = Field(ge=0)
    turn_fractions: Tuple[float, float, float]
    cycle_length: float = Field(120.0, gt=0.0, le=INTERVAL_SECONDS)
    noise_scale: float = Field(0.1, gt=0.0)

    @field_validator("lanes")
    @classmethod
    def _lanes_nonnegative(cls, value):
        if any(v < 0 for v in value):
            raise ValueError("lane counts must be nonnegative")
        return value

    @field_validator("road_type")
    @classmethod
    def _road_type_code(cls, value):
        if value not in ROAD_TYPES.values():
            raise ValueError(f"road type code must be 1 or 2, got {value}")
        return value

    @field_validator("left_turn_type")
    @classmethod
    def _left_turn_code(cls, value):
        if value not in LEFT_TURN_TYPES.values():
            raise ValueError(f"left-turn type code must be 1..3, got {value}")
        return value

    @field_validator("demand")
    @classmethod
    def _demand_profile(cls, value):
        if len(value) != N_BINS:
            raise ValueError(f"demand profile needs {N_BINS} bins, got {len(value)}")
        if any(v < 0 or not np.isfinite(v) for v in value):
            raise ValueError("demand entries must be finite and nonnegative")
        return value

    @field_validator("approach_factors")
    @classmethod
    def _approach_count(cls, value):
        if not 3 <= len(value) <= len(APPROACH_IDS):
            raise ValueError(f"3 or 4 approaches supported, got {len(value)}")
        if any(v <= 0 for v in value):
            raise ValueError("approach factors must be positive")
        return value

    @model_validator(mode="after")
    def _simplex(self):
        fractions = self.turn_fractions
        if any(f < 0 for f in fractions) or abs(sum(fractions) - 1.0) > SIMPLEX_TOL:
            raise ValueError(f"turn fractions must lie on the simplex, got {fractions}")
        return self

    @property
    def approaches(self) -> Tuple[str, ...]:
        return APPROACH_IDS[:len(self.approach_factors)]

    def expected_volume(self, movement: str) -> float:
        """Mean per-interval movement volume over bins and approaches"""
        if movement not in LABEL_NAMES:
            raise ArgumentError(f"unknown movement '{movement}'")
        share = self.turn_fractions[LABEL_NAMES.index(movement)]
        return float(np.mean(self.demand) * np.mean(self.approach_factors) * share)


class ShiftSpec(BaseModel):
    """Source-to-target domain shift; the defaults are the zero shift"""

    model_config = ConfigDict(extra="forbid", frozen=True)

    demand_scale: float = Field(1.0, gt=0.0)
    profile_rotation: int = 0
    turn_fraction_jitter: float = Field(0.0, ge=0.0)
    lane_reconfig_prob: float = Field(0.0, ge=0.0, le=1.0)

    @property
    def is_zero(self) -> bool:
        return (self.demand_scale == 1.0 and self.profile_rotation % N_BINS == 0
                and self.turn_fraction_jitter == 0.0 and self.lane_reconfig_prob == 0.0)


@dataclass(frozen=True)
class SyntheticNetwork:
    """Generated dataset plus the parameters that produced it"""

    dataset: Dataset
    params: Tuple[IntersectionParams, ...]
    seed: int

    def params_by_id(self) -> Dict[str, IntersectionParams]:
        return {p.intersection_id: p for p in self.params}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "seed": self.seed,
            "intersections": [p.model_dump(mode="json") for p in self.params],
        }


@dataclass(frozen=True)
class TransferBenchmark:
    source: SyntheticNetwork
    target: Dataset
    target_params: IntersectionParams
    unshifted_params: IntersectionParams
    shift: ShiftSpec


def intersection_id(index: int) -> str:
    return f"INT{index:03d}"


def sample_params(index: int, seed: int, settings: Optional[GeneratorSettings] = None) -> IntersectionParams:
    """
    Draw the parameters of intersection `index` from its own substream

    Demand level grows with POI employees and is higher on major roads so the static
    predictors carry cross-intersection signal.
    """
    settings = settings or GeneratorSettings()
    rng = np.random.default_rng([seed, index, 0])

    road_type = 1 if rng.random() < 0.5 else 2
    left_turn_type = int(rng.integers(1, 4))
    poi_employees = int(round(rng.lognormal(np.log(800.0), 0.8)))
    poi_categories = int(min(60, 1 + poi_employees // 60 + rng.integers(0, 6)))

    base = 40.0 + 0.04 * poi_employees + (60.0 if road_type == 1 else 0.0)
    am_weight, pm_weight = rng.uniform(0.6, 1.4, size=2)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    shape = 1.0 + 0.3 * np.sin(2.0 * np.pi * np.arange(8) / 8.0 + phase)
    demand = base * np.concatenate([am_weight * shape, pm_weight * shape])

    factors = rng.uniform(0.6, 1.4, size=settings.approaches)
    factors = factors / factors.mean()

    left = rng.uniform(*_LEFT_SHARE[left_turn_type])
    right = rng.uniform(0.08, 0.20)
    through = 1.0 - left - right

    l_tl = int(rng.integers(2, 4)) if road_type == 1 else int(rng.integers(1, 3))
    l_el = 1 if left_turn_type != 1 or rng.random() < 0.3 else 0
    l_er = int(rng.random() < 0.5)

    return IntersectionParams(
        intersection_id=intersection_id(index),
        lanes=(1 - l_el, l_el, l_tl, l_er, 1 - l_er),
        road_type=road_type,
        left_turn_type=left_turn_type,
        demand=tuple(float(v) for v in demand),
        approach_factors=tuple(float(v) for v in factors),
        poi_employees=poi_employees,
        poi_categories=poi_categories,
        turn_fractions=(float(left), float(through), float(right)),
        cycle_length=float(rng.uniform(90.0, 150.0)),
        noise_scale=settings.noise_scale,
    )


def _lognormal(rng: np.random.Generator, sigma: float, shape) -> np.ndarray:
    """Mean-one multiplicative noise"""
    if sigma == 0:
        return np.ones(shape)
    return rng.lognormal(-0.5 * sigma ** 2, sigma, size=shape)


def _observe(params: IntersectionParams, n_days: int, rng: np.random.Generator,
             feature_noise: float) -> List[LabeledInstance]:
    factors = np.asarray(params.approach_factors)
    shape = (n_days, N_BINS, len(factors))
    volume = (np.asarray(params.demand)[None, :, None] * factors[None, None, :]
              * _lognormal(rng, params.noise_scale, shape))
    p_left, p_through, p_right = params.turn_fractions
    v_lm, v_tm, v_rm = volume * p_left, volume * p_through, volume * p_right

    def noise() -> np.ndarray:
        return _lognormal(rng, feature_noise, shape)

    cap = INTERVAL_SECONDS
    cycles = np.floor(cap / params.cycle_length)
    ltt = params.left_turn_type

    d_tm = 1.1 * (v_tm + 0.5 * v_rm) * noise()
    o_tm = np.minimum(cap, 2.0 * v_tm * noise())
    g_tm = np.minimum(cap, (300.0 + 0.8 * v_tm) * noise())
    c_tm = np.full(shape, cycles)
    m_tm = cap / (d_tm + 1.0) * noise()
    s_tm = 0.6 * m_tm * noise()

    intercept, slope = _LEFT_GREEN[ltt]
    d_lm = 1.1 * v_lm * noise()
    o_lm = np.minimum(cap, 2.5 * v_lm * noise())
    g_lm = np.minimum(cap, (intercept + slope * v_lm) * noise())
    c_lm = np.full(shape, cycles if ltt != 1 else 0.0)
    m_lm = cap / (d_lm + 1.0) * noise()
    s_lm = 0.6 * m_lm * noise()
    p_lm = np.minimum(cap, 0.5 * g_tm * noise()) if ltt in (1, 2) else np.zeros(shape)

    l_sl, l_el, l_tl, l_er, l_sr = params.lanes
    instances = []
    for day in range(n_days):
        for b in range(N_BINS):
            hour, quarter = interval_to_clock(b)
            for a, approach in enumerate(params.approaches):
                at = (day, b, a)
                features = FeatureVector(
                    o_tm=float(o_tm[at]), d_tm=float(d_tm[at]), g_tm=float(g_tm[at]),
                    c_tm=float(c_tm[at]), m_tm=float(m_tm[at]), s_tm=float(s_tm[at]),
                    o_lm=float(o_lm[at]), d_lm=float(d_lm[at]), g_lm=float(g_lm[at]),
                    c_lm=float(c_lm[at]), m_lm=float(m_lm[at]), s_lm=float(s_lm[at]),
                    p_lm=float(p_lm[at]),
                    l_sl=l_sl, l_el=l_el, l_tl=l_tl, l_er=l_er, l_sr=l_sr,
                    e_poie=params.poi_employees, e_poic=params.poi_categories,
                    r=params.road_type, l=ltt, h_moh=quarter + 1, h_hod=hour,
                )
                instances.append(LabeledInstance(
                    params.intersection_id, approach, day, b, features,
                    v_lm=float(v_lm[at]), v_tm=float(v_tm[at]), v_rm=float(v_rm[at]),
                ))
    return instances


def generate_from_params(params: Sequence[IntersectionParams],
                         n_days: int,
                         seed: int,
                         settings: Optional[GeneratorSettings] = None,
                         first_index: int = 0) -> Dataset:
    """Observe the given intersections for n_days; intersection k uses substream (seed, first_index + k, 1)"""
    if n_days < 1:
        raise ArgumentError(f"n_days must be >= 1, got {n_days}")
    settings = settings or GeneratorSettings()
    instances: List[LabeledInstance] = []
    for offset, p in enumerate(params):
        rng = np.random.default_rng([seed, first_index + offset, 1])
        instances.extend(_observe(p, n_days, rng, settings.feature_noise))
    return Dataset(instances)


def generate_network(n_intersections: int,
                     n_days: int,
                     seed: int,
                     settings: Optional[GeneratorSettings] = None) -> SyntheticNetwork:
    """
    Generate a labeled network of n_intersections observed for n_days

    Args:
        n_intersections: number of intersections (INT000, INT001, ...)
        n_days: days per intersection, 16 peak bins each
        seed: run seed; intersection k draws from substreams (seed, k, 0|1)
        settings: approach count and noise levels

    Returns:
        SyntheticNetwork with the dataset and the ground-truth parameters
    """
    if n_intersections < 1:
        raise ArgumentError(f"n_intersections must be >= 1, got {n_intersections}")
    if n_days < 1:
        raise ArgumentError(f"n_days must be >= 1, got {n_days}")
    settings = settings or GeneratorSettings()

    params = tuple(sample_params(k, seed, settings) for k in range(n_intersections))
    dataset = generate_from_params(params, n_days, seed, settings)
    logger.info("generated %d instances for %d intersections", len(dataset), n_intersections)
    return SyntheticNetwork(dataset, params, seed)


def apply_shift(params: IntersectionParams, shift: ShiftSpec, seed: int) -> IntersectionParams:
    """
    Perturb intersection parameters by a domain shift

    Demand is rolled by profile_rotation bins and scaled; turn fractions get
    multiplicative lognormal jitter and are renormalized; with probability
    lane_reconfig_prob the through-lane count and right-lane sharing change.
    The zero shift returns the input unchanged.
    """
    if shift.is_zero:
        return params
    rng = np.random.default_rng([seed, 7])

    demand = np.roll(np.asarray(params.demand), shift.profile_rotation) * shift.demand_scale

    fractions = np.asarray(params.turn_fractions)
    if shift.turn_fraction_jitter > 0:
        fractions = fractions * np.exp(shift.turn_fraction_jitter * rng.standard_normal(3))
        fractions = fractions / fractions.sum()

    lanes = params.lanes
    if shift.lane_reconfig_prob > 0 and rng.random() < shift.lane_reconfig_prob:
        l_sl, l_el, l_tl, l_er, l_sr = lanes
        l_tl = max(1, l_tl + (1 if rng.random() < 0.5 else -1))
        lanes = (l_sl, l_el, l_tl, l_sr, l_er)

    return IntersectionParams.model_validate({
        **params.model_dump(),
        "demand": tuple(float(v) for v in demand),
        "turn_fractions": tuple(float(v) for v in fractions),
        "lanes": lanes,
    })


def generate_transfer_benchmark(n_source: int,
                                n_days: int,
                                shift: ShiftSpec,
                                seed: int,
                                settings: Optional[GeneratorSettings] = None) -> TransferBenchmark:
    """Source network of n_source intersections plus one shifted, labeled target intersection"""
    settings = settings or GeneratorSettings()
    source = generate_network(n_source, n_days, seed, settings)
    base = sample_params(n_source, seed, settings)
    shifted = apply_shift(base, shift, seed)
    target = generate_from_params([shifted], n_days, seed, settings, first_index=n_source)
    return TransferBenchmark(source, target, shifted, base, shift)
