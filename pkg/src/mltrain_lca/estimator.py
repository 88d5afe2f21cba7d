"""Training-run footprints: GPU-hour estimation, ratio calibration and impact assembly."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .hardware import (
    GraphicsCard,
    Precision,
    UnknownCardError,
    Vendor,
    default_catalog,
    default_preferences,
    resolve_card_name,
)
from .intervals import Interval
from .lca import (
    ElectricityMix,
    ImpactFactors,
    ImpactVector,
    PhasedImpact,
    ServerConfig,
    UnknownCountryError,
    allocate_embodied,
    card_production_impact,
    default_factors,
    default_mixes,
    default_server_configs,
    energy_to_impact,
    mix_interval,
    pue_at,
    server_energy,
    server_production_impact,
)
from .regression import breusch_pagan, durbin_watson, ols
from .tables import DataError, PathLike, bundled_path, cell_error, parse_bool, parse_date, parse_float, read_rows

logger = logging.getLogger(__name__)

DEFAULT_RATIO = 0.27
DEFAULT_PRECISION_ORDER = (Precision.TENSOR, Precision.HALF, Precision.SINGLE)
ANOMALY_LOW, ANOMALY_HIGH = 0.10, 1.0
UNIT_SLOPE_TOLERANCE = 0.1


class Modality(str, Enum):
    LANGUAGE = "language"
    VISION = "vision"
    MULTIMODAL = "multimodal"
    BIOLOGY = "biology"
    IMAGE_GENERATION = "image-generation"
    GAMES = "games"
    SPEECH = "speech"
    SPECIALTY = "specialty"
    OTHER = "other"


class Confidence(str, Enum):
    CONFIDENT = "confident"
    LIKELY = "likely"
    SPECULATIVE = "speculative"
    UNKNOWN = "unknown"


class Method(str, Enum):
    GPU_H1 = "GPU-h1"
    GPU_H2 = "GPU-h2"


class EstimationError(Exception):
    """A record cannot be turned into a footprint; ``reason`` says why."""

    def __init__(self, name: str, reason: str):
        super().__init__(f"{name}: {reason}")
        self.name = name
        self.reason = reason


class NotApplicable(EstimationError):
    """The requested GPU-hour method lacks its inputs; try the other one."""


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class MLSystemRecord:
    name: str
    release_date: date
    modality: Modality = Modality.OTHER
    training_flop: Optional[float] = None
    card_query: Optional[str] = None
    card_count: Optional[float] = None
    training_duration_h: Optional[float] = None
    countries: tuple[str, ...] = ()
    confidence: Confidence = Confidence.UNKNOWN
    estimable: bool = True


@dataclass(frozen=True)
class GpuHoursEstimate:
    value: Interval
    method: Method
    performance_ratio_used: Optional[float] = None
    per_card: Mapping[str, float] = field(default_factory=dict, compare=False)
    precision: Optional[Precision] = None

    def __post_init__(self) -> None:
        if self.value.low <= 0:
            raise ValueError("GPU-hours must be > 0")
        if (self.method is Method.GPU_H1) != (self.performance_ratio_used is None):
            raise ValueError("a performance ratio is used by GPU-h2 and only by GPU-h2")


@dataclass(frozen=True)
class PairedEstimate:
    name: str
    gpu_h1: float
    gpu_h2_base: float

    @property
    def ratio(self) -> float:
        return self.gpu_h2_base / self.gpu_h1


@dataclass(frozen=True)
class AnomalyCheck:
    name: str
    ratio: float
    anomaly: bool


@dataclass(frozen=True)
class CalibrationResult:
    intercept: float
    slope: float
    intercept_se: float
    slope_se: float
    r2: float
    adj_r2: float
    f_stat: float
    f_dof: tuple[int, int]
    f_p: float
    bp_stat: float
    bp_p: float
    dw_stat: float
    dw_p: float
    n_obs: int
    implied_ratio: Optional[float]
    intercept_ratio: float
    anomalies: tuple[AnomalyCheck, ...] = ()
    warnings: tuple[str, ...] = ()


@dataclass(frozen=True)
class TrainingFootprint:
    system: str
    release_date: date
    modality: Modality
    card: str
    gpu_hours: GpuHoursEstimate
    impacts: PhasedImpact
    embodied_share_gwp: float
    embodied_share_adpe: float
    pue: float
    countries: tuple[str, ...]
    provenance: tuple[str, ...] = ()


@dataclass(frozen=True)
class EstimationContext:
    """Everything a footprint depends on besides the record itself."""

    catalog: Sequence[GraphicsCard]
    factors: ImpactFactors
    mixes: Mapping[str, ElectricityMix]
    servers: Mapping[Vendor, ServerConfig]
    preferences: Mapping[str, str] = field(default_factory=dict)
    ratio: float = DEFAULT_RATIO
    precision_order: tuple[Precision, ...] = DEFAULT_PRECISION_ORDER
    utilization_gpu: float = 1.0
    utilization_cpu: float = 1.0

    def __post_init__(self) -> None:
        if not (0 < self.ratio <= 1):
            raise ValueError("performance ratio must be in (0, 1]")

    @classmethod
    def bundled(cls, **overrides) -> "EstimationContext":
        values = dict(
            catalog=default_catalog(),
            factors=default_factors(),
            mixes=default_mixes(),
            servers=default_server_configs(),
            preferences=default_preferences(),
        )
        values.update(overrides)
        return cls(**values)

    def card(self, card_id: str) -> GraphicsCard:
        for c in self.catalog:
            if c.id == card_id:
                return c
        raise UnknownCardError(card_id)


# -- GPU-hours -----------------------------------------------------------------


def gpu_hours_method1(record: MLSystemRecord) -> GpuHoursEstimate:
    """Training duration times number of cards."""
    if record.training_duration_h is None or record.card_count is None:
        raise NotApplicable(record.name, "training duration or card count missing")
    if record.card_count <= 0 or record.training_duration_h <= 0:
        raise ValueError(f"{record.name}: card count and duration must be > 0")
    hours = record.training_duration_h * record.card_count
    return GpuHoursEstimate(Interval.point(hours), Method.GPU_H1)


def pick_precision(card: GraphicsCard, order: Sequence[Precision] = DEFAULT_PRECISION_ORDER) -> Optional[Precision]:
    for precision in order:
        if card.peak(precision) is not None:
            return precision
    return None


def gpu_hours_method2(
    record: MLSystemRecord,
    catalog: Sequence[GraphicsCard],
    ratio: float = DEFAULT_RATIO,
    preferences: Optional[Mapping[str, str]] = None,
    precision_order: Sequence[Precision] = DEFAULT_PRECISION_ORDER,
) -> GpuHoursEstimate:
    """Training FLOP over sustained card throughput (peak times ``ratio``), per candidate card."""
    if record.training_flop is None or not record.card_query:
        raise NotApplicable(record.name, "training FLOP or card model missing")
    if not (0 < ratio <= 1):
        raise ValueError("performance ratio must be in (0, 1]")
    try:
        resolution = resolve_card_name(record.card_query, catalog, preferences)
    except UnknownCardError:
        raise EstimationError(record.name, f"unknown card {record.card_query!r}") from None
    by_id = {c.id: c for c in catalog}
    per_card: dict[str, float] = {}
    ref_precision = None
    for card_id in resolution.candidates:
        card = by_id[card_id]
        precision = pick_precision(card, precision_order)
        if precision is None:
            if card_id == resolution.reference_card:
                raise EstimationError(record.name, f"no peak compute for {card_id}")
            continue
        if card_id == resolution.reference_card:
            ref_precision = precision
        per_card[card_id] = record.training_flop / (card.peak(precision) * ratio * 3600.0)
    ref = per_card[resolution.reference_card]
    value = Interval(min(per_card.values()), ref, max(per_card.values()))
    return GpuHoursEstimate(value, Method.GPU_H2, ratio, per_card, ref_precision)


# -- anomalies and calibration -------------------------------------------------


def _as_pair(item, index: int) -> PairedEstimate:
    if isinstance(item, PairedEstimate):
        return item
    if len(item) == 3:
        return PairedEstimate(str(item[0]), float(item[1]), float(item[2]))
    return PairedEstimate(f"#{index}", float(item[0]), float(item[1]))


def detect_anomalies(paired: Iterable) -> list[AnomalyCheck]:
    """Flag pairs whose GPU-h2-base / GPU-h1 ratio lies outside [0.10, 1]."""
    out = []
    for i, item in enumerate(paired):
        pair = _as_pair(item, i)
        if pair.gpu_h1 <= 0 or pair.gpu_h2_base <= 0:
            raise ValueError(f"{pair.name}: GPU-hour values must be > 0")
        r = pair.ratio
        out.append(AnomalyCheck(pair.name, r, r > ANOMALY_HIGH or r < ANOMALY_LOW))
    return out


def calibrate(paired: Iterable, screen: bool = True) -> CalibrationResult:
    """Regress log(GPU-h1) on log(GPU-h2 base) and derive the sustained-performance ratio.

    With ``screen`` the anomaly rule runs first and flagged pairs are dropped
    (and reported). The implied ratio is ``exp(-c)`` where ``c`` is the
    intercept of the unit-slope model, i.e. the mean log gap; it is only
    reported when the free slope is within 0.1 of one.
    """
    pairs = [_as_pair(item, i) for i, item in enumerate(paired)]
    anomalies: tuple[AnomalyCheck, ...] = ()
    if screen:
        checks = detect_anomalies(pairs)
        anomalies = tuple(c for c in checks if c.anomaly)
        pairs = [p for p, c in zip(pairs, checks) if not c.anomaly]
    if not pairs:
        raise CalibrationError("no observations after filtering")
    if len(pairs) < 3:
        raise CalibrationError(f"need at least 3 observations after filtering, got {len(pairs)}")
    x = np.log([p.gpu_h2_base for p in pairs])
    y = np.log([p.gpu_h1 for p in pairs])
    fit = ols(x, y)
    bp_stat, bp_p = breusch_pagan(fit)
    dw_stat, dw_p = durbin_watson(fit)

    warnings: list[str] = []
    implied = None
    if abs(fit.slope - 1.0) <= UNIT_SLOPE_TOLERANCE:
        implied = math.exp(-float(np.mean(y - x)))
        if implied > 1.0:
            warnings.append(f"implied ratio {implied:.3g} exceeds 1 (data suggests above-peak throughput)")
            implied = None
    else:
        warnings.append(f"slope {fit.slope:.3g} is not close to 1; no constant performance ratio")
    for w in warnings:
        logger.warning(w)

    return CalibrationResult(
        intercept=fit.intercept,
        slope=fit.slope,
        intercept_se=fit.intercept_se,
        slope_se=fit.slope_se,
        r2=fit.r2,
        adj_r2=fit.adj_r2,
        f_stat=fit.f_stat,
        f_dof=(1, fit.df_resid),
        f_p=fit.f_p,
        bp_stat=bp_stat,
        bp_p=bp_p,
        dw_stat=dw_stat,
        dw_p=dw_p,
        n_obs=fit.n_obs,
        implied_ratio=implied,
        intercept_ratio=math.exp(-fit.intercept),
        anomalies=anomalies,
        warnings=tuple(warnings),
    )


# -- footprints ----------------------------------------------------------------


def _hull(vectors: Sequence[ImpactVector], ref_index: int) -> ImpactVector:
    parts = []
    for name in ("energy", "gwp", "adpe"):
        items = [getattr(v.as_intervals(), name) for v in vectors]
        parts.append(Interval.hull(items, items[ref_index].ref))
    flags: tuple[str, ...] = ()
    for v in vectors:
        flags += tuple(f for f in v.flags if f not in flags)
    return ImpactVector(*parts, flags=flags)


def estimate_footprint(record: MLSystemRecord, ctx: EstimationContext) -> TrainingFootprint:
    """Full life-cycle footprint of one training run.

    GPU-h1 is used when duration and card count are known, GPU-h2 otherwise.
    Each candidate card of an ambiguous card name is evaluated separately;
    phase intervals are the hull over candidates and electricity-mix bounds,
    with the preferred card and first country as reference.
    """
    if not record.estimable:
        raise EstimationError(record.name, "marked non-estimable (heterogeneous hardware)")
    if not record.card_query:
        raise EstimationError(record.name, "card model missing")
    if not record.countries:
        raise EstimationError(record.name, "no country for the electricity mix")
    try:
        resolution = resolve_card_name(record.card_query, ctx.catalog, ctx.preferences)
    except UnknownCardError:
        raise EstimationError(record.name, f"unknown card {record.card_query!r}") from None

    try:
        hours = gpu_hours_method1(record)
    except NotApplicable:
        try:
            hours = gpu_hours_method2(record, ctx.catalog, ctx.ratio, ctx.preferences, ctx.precision_order)
        except NotApplicable:
            raise EstimationError(record.name, "neither duration x card count nor FLOP x card model available") from None

    try:
        mix = mix_interval(record.countries, ctx.mixes)
    except UnknownCountryError as exc:
        raise EstimationError(record.name, str(exc)) from None

    pue = pue_at(record.release_date)
    embodied, usage, infra = [], [], []
    candidate_ids = [c for c in resolution.candidates if hours.method is Method.GPU_H1 or c in hours.per_card]
    for card_id in candidate_ids:
        card = ctx.card(card_id)
        config = ctx.servers[card.vendor]
        gh = hours.value.ref if hours.method is Method.GPU_H1 else hours.per_card[card_id]
        server = server_production_impact(card_production_impact(card, ctx.factors, ctx.catalog), config, ctx.factors)
        embodied.append(allocate_embodied(server, config, gh))
        u_kwh, i_kwh = server_energy(gh, card, config, ctx.factors, ctx.utilization_gpu, ctx.utilization_cpu, pue)
        u, i = energy_to_impact(u_kwh, i_kwh, mix)
        usage.append(u)
        infra.append(i)

    impacts = PhasedImpact.from_phases(_hull(embodied, 0), _hull(usage, 0), _hull(infra, 0))
    impacts.check_sum()
    total = impacts.total
    share_gwp = impacts.embodied.gwp.ref / total.gwp.ref if total.gwp.ref > 0 else 0.0
    share_adpe = impacts.embodied.adpe.ref / total.adpe.ref if total.adpe.ref > 0 else 0.0

    ref_card = ctx.card(resolution.reference_card)
    provenance = [f"method={hours.method.value}", f"card={resolution.reference_card}"]
    if resolution.ambiguous:
        provenance.append(f"card-alternatives={len(resolution.alternatives)}")
    if hours.method is Method.GPU_H2:
        provenance += [f"ratio={hours.performance_ratio_used:g}", f"precision={hours.precision.value}"]
    provenance += [
        f"server={ref_card.vendor.value}",
        f"pue={pue:.4g}",
        f"countries={';'.join(mix.countries)}",
    ]
    provenance += list(impacts.embodied.flags)

    return TrainingFootprint(
        system=record.name,
        release_date=record.release_date,
        modality=record.modality,
        card=resolution.reference_card,
        gpu_hours=hours,
        impacts=impacts,
        embodied_share_gwp=share_gwp,
        embodied_share_adpe=share_adpe,
        pue=pue,
        countries=mix.countries,
        provenance=tuple(provenance),
    )


def estimate_all(
    records: Iterable[MLSystemRecord], ctx: EstimationContext
) -> tuple[list[TrainingFootprint], list[tuple[str, str]]]:
    """Footprints for every record that can be estimated, plus ``(name, reason)`` for the rest.

    Output order is by release date then name, independent of input order.
    """
    footprints, skipped = [], []
    for record in records:
        try:
            footprints.append(estimate_footprint(record, ctx))
        except EstimationError as exc:
            skipped.append((record.name, exc.reason))
    footprints.sort(key=lambda f: (f.release_date, f.system))
    skipped.sort()
    return footprints, skipped


@dataclass(frozen=True)
class SixNumberSummary:
    min: float
    q1: float
    median: float
    mean: float
    q3: float
    max: float

    def as_tuple(self) -> tuple[float, ...]:
        return (self.min, self.q1, self.median, self.mean, self.q3, self.max)


def six_number_summary(values: Sequence[float]) -> SixNumberSummary:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("summary of an empty sample")
    q1, med, q3 = np.quantile(arr, [0.25, 0.5, 0.75], method="linear")
    return SixNumberSummary(float(arr.min()), float(q1), float(med), float(arr.mean()), float(q3), float(arr.max()))


def embodied_share_stats(footprints: Sequence[TrainingFootprint]) -> dict[str, SixNumberSummary]:
    if not footprints:
        raise ValueError("no footprints")
    return {
        "adpe": six_number_summary([f.embodied_share_adpe for f in footprints]),
        "gwp": six_number_summary([f.embodied_share_gwp for f in footprints]),
    }


# -- record files --------------------------------------------------------------

SYSTEM_COLUMNS = (
    "name",
    "release_date",
    "modality",
    "training_flop",
    "card_query",
    "card_count",
    "training_duration_h",
    "countries",
    "confidence",
    "estimable",
)
PAIR_COLUMNS = ("name", "gpu_h1", "gpu_h2_base")


def load_systems(path: PathLike) -> list[MLSystemRecord]:
    rows = read_rows(path, SYSTEM_COLUMNS)
    out, seen = [], set()
    for row in rows:
        name = row["name"]
        if not name:
            raise cell_error(path, row, "name", "value required")
        if name in seen:
            raise cell_error(path, row, "name", f"duplicate system name {name!r}")
        seen.add(name)
        try:
            modality = Modality(row["modality"] or "other")
        except ValueError:
            raise cell_error(path, row, "modality", f"unknown modality {row['modality']!r}") from None
        try:
            confidence = Confidence(row["confidence"] or "unknown")
        except ValueError:
            raise cell_error(path, row, "confidence", f"unknown confidence {row['confidence']!r}") from None
        countries = tuple(c.strip().upper() for c in row["countries"].split(";") if c.strip())
        flop = parse_float(path, row, "training_flop", optional=True)
        count = parse_float(path, row, "card_count", optional=True)
        duration = parse_float(path, row, "training_duration_h", optional=True)
        for column, value in (("training_flop", flop), ("card_count", count), ("training_duration_h", duration)):
            if value is not None and value < 0:
                raise cell_error(path, row, column, "must be >= 0")
        out.append(
            MLSystemRecord(
                name=name,
                release_date=parse_date(path, row, "release_date"),
                modality=modality,
                training_flop=flop,
                card_query=row["card_query"] or None,
                card_count=count,
                training_duration_h=duration,
                countries=countries,
                confidence=confidence,
                estimable=parse_bool(path, row, "estimable"),
            )
        )
    return out


def load_pairs(path: PathLike) -> list[PairedEstimate]:
    rows = read_rows(path, PAIR_COLUMNS)
    out = []
    for row in rows:
        h1 = parse_float(path, row, "gpu_h1")
        h2 = parse_float(path, row, "gpu_h2_base")
        if h1 <= 0 or h2 <= 0:
            raise DataError(f"{path}: row {row['__row__']}: GPU-hour values must be > 0")
        out.append(PairedEstimate(row["name"], h1, h2))
    return out


def default_systems() -> list[MLSystemRecord]:
    return load_systems(bundled_path("ml_systems.csv"))


def default_pairs() -> list[PairedEstimate]:
    return load_pairs(bundled_path("gpu_hour_pairs.csv"))
