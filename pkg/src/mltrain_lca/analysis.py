"""Fleet-level trends and carbon-intensity reduction scenarios."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .estimator import Modality, TrainingFootprint
from .intervals import Interval, ref_value
from .lca import ImpactVector, PhasedImpact, fractional_year
from .regression import OLSFit, ols

SEPARATE_GROUPS = (Modality.LANGUAGE, Modality.VISION, Modality.MULTIMODAL)
GROUP_ORDER = ("language", "vision", "multimodal", "other")
MIN_GROUP_SIZE = 3
INDICATORS = ("energy", "gwp", "adpe")


@dataclass(frozen=True)
class TrendFit:
    slope: float  # ln-units per year
    intercept: float
    slope_se: float
    t_stat: float
    p_value: float
    n_obs: int
    fit: OLSFit = field(repr=False, compare=False)

    @property
    def doubling_time_years(self) -> Optional[float]:
        return math.log(2.0) / self.slope if self.slope > 0 else None

    def predict(self, when: date) -> float:
        return math.exp(self.intercept + self.slope * fractional_year(when))


def fit_trend(points: Iterable[tuple[date, Union[float, Interval]]]) -> TrendFit:
    """Exponential trend: OLS of ln(value) on fractional year, two-sided t test on the slope."""
    pts = list(points)
    values = [ref_value(v) for _, v in pts]
    if any(v <= 0 for v in values):
        raise ValueError("trend values must be > 0")
    x = np.array([fractional_year(d) for d, _ in pts])
    fit = ols(x, np.log(values))
    return TrendFit(fit.slope, fit.intercept, fit.slope_se, fit.t_stat, fit.p_value, fit.n_obs, fit)


def modality_group(modality: Modality) -> str:
    return modality.value if modality in SEPARATE_GROUPS else "other"


def series(footprints: Iterable[TrainingFootprint], indicator: str = "gwp") -> list[tuple[date, Interval]]:
    if indicator not in INDICATORS:
        raise ValueError(f"unknown indicator {indicator!r}")
    return [(f.release_date, getattr(f.impacts.total, indicator)) for f in footprints]


def trend_by_modality(
    footprints: Iterable[TrainingFootprint], indicator: str = "gwp"
) -> dict[str, Optional[TrendFit]]:
    """Per-group fits for language, vision, multimodal and a pooled "other".

    Groups with fewer than three systems map to ``None`` (insufficient data);
    groups with no systems at all are left out.
    """
    groups: dict[str, list[TrainingFootprint]] = {}
    for f in footprints:
        groups.setdefault(modality_group(f.modality), []).append(f)
    out: dict[str, Optional[TrendFit]] = {}
    for name in GROUP_ORDER:
        members = groups.get(name)
        if not members:
            continue
        if len(members) < MIN_GROUP_SIZE:
            out[name] = None
            continue
        out[name] = fit_trend(series(members, indicator))
    return out


# -- scenarios -----------------------------------------------------------------


@dataclass(frozen=True)
class Scenario:
    name: str
    annual_reduction: float
    start_year: int = 2019
    fractional: bool = False
    floor_intensity: Optional[float] = None  # kgCO2eq/kWh, off by default

    def __post_init__(self) -> None:
        if not (0 <= self.annual_reduction < 1):
            raise ValueError("annual reduction must be in [0, 1)")
        if self.floor_intensity is not None and self.floor_intensity < 0:
            raise ValueError("intensity floor must be >= 0")


def scenario_factor(scenario: Scenario, release_date: date) -> float:
    """Carbon-intensity multiplier ``(1 - reduction) ** n`` for years elapsed since the start."""
    years = fractional_year(release_date) - scenario.start_year
    n = max(0.0, years if scenario.fractional else float(math.floor(years)))
    return (1.0 - scenario.annual_reduction) ** n


def _scale_gwp(vector: ImpactVector, factor: float, floor: Optional[float]) -> ImpactVector:
    gwp = vector.gwp if isinstance(vector.gwp, Interval) else Interval.point(vector.gwp)
    energy = vector.energy if isinstance(vector.energy, Interval) else Interval.point(vector.energy)
    scaled = gwp * factor
    if floor is not None:
        bounds = [
            min(orig, max(new, kwh * floor))
            for orig, new, kwh in zip(
                (gwp.low, gwp.ref, gwp.high), (scaled.low, scaled.ref, scaled.high), (energy.low, energy.ref, energy.high)
            )
        ]
        scaled = Interval(*bounds)
    return replace(vector, gwp=scaled)


def apply_scenario(footprints: Sequence[TrainingFootprint], scenario: Scenario) -> list[TrainingFootprint]:
    """Scale usage and infrastructure GWP by the scenario factor; everything else is untouched."""
    out = []
    for f in footprints:
        factor = scenario_factor(scenario, f.release_date)
        old = f.impacts
        impacts = PhasedImpact.from_phases(
            old.embodied,
            _scale_gwp(old.usage, factor, scenario.floor_intensity),
            _scale_gwp(old.infrastructure, factor, scenario.floor_intensity),
        )
        total_gwp = ref_value(impacts.total.gwp)
        share = ref_value(impacts.embodied.gwp) / total_gwp if total_gwp > 0 else 0.0
        out.append(
            replace(
                f,
                impacts=impacts,
                embodied_share_gwp=share,
                provenance=f.provenance + (f"scenario={scenario.name}:{scenario.annual_reduction:g}:x{factor:.6g}",),
            )
        )
    return out


@dataclass(frozen=True)
class ScenarioComparison:
    scenario: Scenario
    baseline: TrendFit
    adjusted: TrendFit

    @property
    def slope_difference(self) -> float:
        return self.adjusted.slope - self.baseline.slope


def compare_scenario(
    footprints: Sequence[TrainingFootprint], scenario: Scenario, since: Optional[date] = None
) -> ScenarioComparison:
    """GWP trend with and without the scenario, optionally restricted to releases from ``since``."""
    chosen = [f for f in footprints if since is None or f.release_date >= since]
    adjusted = apply_scenario(chosen, scenario)
    return ScenarioComparison(scenario, fit_trend(series(chosen, "gwp")), fit_trend(series(adjusted, "gwp")))
