"""Life-cycle impact primitives: impact vectors, production and energy models, PUE, electricity mixes.

The production model is bottom-up. A card is the sum of its GPU die (per cm²),
its on-board memory (per GB) and a constant for the remaining components; a
server adds CPUs, DRAM and a chassis constant to its cards. Production energy
is not modelled, so embodied vectors always carry ``energy = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from datetime import date
from pathlib import Path
from typing import Mapping, Optional, Sequence, Union

from .hardware import GraphicsCard, Vendor, die_area_estimate
from .intervals import Interval, ref_value
from .tables import DataError, PathLike, bundled_path, cell_error, parse_float, read_rows

Quantity = Union[float, Interval]

HOURS_PER_YEAR = 8760.0
MAX_GWP_INTENSITY = 1.5  # kgCO2eq/kWh, sanity ceiling

PUE_EARLY, PUE_EARLY_YEAR = 1.75, 2010.0
PUE_LATE, PUE_LATE_YEAR = 1.2, 2018.0


def _low(q: Quantity) -> float:
    return q.low if isinstance(q, Interval) else float(q)


@dataclass(frozen=True)
class ImpactVector:
    """Energy (kWh), GWP (kgCO2eq) and ADPe (kgSbeq); components may be intervals."""

    energy: Quantity = 0.0
    gwp: Quantity = 0.0
    adpe: Quantity = 0.0
    flags: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        for name in ("energy", "gwp", "adpe"):
            if _low(getattr(self, name)) < 0:
                raise ValueError(f"impact component {name} must be >= 0")

    def __add__(self, other: "ImpactVector") -> "ImpactVector":
        flags = self.flags + tuple(f for f in other.flags if f not in self.flags)
        return ImpactVector(
            _add(self.energy, other.energy), _add(self.gwp, other.gwp), _add(self.adpe, other.adpe), flags
        )

    def scale(self, k: float) -> "ImpactVector":
        if k < 0:
            raise ValueError("impact vectors scale by non-negative factors only")
        return ImpactVector(self.energy * k, self.gwp * k, self.adpe * k, self.flags)

    def as_intervals(self) -> "ImpactVector":
        return ImpactVector(
            _as_interval(self.energy), _as_interval(self.gwp), _as_interval(self.adpe), self.flags
        )


def _add(a: Quantity, b: Quantity) -> Quantity:
    if isinstance(a, Interval) or isinstance(b, Interval):
        return _as_interval(a) + _as_interval(b)
    return a + b


def _as_interval(q: Quantity) -> Interval:
    return q if isinstance(q, Interval) else Interval.point(q)


ZERO = ImpactVector()


@dataclass(frozen=True)
class PhasedImpact:
    embodied: ImpactVector
    usage: ImpactVector
    infrastructure: ImpactVector
    total: ImpactVector

    @classmethod
    def from_phases(cls, embodied: ImpactVector, usage: ImpactVector, infrastructure: ImpactVector) -> "PhasedImpact":
        return cls(embodied, usage, infrastructure, embodied + usage + infrastructure)

    def phases(self) -> dict[str, ImpactVector]:
        return {"embodied": self.embodied, "usage": self.usage, "infra": self.infrastructure, "total": self.total}

    def check_sum(self, rel_tol: float = 1e-12) -> None:
        """Raise if ``total`` differs from the sum of the three phases."""
        expected = self.embodied + self.usage + self.infrastructure
        for name in ("energy", "gwp", "adpe"):
            a, b = _as_interval(getattr(self.total, name)), _as_interval(getattr(expected, name))
            for x, y in ((a.low, b.low), (a.ref, b.ref), (a.high, b.high)):
                if not math.isclose(x, y, rel_tol=rel_tol, abs_tol=1e-300):
                    raise AssertionError(f"phase sum violated on {name}: total {x!r} vs sum {y!r}")


@dataclass(frozen=True)
class ImpactFactors:
    gwp_per_die_cm2: float  # kgCO2eq / cm2 of GPU die
    adpe_per_die_cm2: float  # kgSbeq / cm2
    gwp_per_gb_mem: float  # kgCO2eq / GB (card and server memory)
    adpe_per_gb_mem: float  # kgSbeq / GB
    gwp_card_base: float  # kgCO2eq per card, other components
    adpe_card_base: float
    gwp_cpu: float  # kgCO2eq per CPU
    adpe_cpu: float
    gwp_server_base: float  # kgCO2eq per chassis
    adpe_server_base: float
    cpu_tdp_w: float
    mem_power_w_per_gb: float

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not (value >= 0 and math.isfinite(value)):
                raise ValueError(f"impact factor {f.name} must be a finite value >= 0, got {value!r}")

    @classmethod
    def zeros(cls) -> "ImpactFactors":
        return cls(**{f.name: 0.0 for f in fields(cls)})


FACTOR_UNITS = {
    "gwp_per_die_cm2": "kgCO2eq/cm2",
    "adpe_per_die_cm2": "kgSbeq/cm2",
    "gwp_per_gb_mem": "kgCO2eq/GB",
    "adpe_per_gb_mem": "kgSbeq/GB",
    "gwp_card_base": "kgCO2eq",
    "adpe_card_base": "kgSbeq",
    "gwp_cpu": "kgCO2eq",
    "adpe_cpu": "kgSbeq",
    "gwp_server_base": "kgCO2eq",
    "adpe_server_base": "kgSbeq",
    "cpu_tdp_w": "W",
    "mem_power_w_per_gb": "W/GB",
}


@dataclass(frozen=True)
class ServerConfig:
    cards_per_server: int
    cpus_per_server: int
    memory_gb: float
    lifespan_hours: float = 3 * HOURS_PER_YEAR
    utilization: float = 0.5

    def __post_init__(self) -> None:
        if self.cards_per_server < 1 or self.cpus_per_server < 1:
            raise ValueError("server needs at least one card and one CPU")
        if self.memory_gb < 0:
            raise ValueError("server memory must be >= 0")
        if self.lifespan_hours <= 0:
            raise ValueError("lifespan must be > 0")
        if not (0 < self.utilization <= 1):
            raise ValueError("utilization must be in (0, 1]")


WORKSTATION_SERVER = ServerConfig(cards_per_server=4, cpus_per_server=2, memory_gb=512)
NON_WORKSTATION_SERVER = ServerConfig(cards_per_server=2, cpus_per_server=2, memory_gb=192)


@dataclass(frozen=True)
class ElectricityMix:
    country_code: str
    gwp_intensity: float  # kgCO2eq/kWh
    adpe_intensity: float  # kgSbeq/kWh

    def __post_init__(self) -> None:
        if self.gwp_intensity < 0 or self.adpe_intensity < 0:
            raise ValueError(f"{self.country_code}: intensities must be >= 0")
        if self.gwp_intensity > MAX_GWP_INTENSITY:
            raise ValueError(f"{self.country_code}: GWP intensity above {MAX_GWP_INTENSITY} kgCO2eq/kWh")


@dataclass(frozen=True)
class MixInterval:
    """Electricity intensities over several countries; the first country is the reference."""

    countries: tuple[str, ...]
    gwp_intensity: Interval
    adpe_intensity: Interval


class UnknownCountryError(KeyError):
    def __init__(self, code: str, known: Sequence[str]):
        super().__init__(f"unknown country code {code!r}; known codes: {', '.join(sorted(known))}")
        self.code = code

    def __str__(self) -> str:
        return self.args[0]


# -- production --------------------------------------------------------------


def card_production_impact(
    card: GraphicsCard, factors: ImpactFactors, catalog: Optional[Sequence[GraphicsCard]] = None
) -> ImpactVector:
    """Production GWP/ADPe of one card from die area, memory size and a base constant.

    A card without a die area uses the catalog's family mean; the result is
    flagged ``die-area-estimated:<id>``.
    """
    flags: tuple[str, ...] = ()
    if card.die_area is None:
        if not catalog:
            raise ValueError(f"{card.id}: die area missing and no catalog given for the fallback")
        area, _ = die_area_estimate(card, catalog)
        flags = (f"die-area-estimated:{card.id}",)
    else:
        area = card.die_area
    die_cm2 = area / 100.0
    gwp = factors.gwp_per_die_cm2 * die_cm2 + factors.gwp_per_gb_mem * card.memory_size + factors.gwp_card_base
    adpe = factors.adpe_per_die_cm2 * die_cm2 + factors.adpe_per_gb_mem * card.memory_size + factors.adpe_card_base
    return ImpactVector(0.0, gwp, adpe, flags)


def server_production_impact(card_impact: ImpactVector, config: ServerConfig, factors: ImpactFactors) -> ImpactVector:
    n_cards, n_cpus, mem = config.cards_per_server, config.cpus_per_server, config.memory_gb
    gwp = n_cards * card_impact.gwp + n_cpus * factors.gwp_cpu + mem * factors.gwp_per_gb_mem + factors.gwp_server_base
    adpe = (
        n_cards * card_impact.adpe + n_cpus * factors.adpe_cpu + mem * factors.adpe_per_gb_mem + factors.adpe_server_base
    )
    return ImpactVector(0.0, gwp, adpe, card_impact.flags)


def allocate_embodied(server_impact: ImpactVector, config: ServerConfig, gpu_hours: float) -> ImpactVector:
    """Share of a server's production impact attributable to ``gpu_hours`` of one card slot."""
    per_card = 1.0 / config.cards_per_server
    return server_impact.scale(per_card * gpu_hours / (config.lifespan_hours * config.utilization))


# -- energy ------------------------------------------------------------------


def fractional_year(d: date) -> float:
    start = date(d.year, 1, 1).toordinal()
    length = date(d.year + 1, 1, 1).toordinal() - start
    return d.year + (d.toordinal() - start) / length


def pue_at(d: date) -> float:
    """Average data-center PUE: 1.75 up to 2010, 1.2 from 2018, linear in between."""
    t = fractional_year(d)
    if t <= PUE_EARLY_YEAR:
        return PUE_EARLY
    if t >= PUE_LATE_YEAR:
        return PUE_LATE
    frac = (t - PUE_EARLY_YEAR) / (PUE_LATE_YEAR - PUE_EARLY_YEAR)
    return PUE_EARLY + (PUE_LATE - PUE_EARLY) * frac


def server_power_per_card(
    card: GraphicsCard,
    config: ServerConfig,
    factors: ImpactFactors,
    utilization_gpu: float = 1.0,
    utilization_cpu: float = 1.0,
) -> float:
    """Watts drawn per card slot: the card plus its share of CPUs and DRAM."""
    host = config.cpus_per_server * factors.cpu_tdp_w * utilization_cpu + config.memory_gb * factors.mem_power_w_per_gb
    return card.tdp * utilization_gpu + host / config.cards_per_server


def server_energy(
    gpu_hours: float,
    card: GraphicsCard,
    config: ServerConfig,
    factors: ImpactFactors,
    utilization_gpu: float = 1.0,
    utilization_cpu: float = 1.0,
    pue: float = PUE_LATE,
) -> tuple[float, float]:
    """``(usage_kwh, infra_kwh)`` for a training run; infrastructure adds ``PUE - 1``."""
    if gpu_hours <= 0:
        raise ValueError("gpu_hours must be > 0")
    if pue < 1:
        raise ValueError("PUE must be >= 1")
    usage_kwh = gpu_hours * server_power_per_card(card, config, factors, utilization_gpu, utilization_cpu) / 1000.0
    return usage_kwh, usage_kwh * (pue - 1.0)


def energy_to_impact(
    usage_kwh: Quantity, infra_kwh: Quantity, mix: Union[ElectricityMix, MixInterval]
) -> tuple[ImpactVector, ImpactVector]:
    def phase(kwh: Quantity) -> ImpactVector:
        gwp = _mul(kwh, mix.gwp_intensity)
        adpe = _mul(kwh, mix.adpe_intensity)
        return ImpactVector(kwh, gwp, adpe)

    return phase(usage_kwh), phase(infra_kwh)


def _mul(a: Quantity, b: Quantity) -> Quantity:
    if isinstance(a, Interval):
        return a * b
    if isinstance(b, Interval):
        return b * a
    return a * b


# -- electricity mixes -------------------------------------------------------

MIX_COLUMNS = ("country_code", "gwp_intensity_kg_per_kwh", "adpe_intensity_kgsb_per_kwh")


def load_mixes(path: PathLike) -> dict[str, ElectricityMix]:
    rows = read_rows(path, MIX_COLUMNS)
    out: dict[str, ElectricityMix] = {}
    for row in rows:
        code = row["country_code"].upper()
        if len(code) != 2 or not code.isalpha():
            raise cell_error(path, row, "country_code", f"not an ISO-3166 alpha-2 code: {code!r}")
        if code in out:
            raise cell_error(path, row, "country_code", f"duplicate code {code}")
        try:
            out[code] = ElectricityMix(
                code,
                parse_float(path, row, "gwp_intensity_kg_per_kwh"),
                parse_float(path, row, "adpe_intensity_kgsb_per_kwh"),
            )
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: row {row['__row__']}: {exc}") from None
    return out


def lookup_mix(mixes: Mapping[str, ElectricityMix], code: str) -> ElectricityMix:
    try:
        return mixes[code.upper()]
    except KeyError:
        raise UnknownCountryError(code, list(mixes)) from None


def mix_interval(countries: Sequence[str], mixes: Mapping[str, ElectricityMix]) -> MixInterval:
    """Reference intensities from the first country, bounds from all of them."""
    if not countries:
        raise ValueError("at least one country is required")
    found = [lookup_mix(mixes, c) for c in countries]
    ref = found[0]
    gwp = [m.gwp_intensity for m in found]
    adpe = [m.adpe_intensity for m in found]
    return MixInterval(
        tuple(m.country_code for m in found),
        Interval(min(gwp), ref.gwp_intensity, max(gwp)),
        Interval(min(adpe), ref.adpe_intensity, max(adpe)),
    )


# -- configuration files -----------------------------------------------------

FACTOR_COLUMNS = ("name", "value", "unit")


def load_factors(path: PathLike) -> ImpactFactors:
    rows = read_rows(path, FACTOR_COLUMNS)
    values: dict[str, float] = {}
    for row in rows:
        name = row["name"]
        if name not in FACTOR_UNITS:
            raise cell_error(path, row, "name", f"unknown factor {name!r}")
        if row["unit"] and row["unit"] != FACTOR_UNITS[name]:
            raise cell_error(path, row, "unit", f"expected {FACTOR_UNITS[name]}, got {row['unit']!r}")
        values[name] = parse_float(path, row, "value")
    missing = sorted(set(FACTOR_UNITS) - set(values))
    if missing:
        raise DataError(f"{path}: missing factor(s) {', '.join(missing)}")
    try:
        return ImpactFactors(**values)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


SERVER_COLUMNS = ("vendor", "cards_per_server", "cpus_per_server", "memory_gb", "lifespan_years", "utilization")


def load_server_configs(path: PathLike) -> dict[Vendor, ServerConfig]:
    rows = read_rows(path, SERVER_COLUMNS)
    out: dict[Vendor, ServerConfig] = {}
    for row in rows:
        try:
            vendor = Vendor(row["vendor"])
        except ValueError:
            raise cell_error(path, row, "vendor", f"unknown vendor {row['vendor']!r}") from None
        try:
            out[vendor] = ServerConfig(
                cards_per_server=int(parse_float(path, row, "cards_per_server")),
                cpus_per_server=int(parse_float(path, row, "cpus_per_server")),
                memory_gb=parse_float(path, row, "memory_gb"),
                lifespan_hours=parse_float(path, row, "lifespan_years") * HOURS_PER_YEAR,
                utilization=parse_float(path, row, "utilization"),
            )
        except ValueError as exc:
            if isinstance(exc, DataError):
                raise
            raise DataError(f"{path}: row {row['__row__']}: {exc}") from None
    missing = [v.value for v in Vendor if v not in out]
    if missing:
        raise DataError(f"{path}: no server configuration for {', '.join(missing)}")
    return out


def default_factors() -> ImpactFactors:
    return load_factors(bundled_path("impact_factors.csv"))


def default_mixes() -> dict[str, ElectricityMix]:
    return load_mixes(bundled_path("electricity_mixes.csv"))


def default_server_configs() -> dict[Vendor, ServerConfig]:
    return load_server_configs(bundled_path("server_configs.csv"))


# -- calibration of the shipped constants --------------------------------------


def calibrate_factors(
    shape: ImpactFactors,
    card: GraphicsCard,
    config: ServerConfig,
    gpu_hours: float,
    target_usage_kwh: float,
    target_embodied: ImpactVector,
) -> ImpactFactors:
    """Close a reference run by solving for the chassis constants and DRAM power.

    ``shape`` fixes the die, memory, card and CPU coefficients and the CPU TDP.
    The returned factors reproduce ``target_usage_kwh`` (via ``mem_power_w_per_gb``)
    and ``target_embodied`` GWP/ADPe (via the two ``*_server_base`` constants)
    exactly for ``card`` in ``config`` running ``gpu_hours``.
    """
    watts = target_usage_kwh * 1000.0 / gpu_hours
    host_w = (watts - card.tdp) * config.cards_per_server - config.cpus_per_server * shape.cpu_tdp_w
    if host_w < 0 or config.memory_gb <= 0:
        raise ValueError("target usage is below the card and CPU draw; cannot solve for DRAM power")
    mem_power = host_w / config.memory_gb

    alloc = gpu_hours / (config.cards_per_server * config.lifespan_hours * config.utilization)
    no_base = replace(shape, gwp_server_base=0.0, adpe_server_base=0.0)
    partial = server_production_impact(card_production_impact(card, no_base), config, no_base)
    gwp_base = ref_value(target_embodied.gwp) / alloc - partial.gwp
    adpe_base = ref_value(target_embodied.adpe) / alloc - partial.adpe
    if gwp_base < 0 or adpe_base < 0:
        raise ValueError("component coefficients already exceed the embodied target")
    return replace(shape, gwp_server_base=gwp_base, adpe_server_base=adpe_base, mem_power_w_per_gb=mem_power)
