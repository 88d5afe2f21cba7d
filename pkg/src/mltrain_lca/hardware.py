"""Graphics-card specification catalog: ingestion, cross-validation and lookup."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass, field, replace
from datetime import date
from enum import Enum
from pathlib import Path
from statistics import fmean
from typing import Iterable, Mapping, Optional, Sequence

from .tables import (
    DataError,
    PathLike,
    bundled_path,
    cell_error,
    fmt,
    parse_date,
    parse_float,
    read_rows,
    write_table,
)

logger = logging.getLogger(__name__)

EARLIEST_RELEASE = date(2000, 1, 1)


class Vendor(str, Enum):
    NVIDIA_WORKSTATION = "NVIDIA-workstation"
    NVIDIA_OTHER = "NVIDIA-other"
    TPU = "TPU"
    OTHER_ACCELERATOR = "other-accelerator"


class Precision(str, Enum):
    SINGLE = "single"
    DOUBLE = "double"
    HALF = "half"
    TENSOR = "tensor"


class CardSource(str, Enum):
    PRIMARY = "primary-db"
    SECONDARY = "secondary-db"
    DATASHEET = "datasheet"
    MERGED = "merged"


class Resolution(str, Enum):
    DATASHEET_OVERRIDE = "datasheet-override"
    UNRESOLVED = "unresolved"


class UnknownCardError(LookupError):
    """No catalog card matches a card-name query."""

    def __init__(self, query: str):
        super().__init__(f"unknown card: {query!r}")
        self.query = query


CARD_COLUMNS = (
    "id",
    "vendor",
    "release_date",
    "die_area_mm2",
    "tech_node_nm",
    "memory_gb",
    "memory_type",
    "tdp_w",
    "peak_single_flops",
    "peak_double_flops",
    "peak_half_flops",
    "peak_tensor_flops",
    "source",
)
OVERRIDE_COLUMNS = ("id", "field_name", "value")
PREFERENCE_COLUMNS = ("family", "preferred_id")

_PEAK_COLUMNS = {
    Precision.SINGLE: "peak_single_flops",
    Precision.DOUBLE: "peak_double_flops",
    Precision.HALF: "peak_half_flops",
    Precision.TENSOR: "peak_tensor_flops",
}
# Columns compared during cross-validation (identity and provenance excluded).
COMPARED_COLUMNS = tuple(c for c in CARD_COLUMNS if c not in ("id", "source"))


@dataclass(frozen=True)
class GraphicsCard:
    id: str
    vendor: Vendor
    release_date: date
    memory_size: float
    memory_type: str
    tdp: float
    die_area: Optional[float] = None
    tech_node: Optional[float] = None
    peak_compute: Mapping[Precision, float] = field(default_factory=dict, hash=False)
    source: CardSource = CardSource.PRIMARY

    def __post_init__(self) -> None:
        if self.tdp <= 0:
            raise ValueError(f"{self.id}: tdp must be > 0")
        if self.memory_size <= 0:
            raise ValueError(f"{self.id}: memory size must be > 0")
        if self.die_area is not None and self.die_area <= 0:
            raise ValueError(f"{self.id}: die area must be > 0 when present")
        for precision, value in self.peak_compute.items():
            if value <= 0:
                raise ValueError(f"{self.id}: peak {precision.value} compute must be > 0")
        if not (EARLIEST_RELEASE <= self.release_date <= date.today()):
            raise ValueError(f"{self.id}: release date {self.release_date} out of range")

    @property
    def family(self) -> str:
        return card_family(self.id)

    def peak(self, precision: Precision) -> Optional[float]:
        return self.peak_compute.get(precision)

    def column_values(self) -> dict[str, object]:
        """Values keyed by card-schema column name."""
        values: dict[str, object] = {
            "id": self.id,
            "vendor": self.vendor.value,
            "release_date": self.release_date,
            "die_area_mm2": self.die_area,
            "tech_node_nm": self.tech_node,
            "memory_gb": self.memory_size,
            "memory_type": self.memory_type,
            "tdp_w": self.tdp,
            "source": self.source.value,
        }
        for precision, column in _PEAK_COLUMNS.items():
            values[column] = self.peak_compute.get(precision)
        return values


@dataclass(frozen=True)
class CardRecordConflict:
    card_id: str
    field_name: str
    value_a: str
    value_b: str
    resolution: Resolution

    def __post_init__(self) -> None:
        if self.value_a == self.value_b:
            raise ValueError("a conflict needs two different values")


@dataclass(frozen=True)
class CardNameResolution:
    query: str
    reference_card: str
    alternatives: tuple[str, ...] = ()

    @property
    def candidates(self) -> tuple[str, ...]:
        return (self.reference_card,) + self.alternatives

    @property
    def ambiguous(self) -> bool:
        return bool(self.alternatives)


# -- name handling -----------------------------------------------------------

_VENDOR_WORDS = {"nvidia", "geforce", "tesla", "quadro", "google", "amd", "instinct", "huawei", "gtx", "rtx"}


def normalize_name(name: str) -> str:
    """Case-fold and unify separators so that "A100-SXM4-40GB" == "a100 sxm4 40 gb"."""
    text = name.lower()
    text = re.sub(r"[-_/,]+", " ", text)
    text = re.sub(r"(\d)(gb|tb)\b", r"\1 \2", text)
    return " ".join(text.split())


def card_family(name: str) -> str:
    """First model token of a card name, e.g. ``"NVIDIA A100 SXM4 40 GB" -> "a100"``."""
    tokens = [t for t in normalize_name(name).split() if t not in _VENDOR_WORDS]
    return tokens[0] if tokens else normalize_name(name)


def _default_preference(matches: Sequence[GraphicsCard]) -> GraphicsCard:
    # lowest-memory SXM variant first, then lowest memory overall
    def key(card: GraphicsCard):
        sxm = any(t.startswith("sxm") for t in normalize_name(card.id).split())
        return (not sxm, card.memory_size, card.id)

    return min(matches, key=key)


def _token_in(token: str, card_tokens: Sequence[str]) -> bool:
    # "k40" also matches "k40m"/"k40c", but "a10" must not match "a100"
    return any(t == token or (t.startswith(token) and t[len(token):].isalpha()) for t in card_tokens)


def resolve_card_name(
    query: str,
    catalog: Sequence[GraphicsCard],
    preferences: Optional[Mapping[str, str]] = None,
) -> CardNameResolution:
    """Map a free-text card reference onto a reference card and its alternatives."""
    if not catalog:
        raise ValueError("empty catalog")
    wanted = normalize_name(query)
    for card in catalog:
        if normalize_name(card.id) == wanted:
            return CardNameResolution(query, card.id, ())

    tokens = set(wanted.split())
    if not tokens:
        raise UnknownCardError(query)
    matches = [c for c in catalog if all(_token_in(t, normalize_name(c.id).split()) for t in tokens)]
    if not matches:
        raise UnknownCardError(query)

    if len(matches) == 1:
        return CardNameResolution(query, matches[0].id, ())

    reference = None
    if preferences:
        explicit = preferences.get(wanted)
        pref_id = explicit or preferences.get(card_family(query))
        if pref_id is not None:
            reference = next((c for c in matches if c.id == pref_id), None)
            if reference is None:
                # a family default that does not fit a more specific query is expected
                log = logger.warning if explicit else logger.debug
                log("preferred card %r is not among matches for %r", pref_id, query)
    if reference is None:
        reference = _default_preference(matches)
    alternatives = tuple(sorted(c.id for c in matches if c.id != reference.id))
    return CardNameResolution(query, reference.id, alternatives)


def compute_efficiency(card: GraphicsCard, precision: Precision) -> Optional[float]:
    """Peak FLOP/s per watt of TDP, or ``None`` when that precision is not documented."""
    peak = card.peak(precision)
    if peak is None:
        return None
    return peak / card.tdp


def die_area_estimate(card: GraphicsCard, catalog: Iterable[GraphicsCard]) -> tuple[float, bool]:
    """Die area of ``card``; missing values fall back to a family, vendor, then catalog mean.

    Returns ``(area_mm2, estimated)``.
    """
    if card.die_area is not None:
        return card.die_area, False
    known = [c for c in catalog if c.die_area is not None]
    for group in (
        [c for c in known if c.family == card.family],
        [c for c in known if c.vendor == card.vendor],
        known,
    ):
        if group:
            return fmean(c.die_area for c in group), True
    raise ValueError(f"{card.id}: no die area and no catalog data to estimate it from")


# -- ingestion ---------------------------------------------------------------


def _parse_card(path: PathLike, row: Mapping[str, str]) -> GraphicsCard:
    card_id = row["id"]
    if not card_id:
        raise cell_error(path, row, "id", "value required")
    try:
        vendor = Vendor(row["vendor"])
    except ValueError:
        raise cell_error(path, row, "vendor", f"unknown vendor {row['vendor']!r}") from None
    try:
        source = CardSource(row["source"]) if row["source"] else CardSource.PRIMARY
    except ValueError:
        raise cell_error(path, row, "source", f"unknown source {row['source']!r}") from None
    peaks = {}
    for precision, column in _PEAK_COLUMNS.items():
        value = parse_float(path, row, column, optional=True)
        if value is not None:
            peaks[precision] = value
    try:
        return GraphicsCard(
            id=card_id,
            vendor=vendor,
            release_date=parse_date(path, row, "release_date"),
            die_area=parse_float(path, row, "die_area_mm2", optional=True),
            tech_node=parse_float(path, row, "tech_node_nm", optional=True),
            memory_size=parse_float(path, row, "memory_gb"),
            memory_type=row["memory_type"],
            tdp=parse_float(path, row, "tdp_w"),
            peak_compute=peaks,
            source=source,
        )
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"{path}: row {row['__row__']}: {exc}") from None


def load_cards(path: PathLike) -> list[GraphicsCard]:
    """Parse one card file; ids must be unique (after name normalization)."""
    rows = read_rows(path, CARD_COLUMNS)
    cards: list[GraphicsCard] = []
    seen: dict[str, str] = {}
    for row in rows:
        card = _parse_card(path, row)
        key = normalize_name(card.id)
        if key in seen:
            raise DataError(f"{path}: row {row['__row__']}: duplicate id {card.id!r} (first at row {seen[key]})")
        seen[key] = row["__row__"]
        cards.append(card)
    return cards


def load_overrides(path: PathLike) -> dict[tuple[str, str], str]:
    rows = read_rows(path, OVERRIDE_COLUMNS)
    out: dict[tuple[str, str], str] = {}
    for row in rows:
        if row["field_name"] not in COMPARED_COLUMNS:
            raise cell_error(path, row, "field_name", f"not an overridable column: {row['field_name']!r}")
        key = (normalize_name(row["id"]), row["field_name"])
        if key in out:
            raise DataError(f"{path}: row {row['__row__']}: duplicate override for {row['id']!r}.{row['field_name']}")
        out[key] = row["value"]
    return out


def load_preferences(path: PathLike) -> dict[str, str]:
    rows = read_rows(path, PREFERENCE_COLUMNS)
    return {normalize_name(r["family"]): r["preferred_id"] for r in rows}


def _render(value) -> str:
    """Lossless text form of a card column value."""
    if isinstance(value, float):
        return str(int(value)) if value.is_integer() and abs(value) < 1e15 else repr(value)
    return fmt(value)


def _with_column(card: GraphicsCard, column: str, text: str, where: str) -> GraphicsCard:
    """Return ``card`` with one schema column replaced by the parsed ``text``."""
    values = {k: _render(v) for k, v in card.column_values().items()}
    values[column] = text
    values["__row__"] = where
    return _parse_card(where, values)


def ingest_catalog(
    primary_file: PathLike,
    secondary_file: PathLike,
    overrides_file: Optional[PathLike] = None,
) -> tuple[list[GraphicsCard], list[CardRecordConflict]]:
    """Merge two card files, cross-validating every field of the shared cards.

    Disagreements become :class:`CardRecordConflict` entries. A datasheet
    override settles a field (and is applied even where both files agree);
    without one the primary file's value is kept and the conflict stays
    unresolved. Cards present in only one file are carried over as-is.
    """
    primary = load_cards(primary_file)
    secondary = load_cards(secondary_file)
    overrides = load_overrides(overrides_file) if overrides_file else {}
    return merge_cards(primary, secondary, overrides)


def merge_cards(
    primary: Sequence[GraphicsCard],
    secondary: Sequence[GraphicsCard],
    overrides: Mapping[tuple[str, str], str],
) -> tuple[list[GraphicsCard], list[CardRecordConflict]]:
    by_key_b = {normalize_name(c.id): c for c in secondary}
    merged: dict[str, GraphicsCard] = {}
    conflicts: list[CardRecordConflict] = []

    for card in primary:
        key = normalize_name(card.id)
        other = by_key_b.pop(key, None)
        if other is None:
            merged[key] = card
            continue
        va, vb = card.column_values(), other.column_values()
        result = replace(card, source=CardSource.MERGED)
        for column in COMPARED_COLUMNS:
            a, b = _render(va[column]), _render(vb[column])
            if a == b:
                continue
            resolution = Resolution.UNRESOLVED
            if (key, column) in overrides:
                resolution = Resolution.DATASHEET_OVERRIDE
            conflicts.append(CardRecordConflict(card.id, column, a, b, resolution))
        merged[key] = result

    for key, card in by_key_b.items():
        merged[key] = card

    for (key, column), text in overrides.items():
        if key not in merged:
            raise DataError(f"override for unknown card {key!r}")
        merged[key] = _with_column(merged[key], column, text, "overrides")

    cards = sorted(merged.values(), key=lambda c: c.id)
    conflicts.sort(key=lambda c: (c.card_id, c.field_name))
    unresolved = sum(c.resolution is Resolution.UNRESOLVED for c in conflicts)
    if unresolved:
        logger.warning("%d card field conflicts left unresolved (primary value kept)", unresolved)
    return cards, conflicts


def write_cards(path: PathLike, cards: Sequence[GraphicsCard], fmt_name: str = "csv") -> Path:
    return write_table(path, CARD_COLUMNS, (c.column_values() for c in cards), fmt_name)


CONFLICT_COLUMNS = ("card_id", "field_name", "value_a", "value_b", "resolution")


def write_conflicts(path: PathLike, conflicts: Sequence[CardRecordConflict], fmt_name: str = "csv") -> Path:
    rows = (
        {
            "card_id": c.card_id,
            "field_name": c.field_name,
            "value_a": c.value_a,
            "value_b": c.value_b,
            "resolution": c.resolution.value,
        }
        for c in conflicts
    )
    return write_table(path, CONFLICT_COLUMNS, rows, fmt_name)


def default_catalog() -> list[GraphicsCard]:
    """The bundled, merged card catalog."""
    cards, _ = ingest_catalog(
        bundled_path("cards_primary.csv"),
        bundled_path("cards_secondary.csv"),
        bundled_path("card_overrides.csv"),
    )
    return cards


def default_preferences() -> dict[str, str]:
    return load_preferences(bundled_path("card_preferences.csv"))


def load_catalog(paths: Sequence[PathLike], overrides: Optional[PathLike] = None) -> list[GraphicsCard]:
    """One path: an already-merged catalog. Two paths: primary and secondary files to merge."""
    if len(paths) == 1:
        cards = load_cards(paths[0])
        if overrides:
            cards, _ = merge_cards(cards, [], load_overrides(overrides))
        return sorted(cards, key=lambda c: c.id)
    if len(paths) == 2:
        cards, _ = ingest_catalog(paths[0], paths[1], overrides)
        return cards
    raise ValueError("expected one merged card file or a primary and a secondary file")
