import csv
from dataclasses import replace
from datetime import date

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mltrain_lca.analysis import fit_trend
from mltrain_lca.hardware import (
    CARD_COLUMNS,
    CardSource,
    GraphicsCard,
    Precision,
    Resolution,
    UnknownCardError,
    Vendor,
    card_family,
    compute_efficiency,
    default_catalog,
    default_preferences,
    die_area_estimate,
    ingest_catalog,
    load_cards,
    normalize_name,
    resolve_card_name,
    write_cards,
)
from mltrain_lca.tables import DataError, bundled_path


def make_card(card_id="Card X", **kw):
    values = dict(
        id=card_id,
        vendor=Vendor.NVIDIA_WORKSTATION,
        release_date=date(2020, 1, 1),
        memory_size=40.0,
        memory_type="HBM2",
        tdp=250.0,
        die_area=800.0,
        peak_compute={Precision.SINGLE: 1.0e13},
    )
    values.update(kw)
    return GraphicsCard(**values)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def card_row(card_id, tdp="300", single="1e13", source="primary-db"):
    return [card_id, "NVIDIA-workstation", "2020-05-14", "826", "7", "40", "HBM2e", tdp, single, "", "", "", source]


# -- GraphicsCard invariants ------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(tdp=0.0),
        dict(memory_size=0.0),
        dict(die_area=-1.0),
        dict(peak_compute={Precision.SINGLE: 0.0}),
        dict(release_date=date(1999, 12, 31)),
    ],
)
def test_card_invariants(kw):
    with pytest.raises(ValueError):
        make_card(**kw)


# -- ingestion --------------------------------------------------------------------


def test_identical_files_give_no_conflicts(tmp_path):
    rows = [card_row("Card A"), card_row("Card B", tdp="250")]
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, rows)
    b = write_csv(tmp_path / "b.csv", CARD_COLUMNS, rows)
    cards, conflicts = ingest_catalog(a, b)
    assert conflicts == []
    primary = load_cards(a)
    assert [replace(c, source=CardSource.PRIMARY) for c in cards] == primary
    assert all(c.source is CardSource.MERGED for c in cards)


def test_override_resolves_conflict(tmp_path):
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, [card_row("Card A", tdp="300")])
    b = write_csv(tmp_path / "b.csv", CARD_COLUMNS, [card_row("Card A", tdp="250", source="secondary-db")])
    o = write_csv(tmp_path / "o.csv", ("id", "field_name", "value"), [["Card A", "tdp_w", "300"]])
    cards, conflicts = ingest_catalog(a, b, o)
    assert len(conflicts) == 1
    c = conflicts[0]
    assert (c.card_id, c.field_name, c.value_a, c.value_b) == ("Card A", "tdp_w", "300", "250")
    assert c.resolution is Resolution.DATASHEET_OVERRIDE
    assert cards[0].tdp == 300.0


def test_unresolved_conflict_keeps_primary(tmp_path):
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, [card_row("Card A", single="1e13")])
    b = write_csv(tmp_path / "b.csv", CARD_COLUMNS, [card_row("card-a", single="2e13")])
    cards, conflicts = ingest_catalog(a, b)
    assert [c.resolution for c in conflicts] == [Resolution.UNRESOLVED]
    assert cards[0].peak(Precision.SINGLE) == 1e13
    assert conflicts[0].value_a != conflicts[0].value_b


def test_override_applies_without_conflict(tmp_path):
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, [card_row("Card A")])
    b = write_csv(tmp_path / "b.csv", CARD_COLUMNS, [card_row("Card A")])
    o = write_csv(tmp_path / "o.csv", ("id", "field_name", "value"), [["Card A", "memory_gb", "80"]])
    cards, conflicts = ingest_catalog(a, b, o)
    assert conflicts == [] and cards[0].memory_size == 80.0


def test_secondary_only_cards_are_added(tmp_path):
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, [card_row("Card A")])
    b = write_csv(tmp_path / "b.csv", CARD_COLUMNS, [card_row("Card A"), card_row("Card P6", source="secondary-db")])
    cards, _ = ingest_catalog(a, b)
    assert [c.id for c in cards] == ["Card A", "Card P6"]
    assert cards[1].source is CardSource.SECONDARY


def test_many_shared_agreeing_ids(tmp_path):
    rows = [card_row(f"Card {i:03d}", tdp=str(100 + i)) for i in range(83)]
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, rows + [card_row("Only Primary")])
    b = write_csv(tmp_path / "b.csv", CARD_COLUMNS, rows)
    cards, conflicts = ingest_catalog(a, b)
    assert len(cards) == 84 and conflicts == []


def test_duplicate_id_is_an_error(tmp_path):
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, [card_row("Card A"), card_row("CARD-A")])
    with pytest.raises(DataError, match="duplicate"):
        load_cards(a)


def test_schema_error_names_file_row_and_column(tmp_path):
    row = card_row("Card A", tdp="lots")
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, [row])
    with pytest.raises(DataError) as err:
        load_cards(a)
    msg = str(err.value)
    assert "a.csv" in msg and "row 2" in msg and "tdp_w" in msg


def test_missing_column(tmp_path):
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS[:-1], [card_row("Card A")[:-1]])
    with pytest.raises(DataError, match="source"):
        load_cards(a)


def test_unknown_vendor(tmp_path):
    row = card_row("Card A")
    row[1] = "Intel"
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, [row])
    with pytest.raises(DataError, match="vendor"):
        load_cards(a)


def test_merge_is_idempotent(tmp_path):
    merged = default_catalog()
    p = write_cards(tmp_path / "merged", merged)
    again, conflicts = ingest_catalog(p, p)
    assert conflicts == []
    assert len(again) == len(merged)


def test_swapping_sources_with_complete_overrides(tmp_path):
    a = write_csv(tmp_path / "a.csv", CARD_COLUMNS, [card_row("Card A", tdp="300"), card_row("Card B")])
    b = write_csv(tmp_path / "b.csv", CARD_COLUMNS, [card_row("Card A", tdp="250"), card_row("Card C")])
    o = write_csv(tmp_path / "o.csv", ("id", "field_name", "value"), [["Card A", "tdp_w", "275"]])
    ab, _ = ingest_catalog(a, b, o)
    ba, _ = ingest_catalog(b, a, o)
    assert ab == ba


def test_bundled_catalog_conflicts_are_all_settled():
    _, conflicts = ingest_catalog(
        bundled_path("cards_primary.csv"), bundled_path("cards_secondary.csv"), bundled_path("card_overrides.csv")
    )
    assert conflicts, "the bundled sources are expected to disagree somewhere"
    assert all(c.resolution is Resolution.DATASHEET_OVERRIDE for c in conflicts)


def test_bundled_catalog_contains_secondary_only_card():
    ids = {c.id for c in default_catalog()}
    assert "NVIDIA Tesla P6" in ids


# -- names ------------------------------------------------------------------------


def test_normalize_name():
    assert normalize_name("NVIDIA A100-SXM4-40GB") == normalize_name("nvidia a100 sxm4 40 gb")


def test_card_family():
    assert card_family("NVIDIA A100 SXM4 40 GB") == "a100"
    assert card_family("Tesla K40") == "k40"


@pytest.fixture(scope="module")
def catalog():
    return default_catalog()


def test_exact_match_has_no_alternatives(catalog):
    r = resolve_card_name("NVIDIA Tesla K80", catalog)
    assert r.reference_card == "NVIDIA Tesla K80" and r.alternatives == ()


def test_a100_prefers_sxm4_40gb(catalog):
    r = resolve_card_name("A100", catalog, default_preferences())
    assert r.reference_card == "NVIDIA A100 SXM4 40 GB"
    assert set(r.alternatives) == {"NVIDIA A100 SXM4 80 GB", "NVIDIA A100 PCIe 40 GB", "NVIDIA A100 PCIe 80 GB"}


def test_a100_default_rule_without_preferences():
    cards = [
        make_card("NVIDIA A100 PCIe 40 GB"),
        make_card("NVIDIA A100 SXM4 80 GB", memory_size=80.0),
        make_card("NVIDIA A100 SXM4 40 GB"),
    ]
    r = resolve_card_name("A100", cards)
    assert r.reference_card == "NVIDIA A100 SXM4 40 GB"
    assert r.alternatives == ("NVIDIA A100 PCIe 40 GB", "NVIDIA A100 SXM4 80 GB")


def test_suffix_variants_match_but_digits_do_not(catalog):
    r = resolve_card_name("Tesla K40", catalog)
    assert set(r.candidates) == {"NVIDIA Tesla K40c", "NVIDIA Tesla K40m"}
    a10 = resolve_card_name("A10", catalog)
    assert a10.candidates == ("NVIDIA A10",)


def test_unknown_card(catalog):
    with pytest.raises(UnknownCardError) as err:
        resolve_card_name("XYZ-nonexistent", catalog)
    assert err.value.query == "XYZ-nonexistent"


def test_empty_catalog():
    with pytest.raises(ValueError):
        resolve_card_name("A100", [])


@given(st.sampled_from(["A100", "V100", "K40", "P100", "H100", "TPU", "Titan", "RTX", "Quadro", "M40", "L40"]))
def test_reference_is_member_of_matches(query):
    cards = default_catalog()
    r = resolve_card_name(query, cards, default_preferences())
    assert r.reference_card not in r.alternatives
    ids = {c.id for c in cards}
    assert set(r.candidates) <= ids


# -- efficiency and die area -------------------------------------------------------


def test_efficiency_division():
    assert compute_efficiency(make_card(tdp=250.0), Precision.SINGLE) == pytest.approx(4.0e10, rel=1e-15)


def test_efficiency_identity():
    assert compute_efficiency(make_card(tdp=1.0, peak_compute={Precision.HALF: 7.5e12}), Precision.HALF) == 7.5e12


def test_efficiency_missing_precision_is_absent():
    assert compute_efficiency(make_card(), Precision.TENSOR) is None


@given(st.floats(min_value=1e-3, max_value=1e3))
def test_efficiency_homogeneous(k):
    card = make_card()
    scaled = make_card(peak_compute={Precision.SINGLE: 1.0e13 * k})
    assert compute_efficiency(scaled, Precision.SINGLE) == pytest.approx(k * compute_efficiency(card, Precision.SINGLE))


def test_bundled_efficiency_grows_exponentially():
    cards = [c for c in default_catalog() if c.vendor is Vendor.NVIDIA_WORKSTATION]
    pts = [(c.release_date, compute_efficiency(c, Precision.SINGLE)) for c in cards]
    fit = fit_trend([(d, e) for d, e in pts if e])
    assert fit.slope > 0 and fit.p_value < 0.05


def test_die_area_fallbacks():
    a = make_card("NVIDIA Foo 1", die_area=400.0)
    b = make_card("NVIDIA Foo 2", die_area=600.0)
    c = make_card("NVIDIA Foo 3", die_area=None)
    other = make_card("NVIDIA Bar 1", die_area=100.0)
    assert die_area_estimate(a, [a, b, c]) == (400.0, False)
    assert die_area_estimate(c, [a, b, c, other]) == (pytest.approx(500.0), True)
    lone = make_card("NVIDIA Baz", die_area=None)
    assert die_area_estimate(lone, [other, lone]) == (pytest.approx(100.0), True)
    assert die_area_estimate(lone, [lone, make_card("Q", vendor=Vendor.TPU, die_area=300.0)]) == (300.0, True)
    with pytest.raises(ValueError):
        die_area_estimate(lone, [lone])


def test_bundled_tpus_use_family_mean():
    cards = default_catalog()
    v3 = next(c for c in cards if c.id == "Google TPU v3")
    known = [c.die_area for c in cards if c.family == "tpu" and c.die_area]
    area, estimated = die_area_estimate(v3, cards)
    assert estimated and area == pytest.approx(np.mean(known))
