import math
from dataclasses import replace
from datetime import date

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mltrain_lca.estimator import (
    CalibrationError,
    Confidence,
    EstimationContext,
    EstimationError,
    Method,
    MLSystemRecord,
    Modality,
    NotApplicable,
    PairedEstimate,
    calibrate,
    default_pairs,
    detect_anomalies,
    embodied_share_stats,
    estimate_footprint,
    gpu_hours_method1,
    gpu_hours_method2,
    load_systems,
    six_number_summary,
)
from mltrain_lca.hardware import GraphicsCard, Precision, Vendor
from mltrain_lca.tables import DataError

GPT4 = MLSystemRecord(
    name="GPT-4",
    release_date=date(2023, 3, 14),
    modality=Modality.LANGUAGE,
    training_flop=2.1e25,
    card_query="NVIDIA A100 SXM4 40 GB",
    card_count=25000,
    training_duration_h=2280,
    countries=("US",),
)


def flop_record(flop=1e21, query="Test card"):
    return MLSystemRecord("synthetic", date(2021, 1, 1), training_flop=flop, card_query=query, countries=("US",))


def make_card(peak=1e14):
    return GraphicsCard(
        id="Test card",
        vendor=Vendor.NVIDIA_OTHER,
        release_date=date(2020, 1, 1),
        memory_size=16,
        memory_type="GDDR6",
        tdp=250,
        die_area=500,
        peak_compute={Precision.SINGLE: peak},
    )


# -- GPU-hours --------------------------------------------------------------------


def test_method1_examples():
    rec = MLSystemRecord("m", date(2020, 1, 1), card_count=8, training_duration_h=100)
    est = gpu_hours_method1(rec)
    assert est.value.ref == 800 and est.value.is_point and est.method is Method.GPU_H1
    assert gpu_hours_method1(GPT4).value.ref == 57_000_000


def test_method1_errors():
    with pytest.raises(ValueError):
        gpu_hours_method1(replace(GPT4, card_count=0))
    with pytest.raises(NotApplicable):
        gpu_hours_method1(replace(GPT4, training_duration_h=None))


def test_method2_unit_conversion():
    catalog = [make_card()]
    assert gpu_hours_method2(flop_record(), catalog, ratio=1.0).value.ref == pytest.approx(1e7 / 3600, rel=1e-12)
    est = gpu_hours_method2(flop_record(), catalog, ratio=0.27)
    assert est.value.ref == pytest.approx(10288.07, abs=0.005)
    assert est.performance_ratio_used == 0.27 and est.precision is Precision.SINGLE


def test_method2_precision_order():
    card = replace(make_card(), peak_compute={Precision.SINGLE: 1e14, Precision.TENSOR: 4e14})
    est = gpu_hours_method2(flop_record(), [card], ratio=1.0)
    assert est.precision is Precision.TENSOR
    assert est.value.ref == pytest.approx(1e21 / 4e14 / 3600)


def test_method2_ambiguous_family(bundled_ctx):
    rec = flop_record(1e22, "V100")
    est = gpu_hours_method2(rec, bundled_ctx.catalog, 0.27, bundled_ctx.preferences)
    preferred = bundled_ctx.card("NVIDIA Tesla V100 SXM2 16 GB")
    assert est.value.ref == pytest.approx(1e22 / (preferred.peak(Precision.TENSOR) * 0.27 * 3600))
    assert est.value.low < est.value.high
    assert est.value.low <= est.value.ref <= est.value.high


def test_method2_errors(bundled_ctx):
    with pytest.raises(EstimationError, match="unknown card"):
        gpu_hours_method2(flop_record(query="Cerebras CS-2"), bundled_ctx.catalog)
    with pytest.raises(NotApplicable):
        gpu_hours_method2(flop_record(flop=None), bundled_ctx.catalog)
    no_peak = replace(make_card(), peak_compute={})
    with pytest.raises(EstimationError, match="no peak compute"):
        gpu_hours_method2(flop_record(), [no_peak])
    with pytest.raises(ValueError):
        gpu_hours_method2(flop_record(), [make_card()], ratio=0.0)


# -- anomalies and calibration ----------------------------------------------------


def test_anomaly_rule_examples():
    flags = detect_anomalies([(100.0, 120.0), (100.0, 27.0), (100.0, 9.0), (100.0, 10.0), (100.0, 100.0)])
    assert [c.anomaly for c in flags] == [True, False, True, False, False]
    with pytest.raises(ValueError):
        detect_anomalies([(0.0, 1.0)])


def test_bundled_pairs_anomalies():
    pairs = default_pairs()
    flagged = [c.name for c in detect_anomalies(pairs) if c.anomaly]
    assert len(pairs) == 119 and len(flagged) == 19
    assert all(name.startswith("outlier-") for name in flagged)


def test_bundled_calibration():
    result = calibrate(default_pairs())
    assert result.n_obs == 100 and result.f_dof == (1, 98)
    assert result.slope == pytest.approx(1.0, abs=0.02)
    assert result.intercept == pytest.approx(1.3, abs=0.05)
    assert result.adj_r2 == pytest.approx(0.98, abs=0.01)
    assert result.f_stat == pytest.approx(6525, rel=0.01)
    assert result.implied_ratio == pytest.approx(0.27, abs=0.01)
    assert result.bp_p > 0.05 and len(result.anomalies) == 19


def test_noiseless_line():
    x = np.exp(np.linspace(2, 14, 30))
    pairs = [(h2 * math.exp(1.309), h2) for h2 in x]
    result = calibrate(pairs, screen=False)
    assert result.slope == pytest.approx(1.0, abs=1e-12)
    assert result.intercept == pytest.approx(1.309, abs=1e-10)
    assert result.implied_ratio == pytest.approx(0.270, abs=5e-4)
    assert abs(result.r2 - 1.0) <= 1e-12


def test_heteroscedastic_pairs_detected():
    rng = np.random.default_rng(17)
    x = rng.uniform(4, 16, 150)
    y = x + 1.3 + rng.normal(size=150) * 0.03 * x
    result = calibrate(list(zip(np.exp(y), np.exp(x))), screen=False)
    assert result.bp_p < 0.05


def test_screening_composition():
    pairs = default_pairs()
    screened = calibrate(pairs)
    kept = [p for p, c in zip(pairs, detect_anomalies(pairs)) if not c.anomaly]
    direct = calibrate(kept, screen=False)
    assert (screened.slope, screened.intercept, screened.f_stat) == (direct.slope, direct.intercept, direct.f_stat)


def test_calibration_errors():
    bad = [PairedEstimate(f"p{i}", 100.0, 200.0 + i) for i in range(10)]
    with pytest.raises(CalibrationError, match="no observations after filtering"):
        calibrate(bad)
    with pytest.raises(CalibrationError):
        calibrate([(100.0, 30.0), (200.0, 60.0)])


def test_no_ratio_when_slope_far_from_one():
    x = np.exp(np.linspace(2, 12, 20))
    result = calibrate([(h ** 1.5, h) for h in x], screen=False)
    assert result.implied_ratio is None and result.warnings
    assert result.intercept_ratio == pytest.approx(math.exp(-result.intercept))


def test_coefficients_within_three_se():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.uniform(3, 15, 60)
        y = 0.95 * x + 1.5 + rng.normal(0, 0.4, 60)
        r = calibrate(list(zip(np.exp(y), np.exp(x))), screen=False)
        hits += abs(r.slope - 0.95) <= 3 * r.slope_se and abs(r.intercept - 1.5) <= 3 * r.intercept_se
    assert hits >= 95


# -- footprints -------------------------------------------------------------------


def test_gpt4_footprint(bundled_ctx):
    fp = estimate_footprint(GPT4, bundled_ctx)
    total = fp.impacts.total
    assert fp.gpu_hours.value.ref == 57e6 and fp.pue == 1.2
    assert total.energy.ref == pytest.approx(32.8e6, rel=0.05)
    assert total.gwp.ref == pytest.approx(15e6, rel=0.10)
    assert total.adpe.ref == pytest.approx(300, rel=0.10)
    assert fp.impacts.embodied.gwp.ref == pytest.approx(3.3e6, rel=0.10)
    assert fp.impacts.embodied.energy.ref == 0.0
    assert "method=GPU-h1" in fp.provenance and "countries=US" in fp.provenance


def test_method1_preferred_over_method2(bundled_ctx):
    fp = estimate_footprint(GPT4, bundled_ctx)
    assert fp.gpu_hours.method is Method.GPU_H1
    fp2 = estimate_footprint(replace(GPT4, card_count=None), bundled_ctx)
    assert fp2.gpu_hours.method is Method.GPU_H2
    assert "ratio=0.27" in fp2.provenance


def test_family_query_gives_intervals(bundled_ctx):
    fp = estimate_footprint(replace(GPT4, card_query="A100"), bundled_ctx)
    exact = estimate_footprint(GPT4, bundled_ctx)
    assert fp.card == "NVIDIA A100 SXM4 40 GB"
    assert fp.impacts.total.gwp.ref == exact.impacts.total.gwp.ref
    assert fp.impacts.total.gwp.low < fp.impacts.total.gwp.high
    assert "card-alternatives=3" in fp.provenance


def test_country_interval(bundled_ctx):
    fp = estimate_footprint(replace(GPT4, countries=("US", "FR")), bundled_ctx)
    usage = fp.impacts.usage.gwp
    assert usage.low < usage.ref == usage.high


def test_estimation_failures(bundled_ctx):
    cases = [
        replace(GPT4, estimable=False),
        replace(GPT4, card_query=None),
        replace(GPT4, countries=()),
        replace(GPT4, countries=("XX",)),
        replace(GPT4, card_query="Cerebras CS-2"),
        replace(GPT4, training_duration_h=None, training_flop=None),
    ]
    for rec in cases:
        with pytest.raises(EstimationError):
            estimate_footprint(rec, bundled_ctx)


_CTX = EstimationContext.bundled()


@settings(max_examples=30, deadline=None)
@given(st.floats(min_value=1.0, max_value=1e5), st.floats(min_value=1.01, max_value=10.0))
def test_footprint_monotone_in_hours(hours, k):
    ctx = _CTX
    a = estimate_footprint(replace(GPT4, training_duration_h=hours, card_count=1), ctx).impacts.total
    b = estimate_footprint(replace(GPT4, training_duration_h=hours * k, card_count=1), ctx).impacts.total
    assert b.energy.ref > a.energy.ref and b.gwp.ref > a.gwp.ref and b.adpe.ref > a.adpe.ref


def test_embodied_share_stats(bundled_run):
    footprints, _ = bundled_run
    stats = embodied_share_stats(footprints)
    assert stats["adpe"].min >= 0.89
    assert 0.18 <= stats["gwp"].median <= 0.28
    for summary in stats.values():
        assert summary.min <= summary.q1 <= summary.median <= summary.q3 <= summary.max


def test_six_number_summary_examples():
    assert six_number_summary([0.3]).as_tuple() == (0.3,) * 6
    s = six_number_summary([0.1, 0.2, 0.3, 0.4, 0.5])
    assert s.median == pytest.approx(0.3) and s.mean == pytest.approx(0.3)
    with pytest.raises(ValueError):
        six_number_summary([])


def test_bundled_corpus_coverage(bundled_run, bundled_records):
    footprints, skipped = bundled_run
    assert len(footprints) + len(skipped) == len(bundled_records)
    assert len(footprints) >= 60
    assert [(f.release_date, f.system) for f in footprints] == sorted((f.release_date, f.system) for f in footprints)


def test_load_systems_errors(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("name,release_date\nfoo,2020-01-01\n")
    with pytest.raises(DataError):
        load_systems(p)


def test_confidence_enum_roundtrip():
    assert Confidence("confident") is Confidence.CONFIDENT
