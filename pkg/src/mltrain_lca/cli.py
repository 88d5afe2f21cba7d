"""Command-line entry point: ``mltrain-lca <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import logging
import re
import sys
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .analysis import (
    GROUP_ORDER,
    INDICATORS,
    Scenario,
    TrendFit,
    apply_scenario,
    fit_trend,
    modality_group,
    scenario_factor,
    series,
)
from .estimator import (
    DEFAULT_RATIO,
    CalibrationError,
    EstimationContext,
    TrainingFootprint,
    calibrate,
    detect_anomalies,
    estimate_all,
    load_pairs,
    load_systems,
)
from .hardware import (
    Precision,
    Vendor,
    compute_efficiency,
    default_catalog,
    default_preferences,
    die_area_estimate,
    ingest_catalog,
    load_cards,
    load_overrides,
    load_preferences,
    merge_cards,
    write_cards,
    write_conflicts,
)
from .intervals import Interval
from .lca import (
    ImpactVector,
    card_production_impact,
    default_factors,
    default_mixes,
    default_server_configs,
    fractional_year,
    load_factors,
    load_mixes,
    load_server_configs,
)
from .regression import DegenerateRegressorError
from .tables import DataError, bundled_path, fmt, write_table

logger = logging.getLogger("mltrain_lca")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

PHASES = ("embodied", "usage", "infrastructure", "total")
INDICATOR_COLUMNS = {"energy": "energy_kwh", "gwp": "gwp_kgco2eq", "adpe": "adpe_kgsbeq"}
BOUNDS = ("low", "ref", "high")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits 2 by default; 2 is reserved for data errors
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- option helpers --------------------------------------------------------------


def _fraction(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (0 <= value < 1):
        raise argparse.ArgumentTypeError(f"must be in [0, 1): {text!r}")
    return value


def _ratio(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not (0 < value <= 1):
        raise argparse.ArgumentTypeError(f"must be in (0, 1]: {text!r}")
    return value


def _iso_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _existing(path: Optional[str]) -> Optional[Path]:
    if path is None:
        return None
    p = Path(path)
    if not p.is_file():
        raise DataError(f"{path}: file not found")
    return p


def _add_catalog_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--cards", nargs="+", metavar="PATH", help="card file, or primary and secondary card files")
    p.add_argument("--overrides", metavar="PATH", help="datasheet overrides (id, field_name, value)")


def _add_context_options(p: argparse.ArgumentParser) -> None:
    _add_catalog_options(p)
    p.add_argument("--preferences", metavar="PATH", help="card-family preference table (family, preferred_id)")
    p.add_argument("--models", metavar="PATH", help="ML-systems file (default: bundled corpus)")
    p.add_argument("--factors", metavar="PATH", help="impact factors file")
    p.add_argument("--mixes", metavar="PATH", help="electricity mixes file")
    p.add_argument("--servers", metavar="PATH", help="server configuration file")
    p.add_argument("--ratio", type=_ratio, default=DEFAULT_RATIO, help="sustained/peak performance ratio (default 0.27)")


def _add_output_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", metavar="DIR", default=".", help="output directory (default: current directory)")


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _catalog(args):
    paths = args.cards
    overrides_path = _existing(args.overrides)
    if not paths:
        if overrides_path is None:
            return default_catalog(), []
        paths = [str(bundled_path("cards_primary.csv")), str(bundled_path("cards_secondary.csv"))]
    if len(paths) > 2:
        raise UsageError("--cards takes one or two files")
    files = [_existing(p) for p in paths]
    if len(files) == 2:
        return ingest_catalog(files[0], files[1], overrides_path)
    overrides = load_overrides(overrides_path) if overrides_path else {}
    return merge_cards(load_cards(files[0]), [], overrides)


def _context(args) -> EstimationContext:
    catalog, _ = _catalog(args)
    return EstimationContext(
        catalog=catalog,
        factors=load_factors(_existing(args.factors)) if args.factors else default_factors(),
        mixes=load_mixes(_existing(args.mixes)) if args.mixes else default_mixes(),
        servers=load_server_configs(_existing(args.servers)) if args.servers else default_server_configs(),
        preferences=load_preferences(_existing(args.preferences)) if args.preferences else default_preferences(),
        ratio=args.ratio,
    )


def _records(args):
    path = _existing(args.models) if args.models else bundled_path("ml_systems.csv")
    records = load_systems(path)
    if not records:
        raise DataError(f"{path}: empty input, no ML-system records")
    return records


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-") or "model"


# -- row builders ----------------------------------------------------------------


def _bounds(prefix: str, value) -> dict:
    iv = value if isinstance(value, Interval) else Interval.point(float(value))
    return {f"{prefix}_{b}": getattr(iv, b) for b in BOUNDS}


FOOTPRINT_COLUMNS = (
    ("system", "release_date", "modality", "card", "method", "performance_ratio", "precision")
    + tuple(f"gpu_hours_{b}" for b in BOUNDS)
    + tuple(f"{ph}_{INDICATOR_COLUMNS[ind]}_{b}" for ph in PHASES for ind in INDICATORS for b in BOUNDS)
    + ("embodied_share_gwp", "embodied_share_adpe", "pue", "countries", "provenance")
)


def footprint_row(f: TrainingFootprint) -> dict:
    row = {
        "system": f.system,
        "release_date": f.release_date,
        "modality": f.modality.value,
        "card": f.card,
        "method": f.gpu_hours.method.value,
        "performance_ratio": f.gpu_hours.performance_ratio_used,
        "precision": f.gpu_hours.precision.value if f.gpu_hours.precision else None,
        "embodied_share_gwp": f.embodied_share_gwp,
        "embodied_share_adpe": f.embodied_share_adpe,
        "pue": f.pue,
        "countries": ";".join(f.countries),
        "provenance": "|".join(f.provenance),
    }
    row.update(_bounds("gpu_hours", f.gpu_hours.value))
    for ph in PHASES:
        vec: ImpactVector = getattr(f.impacts, ph)
        for ind in INDICATORS:
            row.update(_bounds(f"{ph}_{INDICATOR_COLUMNS[ind]}", getattr(vec, ind)))
    return row


REPORT_COLUMNS = ("system", "phase") + tuple(
    f"{INDICATOR_COLUMNS[ind]}_{b}" for ind in INDICATORS for b in BOUNDS
) + ("provenance",)


def report_rows(f: TrainingFootprint) -> list[dict]:
    rows = []
    for ph in PHASES:
        vec = getattr(f.impacts, ph)
        row = {"system": f.system, "phase": ph, "provenance": "|".join(f.provenance)}
        for ind in INDICATORS:
            row.update(_bounds(INDICATOR_COLUMNS[ind], getattr(vec, ind)))
        rows.append(row)
    return rows


def _report_text(f: TrainingFootprint) -> str:
    lines = [
        f"{f.system} ({f.release_date.isoformat()}), {f.card}, {fmt(f.gpu_hours.value.ref)} GPU-h "
        f"[{f.gpu_hours.method.value}], PUE {fmt(f.pue)}, mix {';'.join(f.countries)}",
        f"{'phase':<16}{'energy (GWh)':>14}{'GWP (ktCO2eq)':>16}{'ADPe (kgSbeq)':>16}",
    ]
    for ph in PHASES:
        vec = getattr(f.impacts, ph)
        energy = "-" if ph == "embodied" else fmt(vec.energy.ref / 1e6)
        lines.append(f"{ph:<16}{energy:>14}{fmt(vec.gwp.ref / 1e6):>16}{fmt(vec.adpe.ref):>16}")
    lines.append(f"embodied share: GWP {fmt(f.embodied_share_gwp)}, ADPe {fmt(f.embodied_share_adpe)}")
    return "\n".join(lines)


TREND_COLUMNS = (
    "group",
    "indicator",
    "status",
    "n_obs",
    "slope_per_year",
    "slope_se",
    "intercept",
    "t_stat",
    "p_value",
    "r2",
    "doubling_time_years",
)


def trend_row(group: str, indicator: str, fit: Optional[TrendFit], n: int) -> dict:
    row = {"group": group, "indicator": indicator, "n_obs": n}
    if fit is None:
        row["status"] = "insufficient-data"
        return row
    row.update(
        status="ok",
        slope_per_year=fit.slope,
        slope_se=fit.slope_se,
        intercept=fit.intercept,
        t_stat=fit.t_stat,
        p_value=fit.p_value,
        r2=fit.fit.r2,
        doubling_time_years=fit.doubling_time_years,
    )
    return row


def _grouped(footprints: Sequence[TrainingFootprint]) -> list[tuple[str, list[TrainingFootprint]]]:
    groups = [("all", list(footprints))]
    for name in GROUP_ORDER:
        members = [f for f in footprints if modality_group(f.modality) == name]
        if members:
            groups.append((name, members))
    return groups


def _safe_fit(members: Sequence[TrainingFootprint], indicator: str) -> Optional[TrendFit]:
    if len(members) < 3:
        return None
    try:
        return fit_trend(series(members, indicator))
    except DegenerateRegressorError:
        return None


# -- commands --------------------------------------------------------------------


def cmd_cards(args) -> int:
    out = _out_dir(args)
    cards, conflicts = _catalog(args)
    if args.action == "import":
        p1 = write_cards(out / "cards", cards, args.format)
        p2 = write_conflicts(out / "card_conflicts", conflicts, args.format)
        unresolved = sum(c.resolution.value == "unresolved" for c in conflicts)
        print(f"{len(cards)} cards, {len(conflicts)} conflicts ({unresolved} unresolved)")
        print(p1)
        print(p2)
        return EXIT_OK

    factors = load_factors(_existing(args.factors)) if args.factors else default_factors()
    precision = Precision(args.precision)
    rows = []
    for card in sorted(cards, key=lambda c: (c.release_date, c.id)):
        impact = card_production_impact(card, factors, cards)
        area, estimated = die_area_estimate(card, cards)
        rows.append(
            {
                "id": card.id,
                "vendor": card.vendor.value,
                "release_date": card.release_date,
                "die_area_mm2": area,
                "die_area_estimated": estimated,
                "memory_gb": card.memory_size,
                "tdp_w": card.tdp,
                "gwp_kgco2eq": impact.gwp,
                "adpe_kgsbeq": impact.adpe,
                "precision": precision.value,
                "efficiency_flops_per_w": compute_efficiency(card, precision),
            }
        )
    columns = (
        "id",
        "vendor",
        "release_date",
        "die_area_mm2",
        "die_area_estimated",
        "memory_gb",
        "tdp_w",
        "gwp_kgco2eq",
        "adpe_kgsbeq",
        "precision",
        "efficiency_flops_per_w",
    )
    p1 = write_table(out / "card_impacts", columns, rows, args.format)

    # trends over the selected vendor class; non-positive or missing values are left out
    vendor = Vendor(args.vendor)
    trend_rows = []
    for name, column in (("gwp", "gwp_kgco2eq"), ("adpe", "adpe_kgsbeq"), ("efficiency", "efficiency_flops_per_w")):
        pts = [(r["release_date"], r[column]) for r in rows if r["vendor"] == vendor.value and (r[column] or 0) > 0]
        fit = None
        if len(pts) >= 3:
            try:
                fit = fit_trend(pts)
            except DegenerateRegressorError:
                fit = None
        trend_rows.append(trend_row(vendor.value, name, fit, len(pts)))
    p2 = write_table(out / "card_trends", TREND_COLUMNS, trend_rows, args.format)
    print(f"{len(rows)} cards")
    print(p1)
    print(p2)
    return EXIT_OK


def _estimate(args):
    ctx = _context(args)
    records = _records(args)
    footprints, skipped = estimate_all(records, ctx)
    return records, footprints, skipped


def cmd_estimate(args) -> int:
    out = _out_dir(args)
    records, footprints, skipped = _estimate(args)
    p1 = write_table(out / "footprints", FOOTPRINT_COLUMNS, (footprint_row(f) for f in footprints), args.format)
    p2 = write_table(
        out / "skipped", ("system", "reason"), ({"system": n, "reason": r} for n, r in skipped), args.format
    )
    print(f"estimated {len(footprints)} of {len(records)} records")
    print(p1)
    print(p2)
    for name in args.report or ():
        found = [f for f in footprints if f.system == name]
        if not found:
            print(f"no footprint for {name!r}", file=sys.stderr)
            continue
        print(write_table(out / f"report_{_slug(name)}", REPORT_COLUMNS, report_rows(found[0]), args.format))
    if not footprints:
        print("error: no record could be estimated", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_report(args) -> int:
    records = _records(args)
    chosen = [r for r in records if r.name == args.name]
    if not chosen:
        raise DataError(f"no record named {args.name!r}")
    ctx = _context(args)
    footprints, skipped = estimate_all(chosen, ctx)
    if not footprints:
        raise DataError(f"{args.name}: {skipped[0][1]}")
    f = footprints[0]
    print(_report_text(f))
    if args.out is not None:
        print(write_table(_out_dir(args) / f"report_{_slug(f.system)}", REPORT_COLUMNS, report_rows(f), args.format))
    return EXIT_OK


CALIBRATION_COLUMNS = (
    "n_obs",
    "n_anomalies",
    "slope",
    "slope_se",
    "intercept",
    "intercept_se",
    "r2",
    "adj_r2",
    "f_stat",
    "f_df_num",
    "f_df_den",
    "f_p",
    "bp_stat",
    "bp_p",
    "dw_stat",
    "dw_p",
    "implied_ratio",
    "intercept_ratio",
    "warnings",
)


def cmd_calibrate(args) -> int:
    out = _out_dir(args)
    path = _existing(args.pairs) if args.pairs else bundled_path("gpu_hour_pairs.csv")
    pairs = load_pairs(path)
    if not pairs:
        raise DataError(f"{path}: empty input, no GPU-hour pairs")
    checks = detect_anomalies(pairs)
    try:
        result = calibrate(pairs, screen=not args.no_screen)
    except CalibrationError as exc:
        raise DataError(str(exc)) from None
    row = {c: getattr(result, c, None) for c in CALIBRATION_COLUMNS}
    row.update(
        n_anomalies=len(result.anomalies),
        f_df_num=result.f_dof[0],
        f_df_den=result.f_dof[1],
        warnings="|".join(result.warnings),
    )
    p1 = write_table(out / "calibration", CALIBRATION_COLUMNS, [row], args.format)
    p2 = write_table(
        out / "anomalies",
        ("name", "ratio", "anomaly"),
        ({"name": c.name, "ratio": c.ratio, "anomaly": c.anomaly} for c in checks),
        args.format,
    )
    implied = "n/a" if result.implied_ratio is None else fmt(result.implied_ratio)
    print(
        f"n={result.n_obs} (anomalies excluded: {len(result.anomalies)}) slope={fmt(result.slope)} "
        f"intercept={fmt(result.intercept)} R2={fmt(result.r2)} F({result.f_dof[0]},{result.f_dof[1]})={fmt(result.f_stat)} "
        f"BP p={fmt(result.bp_p)} DW={fmt(result.dw_stat)} (p={fmt(result.dw_p)}) implied ratio={implied}"
    )
    print(p1)
    print(p2)
    return EXIT_OK


POINT_COLUMNS = (
    "group",
    "system",
    "release_date",
    "fractional_year",
    "modality",
    "value_low",
    "value_ref",
    "value_high",
    "predicted",
)


def cmd_trends(args) -> int:
    out = _out_dir(args)
    _, footprints, _ = _estimate(args)
    if not footprints:
        raise DataError("no record could be estimated")
    rows, points = [], []
    for group, members in _grouped(footprints):
        fit = _safe_fit(members, args.indicator)
        rows.append(trend_row(group, args.indicator, fit, len(members)))
        for f, (when, value) in zip(members, series(members, args.indicator)):
            points.append(
                {
                    "group": group,
                    "system": f.system,
                    "release_date": when,
                    "fractional_year": fractional_year(when),
                    "modality": f.modality.value,
                    "value_low": value.low,
                    "value_ref": value.ref,
                    "value_high": value.high,
                    "predicted": fit.predict(when) if fit else None,
                }
            )
    p1 = write_table(out / "trends", TREND_COLUMNS, rows, args.format)
    p2 = write_table(out / "trend_points", POINT_COLUMNS, points, args.format)
    for r in rows:
        slope = "n/a" if r["status"] != "ok" else f"{fmt(r['slope_per_year'])}/yr p={fmt(r['p_value'])}"
        print(f"{r['group']:<11} n={r['n_obs']:<4} {slope}")
    print(p1)
    print(p2)
    return EXIT_OK


SCENARIO_COLUMNS = (
    "scenario",
    "annual_reduction",
    "start_year",
    "group",
    "n_obs",
    "baseline_slope",
    "baseline_p",
    "adjusted_slope",
    "adjusted_p",
    "slope_difference",
)

SCENARIO_POINT_COLUMNS = (
    "scenario",
    "group",
    "system",
    "release_date",
    "factor",
    "baseline_gwp_kgco2eq",
    "adjusted_gwp_kgco2eq_low",
    "adjusted_gwp_kgco2eq_ref",
    "adjusted_gwp_kgco2eq_high",
    "baseline_predicted",
    "adjusted_predicted",
)


def cmd_scenario(args) -> int:
    out = _out_dir(args)
    _, footprints, _ = _estimate(args)
    if args.since is not None:
        footprints = [f for f in footprints if f.release_date >= args.since]
    if not footprints:
        raise DataError("no record could be estimated")
    rows, points = [], []
    for reduction in args.scenario or [0.25]:
        sc = Scenario(f"reduction-{reduction:g}", reduction, args.start_year, fractional=args.fractional)
        adjusted_all = apply_scenario(footprints, sc)
        adjusted_by_name = {f.system: f for f in adjusted_all}
        for group, members in _grouped(footprints):
            adjusted = [adjusted_by_name[f.system] for f in members]
            base_fit = _safe_fit(members, "gwp")
            adj_fit = _safe_fit(adjusted, "gwp")
            row = {
                "scenario": sc.name,
                "annual_reduction": reduction,
                "start_year": sc.start_year,
                "group": group,
                "n_obs": len(members),
            }
            if base_fit and adj_fit:
                row.update(
                    baseline_slope=base_fit.slope,
                    baseline_p=base_fit.p_value,
                    adjusted_slope=adj_fit.slope,
                    adjusted_p=adj_fit.p_value,
                    slope_difference=adj_fit.slope - base_fit.slope,
                )
            rows.append(row)
            for f, a in zip(members, adjusted):
                points.append(
                    {
                        "scenario": sc.name,
                        "group": group,
                        "system": f.system,
                        "release_date": f.release_date,
                        "factor": scenario_factor(sc, f.release_date),
                        "baseline_gwp_kgco2eq": f.impacts.total.gwp.ref,
                        "adjusted_gwp_kgco2eq_low": a.impacts.total.gwp.low,
                        "adjusted_gwp_kgco2eq_ref": a.impacts.total.gwp.ref,
                        "adjusted_gwp_kgco2eq_high": a.impacts.total.gwp.high,
                        "baseline_predicted": base_fit.predict(f.release_date) if base_fit else None,
                        "adjusted_predicted": adj_fit.predict(f.release_date) if adj_fit else None,
                    }
                )
    p1 = write_table(out / "scenario_trends", SCENARIO_COLUMNS, rows, args.format)
    p2 = write_table(out / "scenario_points", SCENARIO_POINT_COLUMNS, points, args.format)
    for r in rows:
        if "baseline_slope" in r:
            print(
                f"{r['scenario']:<16} {r['group']:<11} baseline {fmt(r['baseline_slope'])}/yr (p={fmt(r['baseline_p'])}) "
                f"adjusted {fmt(r['adjusted_slope'])}/yr (p={fmt(r['adjusted_p'])})"
            )
        else:
            print(f"{r['scenario']:<16} {r['group']:<11} insufficient data (n={r['n_obs']})")
    print(p1)
    print(p2)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mltrain-lca", description="Life-cycle impacts of ML training runs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("cards", help="merge card databases or compute per-card production impacts")
    p.add_argument("action", choices=("import", "impact"))
    _add_catalog_options(p)
    p.add_argument("--factors", metavar="PATH", help="impact factors file")
    p.add_argument("--precision", choices=[x.value for x in Precision], default="single")
    p.add_argument("--vendor", choices=[v.value for v in Vendor], default="NVIDIA-workstation", help="class for trends")
    _add_output_options(p)
    p.set_defaults(func=cmd_cards)

    p = sub.add_parser("estimate", help="footprints for every estimable ML system")
    _add_context_options(p)
    p.add_argument("--report", action="append", metavar="NAME", help="also write a per-phase report for NAME")
    _add_output_options(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("report", help="per-phase impact table for one ML system")
    p.add_argument("name")
    _add_context_options(p)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", metavar="DIR", default=None, help="also write the table to DIR")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("calibrate", help="anomaly screen and log-log regression of GPU-hour estimates")
    p.add_argument("--pairs", metavar="PATH", help="paired estimates (name, gpu_h1, gpu_h2_base)")
    p.add_argument("--no-screen", action="store_true", help="keep pairs outside the ratio band")
    _add_output_options(p)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("trends", help="exponential trend fits overall and per modality")
    _add_context_options(p)
    p.add_argument("--indicator", choices=INDICATORS, default="gwp")
    _add_output_options(p)
    p.set_defaults(func=cmd_trends)

    p = sub.add_parser("scenario", help="GWP trends with carbon-intensity reduction scenarios")
    _add_context_options(p)
    p.add_argument(
        "--scenario", type=_fraction, action="append", metavar="FRACTION", help="annual reduction; repeatable"
    )
    p.add_argument("--start-year", type=int, default=2019)
    p.add_argument("--fractional", action="store_true", help="use fractional years elapsed instead of whole years")
    p.add_argument("--since", type=_iso_date, metavar="DATE", help="only systems released on or after DATE")
    _add_output_options(p)
    p.set_defaults(func=cmd_scenario)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"mltrain-lca: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError, ValueError, LookupError) as exc:
        message = exc.args[0] if isinstance(exc, LookupError) and exc.args else exc
        print(f"mltrain-lca: data error: {message}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
