"""Delimited-text reading and deterministic writing."""

from __future__ import annotations

import csv
import json
import math
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence, Union

PathLike = Union[str, Path]


class DataError(Exception):
    """Input data does not match its documented schema."""


def bundled_path(name: str) -> Path:
    """Path of a data file shipped inside the package."""
    return Path(str(resources.files("mltrain_lca") / "data" / name))


def read_rows(path: PathLike, required: Sequence[str]) -> list[dict[str, str]]:
    """Read a header-row CSV file, checking that every required column exists.

    Cells are stripped of surrounding whitespace.  Each returned row carries a
    ``__row__`` key with its 1-based line number in the file (header is line 1).
    """
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            missing = [c for c in required if c not in header]
            if missing:
                raise DataError(f"{path}: missing column(s) {', '.join(missing)}")
            rows = []
            for lineno, raw in enumerate(reader, start=2):
                row = {k: (v or "").strip() for k, v in raw.items() if k is not None}
                row["__row__"] = str(lineno)
                rows.append(row)
            return rows
    except FileNotFoundError:
        raise DataError(f"{path}: file not found") from None
    except UnicodeDecodeError as exc:
        raise DataError(f"{path}: not valid UTF-8 ({exc})") from None


def cell_error(path: PathLike, row: Mapping[str, str], column: str, message: str) -> DataError:
    return DataError(f"{path}: row {row.get('__row__', '?')}, column {column!r}: {message}")


def parse_float(path: PathLike, row: Mapping[str, str], column: str, *, optional: bool = False):
    text = row.get(column, "")
    if text == "":
        if optional:
            return None
        raise cell_error(path, row, column, "value required")
    try:
        value = float(text)
    except ValueError:
        raise cell_error(path, row, column, f"not a number: {text!r}") from None
    if not math.isfinite(value):
        raise cell_error(path, row, column, f"not finite: {text!r}")
    return value


def parse_date(path: PathLike, row: Mapping[str, str], column: str) -> date:
    text = row.get(column, "")
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise cell_error(path, row, column, f"not an ISO-8601 date: {text!r}") from None


def parse_bool(path: PathLike, row: Mapping[str, str], column: str, default: bool = True) -> bool:
    text = row.get(column, "").lower()
    if text == "":
        return default
    if text in ("true", "1", "yes", "y"):
        return True
    if text in ("false", "0", "no", "n"):
        return False
    raise cell_error(path, row, column, f"not a boolean: {text!r}")


def fmt(value) -> str:
    """Render a cell with 6 significant digits; blanks for missing values."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        if value == 0:
            return "0"
        return f"{value:.6g}"
    if isinstance(value, date):
        return value.isoformat()
    return str(value)


def _json_value(value):
    if isinstance(value, float):
        if math.isnan(value) or math.isinf(value):
            return None
        return float(f"{value:.6g}")
    if isinstance(value, date):
        return value.isoformat()
    return value


def write_table(
    path: PathLike, columns: Sequence[str], rows: Iterable[Mapping[str, object]], fmt_name: str = "csv"
) -> Path:
    """Write rows to ``path`` (suffix replaced per format). Returns the written path."""
    path = Path(path)
    rows = list(rows)
    if fmt_name == "json":
        path = path.with_suffix(".json")
        payload = [{c: _json_value(r.get(c)) for c in columns} for r in rows]
        path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
        return path
    path = path.with_suffix(".csv")
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for r in rows:
            writer.writerow([fmt(r.get(c)) for c in columns])
    return path
