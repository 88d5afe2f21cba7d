import json
from datetime import date

import pytest

from mltrain_lca.tables import DataError, fmt, parse_float, read_rows, write_table


@pytest.mark.parametrize(
    "value, text",
    [
        (None, ""),
        (float("nan"), ""),
        (0.0, "0"),
        (1234567.0, "1.23457e+06"),
        (0.2, "0.2"),
        (True, "true"),
        (date(2023, 3, 14), "2023-03-14"),
        (7, "7"),
        ("A100", "A100"),
    ],
)
def test_fmt(value, text):
    assert fmt(value) == text


def test_missing_column_names_file(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError, match="x.csv"):
        read_rows(p, ("a", "c"))


def test_bad_number_names_row_and_column(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a\nfoo\n")
    row = read_rows(p, ("a",))[0]
    with pytest.raises(DataError, match=r"row 2.*'a'|row 2.*a"):
        parse_float(p, row, "a")


def test_write_table_formats(tmp_path):
    rows = [{"a": 1.0 / 3.0, "b": None}]
    p = write_table(tmp_path / "t", ("a", "b"), rows, "csv")
    assert p.suffix == ".csv"
    assert p.read_text() == "a,b\n0.333333,\n"
    j = write_table(tmp_path / "t", ("a", "b"), rows, "json")
    assert json.loads(j.read_text()) == [{"a": 0.333333, "b": None}]
