import datetime as dt

import numpy as np
import pytest

from canary.errors import CaseDataError
from canary.io import (
    atomic_write_text,
    convert_rivm,
    format_case_csv,
    merge,
    parse_case_text,
    read_case_csv,
    series_from_counts,
    write_case_csv,
)

GOOD = "date,stratum,count\n2020-06-01,20-29,3\n2020-06-02,20-29,5\n2020-06-03,20-29,0\n"


def test_well_formed_file():
    s = parse_case_text(GOOD)
    assert len(s) == 3
    dates, counts = s.select("20-29")
    assert dates[0] == dt.date(2020, 6, 1)
    assert list(counts) == [3, 5, 0]


def test_duplicate_row_is_invariant_violation():
    text = GOOD + "2020-06-03,20-29,1\n"
    with pytest.raises(CaseDataError) as exc:
        parse_case_text(text)
    assert exc.value.kind == "invariant"
    assert exc.value.rows == [5]
    assert "duplicate" in str(exc.value)


def test_negative_count_is_parse_error():
    with pytest.raises(CaseDataError) as exc:
        parse_case_text("date,stratum,count\n2020-06-01,a,-2\n")
    assert exc.value.kind == "parse"
    assert "row 2, column count" in str(exc.value)


@pytest.mark.parametrize(
    "body,needle",
    [
        ("2020-13-01,a,1\n", "column date"),
        ("2020-06-01,,1\n", "column stratum"),
        ("2020-06-01,a,1.5\n", "column count"),
        ("2020-06-01,a\n", "expected 3 columns"),
    ],
)
def test_parse_errors_name_row_and_column(body, needle):
    with pytest.raises(CaseDataError) as exc:
        parse_case_text("date,stratum,count\n" + body)
    assert needle in str(exc.value)


def test_bad_header():
    with pytest.raises(CaseDataError):
        parse_case_text("day,group,n\n2020-06-01,a,1\n")
    with pytest.raises(CaseDataError):
        parse_case_text("")


def test_gaps_and_order():
    gap = "date,stratum,count\n2020-06-01,a,1\n2020-06-03,a,1\n"
    with pytest.raises(CaseDataError, match="missing days"):
        parse_case_text(gap)
    assert len(parse_case_text(gap, allow_gaps=True)) == 2
    back = "date,stratum,count\n2020-06-02,a,1\n2020-06-01,a,1\n"
    with pytest.raises(CaseDataError, match="not after"):
        parse_case_text(back, allow_gaps=True)


def test_all_offending_rows_are_listed():
    text = "date,stratum,count\n2020-06-01,a,1\n2020-06-01,a,2\n2020-06-05,a,1\n"
    with pytest.raises(CaseDataError) as exc:
        parse_case_text(text)
    assert exc.value.rows == [3, 4]


def test_strata_interleaved():
    text = "date,stratum,count\n2020-06-01,a,1\n2020-06-01,b,7\n2020-06-02,a,2\n2020-06-02,b,8\n"
    s = parse_case_text(text)
    assert s.strata() == ["a", "b"]
    assert list(s.select("b")[1]) == [7, 8]
    with pytest.raises(CaseDataError):
        s.select("c")


def test_round_trip(tmp_path):
    s = merge(series_from_counts([1, 2, 3], "2020-06-01", "x"), series_from_counts([4, 5], "2020-06-02", "y"))
    path = tmp_path / "cases.csv"
    write_case_csv(s, path)
    assert read_case_csv(path) == s
    assert parse_case_text(format_case_csv(s)) == s


def test_atomic_write_replaces_and_leaves_no_temp(tmp_path):
    path = tmp_path / "out.json"
    atomic_write_text(path, "one")
    atomic_write_text(path, "two")
    assert path.read_text() == "two"
    assert [p.name for p in tmp_path.iterdir()] == ["out.json"]


def test_convert_rivm(tmp_path):
    src = tmp_path / "rivm.csv"
    src.write_text(
        "Date_file;Date_statistics;Agegroup;Sex\n"
        "x;2020-06-01;20-29;M\n"
        "x;2020-06-01;20-29;F\n"
        "x;2020-06-03;20-29;F\n"
        "x;2020-06-02;60-69;M\n",
        encoding="utf-8",
    )
    s = convert_rivm(src)
    dates, counts = s.select("20-29")
    assert list(counts) == [2, 0, 1]
    assert dates[-1] == dt.date(2020, 6, 3)
    assert list(s.select("60-69")[1]) == [1]
    bad = tmp_path / "bad.csv"
    bad.write_text("a;b\n1;2\n")
    with pytest.raises(CaseDataError, match="missing column"):
        convert_rivm(bad)
