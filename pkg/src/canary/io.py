"""Case-count CSV ingestion and emission, plus atomic file writes.

The input format is ``date,stratum,count`` with ISO-8601 days. Within each
stratum dates must be strictly increasing and, unless gaps are allowed,
consecutive.
"""

from __future__ import annotations

import csv
import datetime as dt
import io
import os
import tempfile
from collections import defaultdict
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .errors import CaseDataError

HEADER = ("date", "stratum", "count")


@dataclass(frozen=True)
class CaseSeries:
    rows: Tuple[Tuple[dt.date, str, int], ...]

    def __len__(self):
        return len(self.rows)

    def strata(self):
        seen = []
        for _, s, _ in self.rows:
            if s not in seen:
                seen.append(s)
        return seen

    def select(self, stratum):
        """Dates and counts of one stratum, in file order."""
        pick = [(d, c) for d, s, c in self.rows if s == stratum]
        if not pick:
            raise CaseDataError(f"no rows for stratum {stratum!r}", kind="invariant")
        dates = [d for d, _ in pick]
        return dates, np.array([c for _, c in pick], dtype=np.int64)


def _parse_row(lineno, rec):
    if len(rec) != 3:
        raise CaseDataError(f"row {lineno}: expected 3 columns, got {len(rec)}", rows=[lineno])
    raw_date, stratum, raw_count = (v.strip() for v in rec)
    try:
        day = dt.date.fromisoformat(raw_date)
    except ValueError:
        raise CaseDataError(f"row {lineno}, column date: not an ISO-8601 day: {raw_date!r}", rows=[lineno]) from None
    if not stratum:
        raise CaseDataError(f"row {lineno}, column stratum: empty label", rows=[lineno])
    try:
        count = int(raw_count)
    except ValueError:
        raise CaseDataError(f"row {lineno}, column count: not an integer: {raw_count!r}", rows=[lineno]) from None
    if count < 0:
        raise CaseDataError(f"row {lineno}, column count: negative count {count}", rows=[lineno])
    return day, stratum, count


def validate(rows, allow_gaps=False, linenos=None):
    """Raise :class:`CaseDataError` (kind ``invariant``) listing every offending row."""
    linenos = linenos or list(range(2, len(rows) + 2))
    last = {}
    seen = set()
    bad = []
    msgs = []
    for ln, (day, s, _) in zip(linenos, rows):
        if (day, s) in seen:
            bad.append(ln)
            msgs.append(f"row {ln}: duplicate ({day.isoformat()}, {s})")
            continue
        seen.add((day, s))
        prev = last.get(s)
        if prev is not None:
            if day <= prev:
                bad.append(ln)
                msgs.append(f"row {ln}: date {day.isoformat()} not after {prev.isoformat()} in stratum {s}")
                continue
            if not allow_gaps and (day - prev).days > 1:
                bad.append(ln)
                msgs.append(f"row {ln}: missing days between {prev.isoformat()} and {day.isoformat()} in stratum {s}")
        last[s] = day
    if bad:
        raise CaseDataError("; ".join(msgs), kind="invariant", rows=bad)


def parse_case_text(text, allow_gaps=False) -> CaseSeries:
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CaseDataError("empty file: expected header date,stratum,count") from None
    if tuple(h.strip().lstrip("﻿").lower() for h in header) != HEADER:
        raise CaseDataError(f"row 1: expected header date,stratum,count, got {','.join(header)}", rows=[1])
    rows, linenos = [], []
    for rec in reader:
        if not rec or all(not v.strip() for v in rec):
            continue
        ln = reader.line_num
        rows.append(_parse_row(ln, rec))
        linenos.append(ln)
    validate(rows, allow_gaps, linenos)
    return CaseSeries(tuple(rows))


def read_case_csv(path, allow_gaps=False) -> CaseSeries:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise CaseDataError(f"{path}: not UTF-8 ({exc.reason})") from None
    return parse_case_text(text, allow_gaps)


def format_case_csv(series: CaseSeries) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for day, s, c in series.rows:
        w.writerow([day.isoformat(), s, c])
    return buf.getvalue()


def write_case_csv(series: CaseSeries, path):
    atomic_write_text(path, format_case_csv(series))


def series_from_counts(counts, start, stratum) -> CaseSeries:
    """Daily series for one stratum starting on ``start`` (a date or ISO string)."""
    if isinstance(start, str):
        start = dt.date.fromisoformat(start)
    rows = tuple((start + dt.timedelta(days=i), stratum, int(c)) for i, c in enumerate(counts))
    validate(rows)
    return CaseSeries(rows)


def merge(*parts: CaseSeries) -> CaseSeries:
    rows = sorted((r for p in parts for r in p.rows), key=lambda r: (r[0], r[1]))
    validate(rows)
    return CaseSeries(tuple(rows))


def atomic_write_text(path, text):
    """Write via a temporary file in the target directory and rename over ``path``."""
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# --------------------------------------------------------------------------
# RIVM case-level export


def convert_rivm(path, date_column="Date_statistics", group_column="Agegroup", delimiter=";") -> CaseSeries:
    """Aggregate a case-level RIVM export (one row per case) to daily counts per group.

    Best effort: only the two named columns are used, and days without cases
    inside each group's observed range are filled with zeros.
    """
    counts: dict = defaultdict(lambda: defaultdict(int))
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        missing = [c for c in (date_column, group_column) if c not in (reader.fieldnames or [])]
        if missing:
            raise CaseDataError(f"row 1: missing column(s) {', '.join(missing)}", rows=[1])
        for rec in reader:
            raw = (rec.get(date_column) or "").strip()
            group = (rec.get(group_column) or "").strip()
            if not raw or not group:
                continue
            try:
                day = dt.date.fromisoformat(raw[:10])
            except ValueError:
                raise CaseDataError(
                    f"row {reader.line_num}, column {date_column}: not a date: {raw!r}", rows=[reader.line_num]
                ) from None
            counts[group][day] += 1
    rows: List[Tuple[dt.date, str, int]] = []
    for group, by_day in counts.items():
        first, last = min(by_day), max(by_day)
        for i in range((last - first).days + 1):
            day = first + dt.timedelta(days=i)
            rows.append((day, group, by_day.get(day, 0)))
    rows.sort(key=lambda r: (r[0], r[1]))
    return CaseSeries(tuple(rows))
