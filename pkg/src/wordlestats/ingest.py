"""Daily-results file parsing and cleaning.

The results file has one row per contest day with the reported-results count,
the hard-mode count and the seven try percentages (1..6 tries, X).
"""
from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field, replace
from datetime import date, datetime
from pathlib import Path
from statistics import median

COLUMNS = (
    "Date",
    "Contest number",
    "Word",
    "Number of reported results",
    "Number in hard mode",
    "1 try",
    "2 tries",
    "3 tries",
    "4 tries",
    "5 tries",
    "6 tries",
    "7 or more tries (X)",
)
TRY_FIELDS = ("p1", "p2", "p3", "p4", "p5", "p6", "px")
COUNT_FIELDS = ("reported_results", "hard_mode_count")

_WORD_RE = re.compile(r"^[a-z]{5}$")
_DATE_FORMATS = ("%Y-%m-%d", "%m-%d-%Y", "%m/%d/%Y", "%Y/%m/%d")


class ParseError(ValueError):
    """Raised for malformed results files; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class EmptyAfterCleaning(ValueError):
    pass


@dataclass(frozen=True)
class TryDistribution:
    p1: float
    p2: float
    p3: float
    p4: float
    p5: float
    p6: float
    px: float

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, f) for f in TRY_FIELDS)

    @classmethod
    def from_sequence(cls, values) -> "TryDistribution":
        values = [float(v) for v in values]
        if len(values) != 7:
            raise ValueError(f"expected 7 try percentages, got {len(values)}")
        return cls(*values)

    @property
    def total(self) -> float:
        return sum(self.as_tuple())

    def normalized(self) -> "TryDistribution":
        s = self.total
        if s <= 0:
            raise ValueError("cannot normalize a distribution with non-positive sum")
        return TryDistribution(*(100.0 * v / s for v in self.as_tuple()))

    def expected_tries(self) -> float:
        """Mean number of tries with the X bucket counted as 7."""
        vals = self.as_tuple()
        return sum((i + 1) * v for i, v in enumerate(vals)) / sum(vals)


@dataclass(frozen=True)
class DailyRecord:
    date: date
    contest_number: int
    word: str
    reported_results: int
    hard_mode_count: int
    tries: TryDistribution


@dataclass
class CleaningReport:
    dropped_bad_word: list[tuple[date, str]] = field(default_factory=list)
    dropped_bad_sum: list[tuple[date, float]] = field(default_factory=list)
    dropped_inconsistent: list[tuple[date, str]] = field(default_factory=list)
    repaired_counts: list[tuple[date, str, int, int]] = field(default_factory=list)
    normalized_rows: int = 0
    input_rows: int = 0
    kept_rows: int = 0

    @property
    def dropped_rows(self) -> int:
        return len(self.dropped_bad_word) + len(self.dropped_bad_sum) + len(self.dropped_inconsistent)

    @property
    def repaired_rows(self) -> int:
        return len({d for d, *_ in self.repaired_counts})

    def entries(self) -> list[dict]:
        """One dict per cleaning action, in a stable order."""
        out = []
        for d, w in self.dropped_bad_word:
            out.append({"action": "drop_bad_word", "date": d.isoformat(), "word": w})
        for d, s in self.dropped_bad_sum:
            out.append({"action": "drop_bad_sum", "date": d.isoformat(), "raw_sum": s})
        for d, why in self.dropped_inconsistent:
            out.append({"action": "drop_inconsistent", "date": d.isoformat(), "reason": why})
        for d, col, old, new in self.repaired_counts:
            out.append({"action": "repair_count", "date": d.isoformat(), "column": col,
                        "old": old, "new": new})
        out.append({"action": "summary", "input_rows": self.input_rows, "kept_rows": self.kept_rows,
                    "dropped_rows": self.dropped_rows, "repaired_rows": self.repaired_rows,
                    "normalized_rows": self.normalized_rows})
        return out

    def write(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.entries():
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


def parse_date(text: str) -> date:
    text = text.strip()
    for fmt in _DATE_FORMATS:
        try:
            return datetime.strptime(text, fmt).date()
        except ValueError:
            continue
    raise ValueError(f"unrecognized date {text!r}")


def _norm_header(name: str) -> str:
    return " ".join(name.strip().lower().split())


def _parse_count(text: str) -> int:
    value = float(text.replace(",", "").strip())
    if value != int(value) or value < 0:
        raise ValueError(f"not a non-negative integer count: {text!r}")
    return int(value)


def parse_results_file(path: str | Path) -> list[DailyRecord]:
    """Read a delimited results file into raw records, in file order.

    The delimiter (comma, tab or semicolon) is sniffed from the header line.
    Percentages are kept exactly as read; words are lowercased and stripped
    but not validated.
    """
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"results file not found: {path}")
    text = path.read_text(encoding="utf-8-sig")
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise ParseError("missing header row", line=1)
    delimiter = max("\t,;", key=lines[0].count)
    reader = csv.reader(lines, delimiter=delimiter)
    header = [_norm_header(h) for h in next(reader)]
    wanted = [_norm_header(c) for c in COLUMNS]
    missing = [c for c, w in zip(COLUMNS, wanted) if w not in header]
    if missing:
        raise ParseError(f"missing column(s): {', '.join(missing)}", line=1)
    index = [header.index(w) for w in wanted]

    records = []
    for lineno, row in enumerate(reader, start=2):
        if not any(cell.strip() for cell in row):
            continue
        try:
            cells = [row[i] for i in index]
            records.append(DailyRecord(
                date=parse_date(cells[0]),
                contest_number=_parse_count(cells[1]),
                word=cells[2].strip().lower(),
                reported_results=_parse_count(cells[3]),
                hard_mode_count=_parse_count(cells[4]),
                tries=TryDistribution.from_sequence(float(c) for c in cells[5:12]),
            ))
        except (ValueError, IndexError) as exc:
            raise ParseError(str(exc) or "short row", line=lineno) from exc
    return records


def write_results_file(records, path: str | Path) -> None:
    """Write records back out in the input schema (ISO dates, exact floats)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(COLUMNS)
        for r in records:
            writer.writerow([r.date.isoformat(), r.contest_number, r.word, r.reported_results,
                             r.hard_mode_count, *(repr(v) for v in r.tries.as_tuple())])


def _flag_outliers(records: list[DailyRecord], column: str, window: int,
                   ratio: float) -> list[bool]:
    values = [getattr(r, column) for r in records]
    flags = []
    for i, r in enumerate(records):
        neigh = [values[j] for j, o in enumerate(records)
                 if j != i and abs((o.date - r.date).days) <= window]
        flags.append(bool(neigh) and values[i] < ratio * median(neigh))
    return flags


def clean_records(raw: list[DailyRecord], neighbor_window: int = 3,
                  sum_drop_tolerance: float = 10.0,
                  outlier_ratio: float = 0.2) -> tuple[list[DailyRecord], CleaningReport]:
    """Apply the word, count-outlier and percentage-sum repairs.

    Rows are dropped if the word is not five letters a-z or if the raw try
    percentages miss 100 by more than `sum_drop_tolerance`. A count below
    `outlier_ratio` times the median of the counts within +-`neighbor_window`
    days is replaced by the rounded mean of the unflagged neighbours. The
    surviving try distributions are rescaled to sum to 100. Output is sorted
    by date.
    """
    if not raw:
        raise ValueError("no records to clean")
    if neighbor_window < 1:
        raise ValueError("neighbor_window must be >= 1")
    report = CleaningReport(input_rows=len(raw))

    rows = []
    for r in raw:
        if not _WORD_RE.match(r.word):
            report.dropped_bad_word.append((r.date, r.word))
        elif abs(r.tries.total - 100.0) > sum_drop_tolerance:
            report.dropped_bad_sum.append((r.date, r.tries.total))
        else:
            rows.append(r)
    rows.sort(key=lambda r: r.date)
    for a, b in zip(rows, rows[1:]):
        if a.date == b.date:
            raise ValueError(f"duplicate date {a.date}")
        if b.contest_number <= a.contest_number:
            raise ValueError(f"contest number does not increase at {b.date}")

    for column in COUNT_FIELDS:
        flags = _flag_outliers(rows, column, neighbor_window, outlier_ratio)
        repaired = list(rows)
        for i, r in enumerate(rows):
            if not flags[i]:
                continue
            good = [getattr(o, column) for j, o in enumerate(rows)
                    if j != i and not flags[j] and abs((o.date - r.date).days) <= neighbor_window]
            if not good:
                continue
            new = int(round(sum(good) / len(good)))
            report.repaired_counts.append((r.date, column, getattr(r, column), new))
            repaired[i] = replace(r, **{column: new})
        rows = repaired

    kept = []
    for r in rows:
        if r.hard_mode_count > r.reported_results:
            report.dropped_inconsistent.append((r.date, "hard_mode_count exceeds reported_results"))
            continue
        if abs(r.tries.total - 100.0) > 1e-9:
            r = replace(r, tries=r.tries.normalized())
            report.normalized_rows += 1
        kept.append(r)
    report.kept_rows = len(kept)
    if not kept:
        raise EmptyAfterCleaning("empty after cleaning: every row was dropped")
    return kept, report


def hard_share_statistic(records: list[DailyRecord],
                         threshold: float = 90.0) -> tuple[dict[str, float], float]:
    """Share of players needing three or more tries, per word.

    Returns the per-word shares and the fraction of words whose share is at
    least `threshold` percent.
    """
    if not records:
        raise ValueError("empty record set")
    shares = {}
    for r in records:
        t = r.tries
        shares[r.word] = t.p3 + t.p4 + t.p5 + t.p6 + t.px
    frac = sum(1 for s in shares.values() if s >= threshold) / len(shares)
    return shares, frac
