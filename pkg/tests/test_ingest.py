from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wordlestats.ingest import (DailyRecord, EmptyAfterCleaning, ParseError, TryDistribution,
                                clean_records, hard_share_statistic, parse_date,
                                parse_results_file, write_results_file)
from conftest import HEADER


def _rec(day, word="crane", tries=(1, 2, 17, 35, 31, 12, 2), reported=20000, hard=2000,
         contest=None):
    d = date(2022, 7, day)
    return DailyRecord(d, contest or 380 + day, word, reported, hard,
                       TryDistribution.from_sequence(tries))


def test_parse_trite_row(tmp_path):
    f = tmp_path / "r.csv"
    f.write_text(HEADER + "\n07-20-2022,396,trite,27188,2586,1,2,17,35,31,12,2\n")
    (rec,) = parse_results_file(f)
    assert rec.word == "trite"
    assert rec.date == date(2022, 7, 20)
    assert rec.tries.as_tuple() == (1, 2, 17, 35, 31, 12, 2)


def test_parse_header_only_and_case_insensitive(tmp_path):
    f = tmp_path / "r.tsv"
    f.write_text(HEADER.upper().replace(",", "\t") + "\n")
    assert parse_results_file(f) == []


def test_parse_keeps_bad_words_and_file_order(anomaly_file):
    recs = parse_results_file(anomaly_file)
    assert len(recs) == 12
    assert recs[4].word == "rprobe"
    assert [r.contest_number for r in recs] == list(range(523, 535))


def test_parse_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        parse_results_file(tmp_path / "nope.csv")
    f = tmp_path / "bad.csv"
    f.write_text(HEADER + "\n2022-07-20,396,trite,lots,2586,1,2,17,35,31,12,2\n")
    with pytest.raises(ParseError) as exc:
        parse_results_file(f)
    assert exc.value.line == 2
    f.write_text("Date,Word\n2022-07-20,trite\n")
    with pytest.raises(ParseError, match="missing column"):
        parse_results_file(f)


@pytest.mark.parametrize("text", ["2022-11-30", "11-30-2022", "11/30/2022"])
def test_parse_date_formats(text):
    assert parse_date(text) == date(2022, 11, 30)


def test_clean_anomalies(anomaly_file):
    kept, report = clean_records(parse_results_file(anomaly_file))
    assert sorted(w for _, w in report.dropped_bad_word) == ["clen", "rprobe", "tash"]
    assert [s for _, s in report.dropped_bad_sum] == [126]
    assert report.repaired_counts == [
        (date(2022, 11, 30), "reported_results", 2569, round((20950 + 20800 + 20470 + 20200) / 4))]
    assert len(kept) == 8
    assert report.normalized_rows == 2
    assert all(abs(r.tries.total - 100) <= 1e-9 for r in kept)


def test_clean_normalizes_double_sum():
    kept, report = clean_records([_rec(1, tries=(2, 4, 34, 70, 62, 24, 4))],
                                 sum_drop_tolerance=200)
    assert kept[0].tries.as_tuple() == pytest.approx((1, 2, 17, 35, 31, 12, 2), abs=1e-12)
    assert report.normalized_rows == 1


def test_clean_leaves_exact_rows_untouched():
    rec = _rec(1)
    kept, report = clean_records([rec])
    assert kept == [rec]
    assert report.normalized_rows == 0


def test_clean_empty_after_cleaning():
    with pytest.raises(EmptyAfterCleaning):
        clean_records([_rec(1, word="tash"), _rec(2, word="rprobe")])
    with pytest.raises(ValueError):
        clean_records([])


def test_clean_repairs_hard_mode_column():
    words = "aaaaa bbbbb ccccc ddddd eeeee fffff ggggg".split()
    recs = [_rec(d, word=w, hard=2000) for d, w in zip(range(1, 8), words)]
    recs[3] = _rec(4, word="ddddd", hard=150)
    kept, report = clean_records(recs)
    assert report.repaired_counts == [(date(2022, 7, 4), "hard_mode_count", 150, 2000)]


def test_clean_sorts_by_date_and_checks_contest_numbers():
    kept, _ = clean_records([_rec(3, word="bbbbb"), _rec(1, word="aaaaa")])
    assert [r.date.day for r in kept] == [1, 3]
    with pytest.raises(ValueError, match="contest number"):
        clean_records([_rec(1, word="aaaaa", contest=5), _rec(2, word="bbbbb", contest=4)])


def test_round_trip_file_is_idempotent(anomaly_file, tmp_path):
    kept, _ = clean_records(parse_results_file(anomaly_file))
    out = tmp_path / "clean.csv"
    write_results_file(kept, out)
    again, report = clean_records(parse_results_file(out))
    assert again == kept
    assert report.dropped_rows == 0 and report.repaired_counts == [] and report.normalized_rows == 0


def test_report_accounts_for_every_row(anomaly_file, tmp_path):
    raw = parse_results_file(anomaly_file)
    kept, report = clean_records(raw)
    assert report.kept_rows + report.dropped_rows == len(raw)
    path = tmp_path / "report.jsonl"
    report.write(path)
    lines = path.read_text().splitlines()
    assert len(lines) == 3 + 1 + 1 + 1


tries_strategy = st.tuples(
    st.lists(st.floats(0.01, 1, allow_nan=False), min_size=7, max_size=7),
    st.floats(92, 108)).map(lambda t: [v * t[1] / sum(t[0]) for v in t[0]])


@settings(max_examples=60, deadline=None)
@given(st.lists(tries_strategy, min_size=1, max_size=12))
def test_clean_properties(rows):
    raw = [_rec(i + 1, word="abcd" + "fghijklmnopq"[i], tries=t) for i, t in enumerate(rows)]
    kept, report = clean_records(raw)
    assert report.kept_rows + report.dropped_rows == len(raw)
    for before, after in zip(raw, kept):
        assert abs(after.tries.total - 100) <= 1e-9
        assert min(after.tries.as_tuple()) >= 0
        s = before.tries.total
        for a, b in zip(before.tries.as_tuple(), after.tries.as_tuple()):
            assert b == pytest.approx(100 * a / s, rel=1e-12, abs=1e-12)
    again, _ = clean_records(kept)
    assert again == kept


def test_hard_share():
    shares, frac = hard_share_statistic(
        [_rec(1, word="aaaaa", tries=(0, 0, 0, 0, 0, 0, 100)),
         _rec(2, word="bbbbb", tries=(50, 50, 0, 0, 0, 0, 0))])
    assert shares == {"aaaaa": 100, "bbbbb": 0}
    assert frac == 0.5
    _, frac = hard_share_statistic([_rec(1, tries=(5, 5, 20, 30, 20, 15, 5))])
    assert frac == 1.0  # 90 counts as reaching the threshold
    with pytest.raises(ValueError):
        hard_share_statistic([])
