"""Corpus parsing, dedup accounting, thresholds, and the synthetic generator."""
from __future__ import annotations

import math
from pathlib import Path

import pytest

from chronokg.errors import InvalidParams, SchemaMismatch
from chronokg.graph import MeasureKind
from chronokg.ingest import (
    ParseResult,
    SynthParams,
    build_kg,
    merge_records,
    parse_corpus,
    synth_corpus,
    synth_near_edges,
    write_records_csv,
)
from chronokg.intervals import from_iso


def _write(tmp_path: Path, name: str, text: str) -> Path:
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def test_irish_row(tmp_path):
    path = _write(
        tmp_path,
        "irish.csv",
        "date,county,station ID,station,rain,humidity\n"
        "01-jan-2017 00:00,Dublin,532,DUBLIN AIRPORT,0.4,81\n",
    )
    result = parse_corpus(path, "irish")
    assert result.kept == 1
    record = result.records[0]
    assert record.measure_kind is MeasureKind.RAIN
    assert record.location_id == "532"
    assert record.location_name == "DUBLIN AIRPORT"
    assert record.date == from_iso("2017-01-01T00:00:00Z")
    assert record.measure == 0.4


def test_duplicate_rows_dropped(tmp_path):
    path = _write(
        tmp_path,
        "dup.csv",
        "date,station ID,station,rain\n"
        "05-Dec-2024 13:00,1,X,0.0\n"
        "05-Dec-2024 13:00,1,X,0.0\n",
    )
    result = parse_corpus(path, "sydney")
    assert result.kept == 1
    assert result.duplicates == 1


def test_tfnsw_direction_and_threshold(tmp_path):
    rows = ["date,direction,volume"]
    for hour in range(40):
        rows.append(f"2015-06-01 {hour % 24:02d}:00,northbound,{100 + hour}")
    rows[-1] = "2015-06-02 15:00,southbound,990"
    path = _write(tmp_path, "tfnsw.csv", "\n".join(rows) + "\n")
    result = parse_corpus(path, "tfnsw")
    assert result.kept == 40
    north = [r for r in result.records if r.direction == "northbound"]
    assert north and all(r.location_id.endswith("|northbound") for r in north)

    kg = build_kg(result.records, slot_duration=3600)
    north_loc = north[0].location_id
    cutoff = kg.threshold("volume", north_loc)
    values = sorted(r.measure for r in north)
    assert cutoff in values
    assert sum(1 for v in values if v > cutoff) <= math.ceil(len(values) * 0.05)


def test_unparseable_dates_skipped(tmp_path):
    path = _write(
        tmp_path,
        "bad.csv",
        "date,station ID,station,rain\nnot-a-date,1,X,0.0\n05-Dec-2024 13:00,1,X,1.0\n",
    )
    result = parse_corpus(path, "sydney")
    assert result.kept == 1 and result.skipped == 1


def test_schema_mismatch(tmp_path):
    path = _write(tmp_path, "wrong.csv", "when,where\n1,2\n")
    with pytest.raises(SchemaMismatch):
        parse_corpus(path, "sydney")


def test_count_accounting_exact(tmp_path):
    path = _write(
        tmp_path,
        "mix.csv",
        "date,station ID,station,rain\n"
        "05-Dec-2024 13:00,1,X,0.0\n"
        "05-Dec-2024 13:00,1,X,0.0\n"
        "garbage,1,X,0.0\n"
        "05-Dec-2024 14:00,1,X,-3\n"
        "05-Dec-2024 13:30,1,X,2.0\n",
    )
    result = parse_corpus(path, "sydney")
    assert result.rows_in == 5
    assert result.rows_in == result.kept + result.duplicates + result.skipped
    assert (result.kept, result.duplicates, result.skipped) == (2, 1, 2)


def test_parse_rewrite_fixed_point(tmp_path):
    params = SynthParams(locations=2, span_slots=24, event_rate=0.4, seed=5)
    records = synth_corpus(params)
    first = tmp_path / "first.csv"
    write_records_csv(records, first, schema="sydney")
    once = parse_corpus(first, "sydney", slot_duration=params.slot_duration)
    assert once.duplicates == 0

    second = tmp_path / "second.csv"
    write_records_csv(once.records, second, schema="sydney")
    twice = parse_corpus(second, "sydney", slot_duration=params.slot_duration)
    assert twice.records == once.records


def test_timezone_conversion(tmp_path):
    path = _write(
        tmp_path,
        "syd.csv",
        "date,station ID,station,rain\n11-Mar-2024 04:00,1,X,1.0\n",
    )
    result = parse_corpus(path, "sydney", tz="Australia/Sydney")
    # AEDT is UTC+11 on 2024-03-11.
    assert result.records[0].date == from_iso("2024-03-10T17:00:00Z")


def test_merge_is_deterministic_and_dedups(tmp_path):
    path = _write(
        tmp_path,
        "a.csv",
        "date,station ID,station,rain\n05-Dec-2024 13:00,1,X,0.0\n",
    )
    r1 = parse_corpus(path, "sydney")
    r2 = parse_corpus(path, "sydney")
    merged = merge_records([r1, r2])
    assert len(merged) == 1


def test_synth_determinism_and_edges():
    params = SynthParams(locations=3, span_slots=16, event_rate=0.5, seed=42)
    assert synth_corpus(params) == synth_corpus(params)
    assert synth_near_edges(params) == [("S00", "S01"), ("S01", "S02")]


def test_synth_rate_extremes():
    dry = synth_corpus(SynthParams(span_slots=20, event_rate=0.0, seed=1))
    assert all(r.measure == 0.0 for r in dry)
    wet = synth_corpus(SynthParams(span_slots=20, event_rate=1.0, seed=1))
    assert all(r.measure > 0.0 for r in wet)


def test_synth_rate_within_three_sigma():
    params = SynthParams(locations=4, span_slots=3000, event_rate=0.3, seed=9)
    records = synth_corpus(params)
    n = len(records)
    assert n >= 10_000
    hits = sum(1 for r in records if r.measure > 0)
    sigma = math.sqrt(n * 0.3 * 0.7)
    assert abs(hits - n * 0.3) <= 3 * sigma


def test_synth_validation():
    with pytest.raises(InvalidParams):
        synth_corpus(SynthParams(event_rate=1.5))
    with pytest.raises(InvalidParams):
        synth_corpus(SynthParams(span_slots=0))


def test_build_kg_edge_count():
    records = synth_corpus(SynthParams(locations=2, span_slots=10, event_rate=0.5, seed=2))
    kg = build_kg(records, slot_duration=1800, near_edges=[("S00", "S01")])
    # 3 edges per record plus the declared near edge.
    assert len(kg.edges()) == 3 * len(records) + 1


def test_build_kg_empty():
    kg = build_kg([], slot_duration=1800)
    stats = kg.stats()
    assert stats == {"period": None, "entities": 0, "relations": 0, "records": 0}


def test_entity_accounting_synthetic():
    records = synth_corpus(SynthParams(locations=1, span_slots=1000, event_rate=0.25, seed=3))
    kg = build_kg(records, slot_duration=1800)
    distinct_values = len({r.measure for r in records})
    distinct_times = len({r.date for r in records})
    assert kg.stats()["entities"] == distinct_times + 1 + len(records) + distinct_values
    assert kg.stats()["records"] == 1000
