"""Graph construction, the record mapper, indexes, and serialization."""
from __future__ import annotations

import io
import random

import pytest

from chronokg.errors import MalformedRecord, UnknownLocation
from chronokg.graph import (
    NO_EVENT_TAG,
    FrozenGraphError,
    MeasureKind,
    NodeKind,
    RawRecord,
    Relation,
    TemporalKG,
    dump_jsonl,
    load_jsonl,
    map_record,
)
from chronokg.ingest import build_kg
from chronokg.intervals import TimeRef, from_iso

from conftest import DEC5_BASE, OPERA, SLOT, opera_house_records


def _record(ts: int, loc: str = "A", mm: float = 1.0) -> RawRecord:
    return RawRecord(
        date=ts, location_id=loc, location_name=loc, measure=mm, measure_kind=MeasureKind.RAIN
    )


def test_map_record_emits_three_anchored_triples():
    kg = TemporalKG(slot_duration=SLOT)
    ts = from_iso("2024-03-11T04:00:00Z")
    triples = map_record(_record(ts, "PARRAMATTA NORTH", 2.0), kg)
    assert len(triples) == 3
    assert {t.rel for t in triples} == {Relation.OCCURS_AT, Relation.AT_LOCATION, Relation.HAS_VALUE}
    occurs = next(t for t in triples if t.rel is Relation.OCCURS_AT)
    assert kg.node(occurs.tail).time == TimeRef(ts, ts + SLOT)


def test_map_record_idempotent():
    kg = TemporalKG(slot_duration=SLOT)
    record = _record(0)
    assert len(map_record(record, kg)) == 3
    assert map_record(record, kg) == []
    assert len(kg.edges()) == 3


def test_zero_measure_becomes_no_event_observation():
    kg = TemporalKG(slot_duration=SLOT)
    triples = map_record(_record(0, mm=0.0), kg)
    assert len(triples) == 3
    event = kg.node(triples[0].head)
    assert event.tag == NO_EVENT_TAG
    assert event.event_kind == "rain"  # still matches rain patterns for coverage


def test_map_record_rejects_bad_input():
    kg = TemporalKG(slot_duration=SLOT)
    with pytest.raises(MalformedRecord):
        map_record(_record(17), kg)  # not slot-aligned
    with pytest.raises(MalformedRecord):
        map_record(RawRecord(0, "A", "A", -1.0, MeasureKind.RAIN), kg)


def test_every_event_has_exactly_three_edges(opera_kg):
    by_event: dict[str, int] = {}
    for triple in opera_kg.edges():
        if triple.rel in (Relation.OCCURS_AT, Relation.AT_LOCATION, Relation.HAS_VALUE):
            by_event[triple.head] = by_event.get(triple.head, 0) + 1
    events = [n for n in opera_kg.nodes() if n.kind is NodeKind.EVENT]
    assert len(events) == 12
    assert all(by_event[e.id] == 3 for e in events)


def test_window_query_case_study(opera_kg):
    window = TimeRef(DEC5_BASE, DEC5_BASE + 4 * SLOT)  # 13:00-15:00
    rows = opera_kg.window_query(OPERA, window)
    assert len(rows) == 4
    assert [r[0].start for r in rows] == [DEC5_BASE + k * SLOT for k in range(4)]
    rain_slots = [r for r in rows if r[2] > 0]
    assert len(rain_slots) == 1 and rain_slots[0][0].start == DEC5_BASE + SLOT  # 13:30

    cloudy = opera_kg.window_query(OPERA, TimeRef(DEC5_BASE + 7 * SLOT, DEC5_BASE + 11 * SLOT))
    assert len(cloudy) == 4  # 16:30-18:30
    assert all(value == 0.0 for _, _, value in cloudy)


def test_window_query_point_and_unknown(opera_kg):
    # Point at an unobserved instant (before coverage) is empty.
    assert opera_kg.window_query(OPERA, TimeRef.point(DEC5_BASE - 10 * SLOT)) == []
    with pytest.raises(UnknownLocation):
        opera_kg.window_query("nowhere", TimeRef.point(DEC5_BASE))


def test_near_hops():
    kg = TemporalKG(slot_duration=SLOT)
    map_record(_record(0, "A"), kg)
    map_record(_record(0, "B"), kg)
    map_record(_record(0, "C"), kg)
    kg.add_near("A", "B")
    kg.add_near("B", "C")
    kg.freeze()
    assert kg.near("A", 0) == {"A"}
    assert kg.near("A", 1) == {"A", "B"}
    assert kg.near("A", None) == {"A", "B", "C"}
    assert dict(kg.near_with_hops("A", None))["C"] == 2
    with pytest.raises(UnknownLocation):
        kg.near("Z", 1)


def test_mapper_determinism_under_order():
    records = opera_house_records()
    shuffled = records[:]
    random.Random(3).shuffle(shuffled)
    a = build_kg(records, slot_duration=SLOT)
    b = build_kg(shuffled, slot_duration=SLOT)
    buf_a, buf_b = io.StringIO(), io.StringIO()
    dump_jsonl(a, buf_a)
    dump_jsonl(b, buf_b)
    assert buf_a.getvalue() == buf_b.getvalue()


def test_index_soundness_vs_linear_scan():
    rng = random.Random(99)
    records = []
    for loc in ("A", "B", "C"):
        for k in range(400):
            records.append(_record(k * SLOT, loc, mm=rng.choice([0.0, 0.0, 2.5])))
    kg = build_kg(records, slot_duration=SLOT)
    assert len(kg.edges()) <= 10_000

    observations = []
    for triple in kg.edges():
        if triple.rel is Relation.OCCURS_AT:
            time_ref, loc, value, _ = kg.event_observation(triple.head)
            observations.append((time_ref, loc, triple.head, value))

    for _ in range(300):
        loc = rng.choice(["A", "B", "C"])
        w_start = rng.randrange(-5, 405) * SLOT
        w_end = w_start + rng.randrange(0, 8) * SLOT
        window = TimeRef(w_start, w_end)
        got = {(t.start, e) for t, e, _ in kg.window_query(loc, window)}
        if window.is_point:
            expected = {
                (t.start, e)
                for t, l, e, _ in observations
                if l == loc and t.start <= window.start < t.end
            }
        else:
            expected = {
                (t.start, e)
                for t, l, e, _ in observations
                if l == loc and t.start < window.end and window.start < t.end
            }
        assert got == expected


def test_dump_load_round_trip(parramatta_kg):
    buf = io.StringIO()
    dump_jsonl(parramatta_kg, buf)
    reloaded = load_jsonl(io.StringIO(buf.getvalue()))
    buf2 = io.StringIO()
    dump_jsonl(reloaded, buf2)
    assert buf.getvalue() == buf2.getvalue()
    assert reloaded.slot_duration == parramatta_kg.slot_duration
    assert reloaded.stats() == parramatta_kg.stats()
    window = TimeRef(from_iso("2024-03-11T04:00:00Z"), from_iso("2024-03-11T08:00:00Z"))
    assert reloaded.window_query("066124", window) == parramatta_kg.window_query("066124", window)


def test_frozen_graph_rejects_mutation(opera_kg):
    with pytest.raises(FrozenGraphError):
        map_record(_record(0, "NEW"), opera_kg)
    with pytest.raises(FrozenGraphError):
        opera_kg.add_near("A", "B")


def test_stats_shape(opera_kg):
    stats = opera_kg.stats()
    assert stats["records"] == 12
    assert stats["relations"] == 36
    # 12 events + 12 time nodes + 1 location + distinct values {0.0, 3.2, 2.6, 4.1}
    assert stats["entities"] == 12 + 12 + 1 + 4
