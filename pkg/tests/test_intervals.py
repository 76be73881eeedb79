"""Interval algebra properties checked against an independent endpoint comparator."""
from __future__ import annotations

import random

import pytest

from chronokg.intervals import (
    AllenRelation,
    TimeRef,
    allen_relation,
    intersects,
    inverse,
    slot_of,
    slot_starts,
    window_relation,
    within,
)

R = AllenRelation


def brute_force_relations(a: TimeRef, b: TimeRef) -> set[AllenRelation]:
    """Independent comparator: each relation as a disjoint endpoint formula.

    Touch cases involving points fold into the STARTS/FINISHES families
    (a genuine MEETS needs two proper intervals), which keeps the 13
    formulas a partition over arbitrary, possibly degenerate, intervals.
    """
    a_s, a_e, b_s, b_e = a.start, a.end, b.start, b.end
    holding = set()
    if a_e < b_s:
        holding.add(R.BEFORE)
    if a_s > b_e:
        holding.add(R.AFTER)
    if a_s == b_s and a_e == b_e:
        holding.add(R.EQUALS)
    if a_s == b_s and a_e < b_e:
        holding.add(R.STARTS)
    if a_s == b_s and a_e > b_e:
        holding.add(R.STARTED_BY)
    if a_e == b_e and a_s > b_s:
        holding.add(R.FINISHES)
    if a_e == b_e and a_s < b_s:
        holding.add(R.FINISHED_BY)
    if a_e == b_s and a_s < a_e and b_s < b_e:
        holding.add(R.MEETS)
    if a_s == b_e and b_s < b_e and a_s < a_e:
        holding.add(R.MET_BY)
    if a_s > b_s and a_e < b_e:
        holding.add(R.DURING)
    if a_s < b_s and a_e > b_e:
        holding.add(R.CONTAINS)
    if a_s < b_s and b_s < a_e and a_e < b_e:
        holding.add(R.OVERLAPS)
    if b_s < a_s and a_s < b_e and b_e < a_e:
        holding.add(R.OVERLAPPED_BY)
    return holding


def random_ref(rng: random.Random, lo: int = 0, hi: int = 50) -> TimeRef:
    # Small coordinate range forces every touching/degenerate configuration.
    x = rng.randint(lo, hi)
    y = rng.randint(lo, hi)
    return TimeRef(min(x, y), max(x, y))


def test_spec_examples():
    assert allen_relation(TimeRef(1, 2), TimeRef(3, 4)) is R.BEFORE
    half_one = 30 * 60
    assert (
        allen_relation(
            TimeRef(13 * 3600 + half_one, 14 * 3600), TimeRef(13 * 3600, 15 * 3600)
        )
        is R.DURING
    )
    assert allen_relation(TimeRef(1, 3), TimeRef(1, 3)) is R.EQUALS
    assert allen_relation(TimeRef(1, 3), TimeRef(2, 4)) is R.OVERLAPS


def test_exhaustiveness_and_agreement_10k():
    rng = random.Random(20240301)
    for _ in range(10_000):
        a, b = random_ref(rng), random_ref(rng)
        holding = brute_force_relations(a, b)
        assert len(holding) == 1, f"{a} vs {b}: {holding}"
        assert allen_relation(a, b) in holding


def test_inverse_symmetry_10k():
    rng = random.Random(20240302)
    for _ in range(10_000):
        a, b = random_ref(rng), random_ref(rng)
        assert allen_relation(a, b) is inverse(allen_relation(b, a))


def test_inverse_involution():
    for rel in AllenRelation:
        assert inverse(inverse(rel)) is rel


def test_point_handling():
    point = TimeRef.point(5)
    assert point.is_point
    assert allen_relation(point, TimeRef(5, 9)) is R.STARTS
    assert allen_relation(TimeRef(5, 9), point) is R.STARTED_BY
    assert allen_relation(point, TimeRef(1, 5)) is R.FINISHES
    assert allen_relation(point, TimeRef(1, 9)) is R.DURING
    assert allen_relation(point, point) is R.EQUALS


def test_timeref_validation():
    with pytest.raises(ValueError):
        TimeRef(5, 4)


def test_half_open_window_semantics():
    # Adjacent 30-min slots neither overlap nor gap.
    slot_a = TimeRef(0, 1800)
    slot_b = TimeRef(1800, 3600)
    assert not intersects(slot_a, slot_b)
    assert window_relation(slot_a, slot_b) is R.BEFORE

    window = TimeRef(0, 7200)  # 2h window == 4 contiguous slots
    inside = [TimeRef(s, s + 1800) for s in range(0, 7200, 1800)]
    assert all(within(s, window) for s in inside)
    assert not within(TimeRef(7200, 9000), window)
    assert not intersects(TimeRef(7200, 9000), window)

    # A point at the half-open end is outside; at the start it is inside.
    assert not intersects(TimeRef.point(7200), window)
    assert intersects(TimeRef.point(0), window)


def test_slot_helpers():
    window = TimeRef(3600, 3600 + 4 * 1800)
    assert slot_starts(window, 1800) == [3600, 5400, 7200, 9000]
    assert slot_of(5401, 1800) == 5400
    assert slot_of(5400, 1800) == 5400
