"""Time references and interval algebra over integer UTC timestamps."""
from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone
from enum import IntEnum

from ._kernels import allen_code


class AllenRelation(IntEnum):
    """The 13 mutually exclusive, jointly exhaustive interval relations."""

    BEFORE = 0
    MEETS = 1
    OVERLAPS = 2
    STARTS = 3
    DURING = 4
    FINISHES = 5
    EQUALS = 6
    AFTER = 7
    MET_BY = 8
    OVERLAPPED_BY = 9
    STARTED_BY = 10
    CONTAINS = 11
    FINISHED_BY = 12


_INVERSE = {
    AllenRelation.BEFORE: AllenRelation.AFTER,
    AllenRelation.AFTER: AllenRelation.BEFORE,
    AllenRelation.MEETS: AllenRelation.MET_BY,
    AllenRelation.MET_BY: AllenRelation.MEETS,
    AllenRelation.OVERLAPS: AllenRelation.OVERLAPPED_BY,
    AllenRelation.OVERLAPPED_BY: AllenRelation.OVERLAPS,
    AllenRelation.STARTS: AllenRelation.STARTED_BY,
    AllenRelation.STARTED_BY: AllenRelation.STARTS,
    AllenRelation.DURING: AllenRelation.CONTAINS,
    AllenRelation.CONTAINS: AllenRelation.DURING,
    AllenRelation.FINISHES: AllenRelation.FINISHED_BY,
    AllenRelation.FINISHED_BY: AllenRelation.FINISHES,
    AllenRelation.EQUALS: AllenRelation.EQUALS,
}

# Coarse families used by pattern filters. WITHIN covers every relation
# where `a` lies inside `b` (containment tests); MEETS folds into the
# BEFORE family because half-open slots that merely touch share nothing.
BEFORE_FAMILY = frozenset({AllenRelation.BEFORE, AllenRelation.MEETS})
AFTER_FAMILY = frozenset({AllenRelation.AFTER, AllenRelation.MET_BY})
WITHIN_FAMILY = frozenset(
    {AllenRelation.STARTS, AllenRelation.DURING, AllenRelation.FINISHES, AllenRelation.EQUALS}
)
OVERLAP_FAMILY = frozenset({AllenRelation.OVERLAPS, AllenRelation.OVERLAPPED_BY})


@dataclass(frozen=True, order=True)
class TimeRef:
    """UTC epoch-second interval; a point when start == end.

    Slot-valued TimeRefs carry half-open semantics [start, end): adjacent
    slots neither overlap nor gap, so a 2h window is exactly four
    contiguous 30-minute slots. `allen_relation` classifies the raw
    [start, end] endpoints; slot intersection/containment tests go through
    `window_relation`, which collapses half-open ends first.
    """

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start > self.end:
            raise ValueError(f"TimeRef start {self.start} > end {self.end}")

    @property
    def is_point(self) -> bool:
        return self.start == self.end

    @property
    def duration(self) -> int:
        return self.end - self.start

    def midpoint(self) -> float:
        return (self.start + self.end) / 2.0

    def shift(self, seconds: int) -> TimeRef:
        return TimeRef(self.start + seconds, self.end + seconds)

    def closed(self) -> tuple[int, int]:
        """Collapse half-open [start, end) to inclusive endpoints."""
        if self.end > self.start:
            return self.start, self.end - 1
        return self.start, self.end

    def iso(self) -> str:
        if self.is_point:
            return to_iso(self.start)
        return f"{to_iso(self.start)}/{to_iso(self.end)}"

    @staticmethod
    def point(ts: int) -> TimeRef:
        return TimeRef(ts, ts)


def allen_relation(a: TimeRef, b: TimeRef) -> AllenRelation:
    """Unique Allen relation of `a` relative to `b` (closed endpoints)."""
    return AllenRelation(allen_code(a.start, a.end, b.start, b.end))


def inverse(rel: AllenRelation) -> AllenRelation:
    return _INVERSE[rel]


def window_relation(a: TimeRef, b: TimeRef) -> AllenRelation:
    """Allen relation after collapsing half-open ends on both sides."""
    a_s, a_e = a.closed()
    b_s, b_e = b.closed()
    return AllenRelation(allen_code(a_s, a_e, b_s, b_e))


def intersects(a: TimeRef, b: TimeRef) -> bool:
    """True unless the (half-open) intervals are strictly before/after."""
    rel = window_relation(a, b)
    return rel is not AllenRelation.BEFORE and rel is not AllenRelation.AFTER


def within(a: TimeRef, b: TimeRef) -> bool:
    """True when half-open `a` lies entirely inside half-open `b`."""
    return window_relation(a, b) in WITHIN_FAMILY


def slot_starts(window: TimeRef, slot_duration: int) -> list[int]:
    """Starts of the slots tiling a slot-aligned half-open window."""
    return list(range(window.start, window.end, slot_duration))


def slot_of(ts: int, slot_duration: int) -> int:
    """Start of the slot containing instant `ts` (floor to the grid)."""
    return ts - ts % slot_duration


def slot_ref(start: int, slot_duration: int) -> TimeRef:
    return TimeRef(start, start + slot_duration)


def to_iso(ts: int) -> str:
    return datetime.fromtimestamp(ts, tz=timezone.utc).isoformat().replace("+00:00", "Z")


def from_iso(text: str) -> int:
    """Parse an ISO-8601 timestamp (naive values are taken as UTC)."""
    raw = text.strip()
    if raw.endswith("Z"):
        raw = raw[:-1] + "+00:00"
    dt = datetime.fromisoformat(raw)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())
