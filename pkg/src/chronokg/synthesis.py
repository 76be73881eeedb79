"""Evidence consolidation: contradiction filter, decisive time, weighted answer."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING

from .errors import EmptyEvidence
from .intervals import TimeRef, slot_starts, to_iso, within
from .retrieval import Evidence, Observation

if TYPE_CHECKING:
    from .agents import QueryIntent


class Verdict(str, Enum):
    YES = "YES"
    NO = "NO"
    TIME = "TIME"
    NO_NEED = "NO_NEED"
    NO_ANSWER = "NO_ANSWER"


@dataclass(frozen=True)
class Citation:
    """One weighted fact in an answer rationale."""

    fact_id: str
    weight: float
    text: str


@dataclass
class Answer:
    """Final verdict plus the ordered fact citations backing it."""

    verdict: Verdict
    rationale: list[Citation] = field(default_factory=list)
    decisive_time: TimeRef | None = None
    filter_report: FilterReport | None = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "decisive_time": self.decisive_time.iso() if self.decisive_time else None,
            "rationale": [
                {"fact": c.fact_id, "weight": round(c.weight, 9), "text": c.text}
                for c in self.rationale
            ],
            "filter_report": self.filter_report.to_dict() if self.filter_report else None,
        }


@dataclass
class FilterReport:
    """Slots blanked by the contradiction filter."""

    removed: int = 0
    unknown_cells: list[tuple[str, int, str]] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "removed": self.removed,
            "unknown_cells": [
                {"event_kind": kind, "slot": to_iso(start), "location": loc}
                for kind, start, loc in self.unknown_cells
            ],
        }


def contradiction_filter(evidence: Evidence) -> tuple[list[Observation], FilterReport]:
    """Drop every observation in a cell holding mutually exclusive values.

    Both (or all) conflicting facts are removed and the slot is reported as
    unknown; conflict-free evidence passes through unchanged.
    """
    conflicted = evidence.conflicted_cells()
    kept = []
    removed = 0
    for obs in evidence.observations():
        if (obs.event_kind, obs.time.start, obs.loc) in conflicted:
            removed += 1
        else:
            kept.append(obs)
    report = FilterReport(removed=removed, unknown_cells=sorted(conflicted))
    return kept, report


def covered_cells(
    observations: list[Observation], window: TimeRef, locs: tuple[str, ...], slot: int
) -> set[tuple[int, str]]:
    """(slot start, location) cells of the window that carry an observation."""
    covered: set[tuple[int, str]] = set()
    starts = slot_starts(window, slot)
    for obs in observations:
        if obs.loc not in locs:
            continue
        for s in starts:
            if obs.time.start <= s and obs.time.end >= s + slot:
                covered.add((s, obs.loc))
    return covered


def window_feasible(
    observations: list[Observation],
    window: TimeRef,
    locs: tuple[str, ...],
    slot: int,
) -> bool:
    """Certified feasible: every (slot, location) cell observed and clean."""
    covered = covered_cells(observations, window, locs, slot)
    total = len(slot_starts(window, slot)) * len(locs)
    return len(covered) == total and not window_violated(observations, window, locs)


def window_violated(
    observations: list[Observation], window: TimeRef, locs: tuple[str, ...]
) -> bool:
    """Some violating observation sits inside the window at a path location."""
    return any(
        obs.violating and obs.loc in locs and within(obs.time, window) for obs in observations
    )


def select_decisive_time(
    observations: list[Observation],
    q: QueryIntent,
    slot: int,
    require_coverage: bool = True,
) -> TimeRef | None:
    """Start of the evidence-certified window satisfying the query.

    Scans candidate starts outward from the anchor in the query's direction
    (earliest feasible for the leave-late kind, latest for leave-early); a
    fixed-window query checks only its own window. With require_coverage
    False the scan accepts the first candidate without an observed violation
    even if slots are unobserved - the unverified mode used by the
    no-sufficiency-check ablation.
    """
    from .agents import QueryKind  # deferred: avoids a module cycle

    locs = tuple(q.location_path)

    def ok(window: TimeRef) -> bool:
        if require_coverage:
            return window_feasible(observations, window, locs, slot)
        return not window_violated(observations, window, locs)

    anchor_window = q.window()
    if q.kind in (QueryKind.Q1_AVOID, QueryKind.Q1_DETECT):
        return TimeRef.point(anchor_window.start) if ok(anchor_window) else None

    step = slot
    if q.kind is QueryKind.Q3_EARLIEST_AFTER:
        t = anchor_window.start + step
        while t < anchor_window.start + q.horizon:
            if ok(TimeRef(t, t + q.duration)):
                return TimeRef.point(t)
            t += step
        return None
    t = anchor_window.start - step
    while t > anchor_window.start - q.horizon:
        if ok(TimeRef(t, t + q.duration)):
            return TimeRef.point(t)
        t -= step
    return None


def fuse(
    q: QueryIntent,
    observations: list[Observation],
    t_star: TimeRef,
    gamma: float,
) -> Answer:
    """Weight facts by closeness to the decisive time and build the answer.

    alpha(h) ~ exp(-gamma * hours(midpoint distance)) over facts of the
    query's kind; weights are normalized to sum to one over the cited facts
    and the rationale lists them in descending weight. The verdict depends
    only on the feasibility predicate at t_star, never on gamma.
    """
    from .agents import QueryKind

    cited = [obs for obs in observations if obs.event_kind == q.event_kind]
    if not cited:
        raise EmptyEvidence("no facts match the query pattern")

    weights = []
    for obs in cited:
        dist_hours = abs(obs.time.midpoint() - t_star.midpoint()) / 3600.0
        weights.append(math.exp(-gamma * dist_hours))
    total = sum(weights)
    citations = [
        Citation(fact_id=obs.provenance, weight=w / total, text=_fact_text(obs))
        for obs, w in zip(cited, weights)
    ]
    citations.sort(key=lambda c: (-c.weight, c.fact_id))

    if q.kind is QueryKind.Q1_AVOID:
        verdict = Verdict.YES
    elif q.kind is QueryKind.Q1_DETECT:
        verdict = Verdict.NO
    elif t_star.start == q.window().start:
        verdict = Verdict.NO_NEED
    else:
        verdict = Verdict.TIME
    return Answer(verdict=verdict, rationale=citations, decisive_time=t_star)


def fallback_rationale(q: QueryIntent, observations: list[Observation], gamma: float) -> list[Citation]:
    """Best-effort citations for a no-answer outcome, weighted around the anchor."""
    cited = [obs for obs in observations if obs.event_kind == q.event_kind]
    if not cited:
        return []
    mid = q.window().midpoint()
    weights = [math.exp(-gamma * abs(obs.time.midpoint() - mid) / 3600.0) for obs in cited]
    total = sum(weights)
    citations = [
        Citation(fact_id=obs.provenance, weight=w / total, text=_fact_text(obs))
        for obs, w in zip(cited, weights)
    ]
    citations.sort(key=lambda c: (-c.weight, c.fact_id))
    return citations


def _fact_text(obs: Observation) -> str:
    state = "event" if obs.violating else "clear"
    return f"{obs.event_kind}={obs.value} at {obs.loc} {obs.time.iso()} ({state})"
