"""Benchmark generation: gold labels by exhaustive window scans, minimal evidence sets."""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import IO

from .agents import QueryIntent, QueryKind
from .errors import InsufficientCoverage, NoGoldLabel
from .graph import MeasureKind, RawRecord, TemporalKG
from .ingest import SynthParams, build_kg, synth_corpus, synth_near_edges
from .intervals import TimeRef, from_iso, slot_starts, to_iso, within


class QAKind(str, Enum):
    Q1 = "Q1"
    Q2 = "Q2"
    Q3 = "Q3"


_QUERY_KIND = {
    QAKind.Q1: QueryKind.Q1_AVOID,
    QAKind.Q2: QueryKind.Q2_LATEST_BEFORE,
    QAKind.Q3: QueryKind.Q3_EARLIEST_AFTER,
}


@dataclass(frozen=True)
class Gold:
    """Gold label: TRUE/FALSE for fixed windows, a time or abstention otherwise."""

    label: str  # TRUE | FALSE | TIME | NO_NEED | NO_ANSWER
    time: int | None = None

    def to_json(self) -> dict:
        return {"label": self.label, "time": to_iso(self.time) if self.time is not None else None}

    @staticmethod
    def from_json(obj: dict) -> Gold:
        return Gold(obj["label"], from_iso(obj["time"]) if obj.get("time") else None)


@dataclass(frozen=True)
class QAItem:
    """One generated question with its gold label and minimal evidence ids."""

    id: str
    kind: QAKind
    anchor: int
    duration: int
    horizon: int
    location_path: tuple[str, ...]
    question_text: str
    gold: Gold
    sd: frozenset[str]
    event_kind: str = "rain"
    threshold: float | None = None
    labels: dict = field(default_factory=dict)  # Q1: both detect/avoid phrasings

    def window(self) -> TimeRef:
        return TimeRef(self.anchor, self.anchor + self.duration)

    def to_query(self) -> QueryIntent:
        return QueryIntent(
            kind=_QUERY_KIND[self.kind],
            anchor=TimeRef.point(self.anchor),
            duration=self.duration,
            horizon=self.horizon,
            location_path=self.location_path,
            event_kind=self.event_kind,
            threshold=self.threshold,
        )

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "anchor": to_iso(self.anchor),
            "duration_s": self.duration,
            "horizon_s": self.horizon,
            "location_path": list(self.location_path),
            "question": self.question_text,
            "gold": self.gold.to_json(),
            "sd": sorted(self.sd),
            "event_kind": self.event_kind,
            "threshold": self.threshold,
            "labels": self.labels,
        }

    @staticmethod
    def from_json(obj: dict) -> QAItem:
        return QAItem(
            id=obj["id"],
            kind=QAKind(obj["kind"]),
            anchor=from_iso(obj["anchor"]),
            duration=int(obj["duration_s"]),
            horizon=int(obj["horizon_s"]),
            location_path=tuple(obj["location_path"]),
            question_text=obj["question"],
            gold=Gold.from_json(obj["gold"]),
            sd=frozenset(obj["sd"]),
            event_kind=obj.get("event_kind", "rain"),
            threshold=obj.get("threshold"),
            labels=obj.get("labels", {}),
        )


# -- window facts from the graph (the labeling world model) -------------------


def _observations(kg: TemporalKG, loc: str, window: TimeRef, event_kind: str, threshold: float | None):
    """(time, provenance, violating) per observation of `event_kind` in window."""
    cutoff = threshold if threshold is not None else kg.threshold(event_kind, loc)
    out = []
    for time_ref, event_id, value in kg.window_query(loc, window):
        node = kg.node(event_id)
        if node.event_kind != event_kind:
            continue
        out.append((time_ref, node.observation or event_id, value > cutoff))
    return out


def _window_state(
    kg: TemporalKG,
    loc_path: tuple[str, ...],
    window: TimeRef,
    event_kind: str,
    threshold: float | None,
) -> tuple[bool, bool]:
    """(fully observed, violated) for the window over every path location."""
    slot = kg.slot_duration
    starts = slot_starts(window, slot)
    covered_all = True
    violated = False
    for loc in loc_path:
        covered: set[int] = set()
        for time_ref, _, violating in _observations(kg, loc, window, event_kind, threshold):
            if violating and within(time_ref, window):
                violated = True
            for s in starts:
                if time_ref.start <= s and time_ref.end >= s + slot:
                    covered.add(s)
        if len(covered) < len(starts):
            covered_all = False
    return covered_all, violated


def i_exist(
    kg: TemporalKG,
    loc_path: tuple[str, ...],
    t: int,
    dt: int,
    event_kind: str = "rain",
    threshold: float | None = None,
) -> bool:
    """True iff a violating event exists in [t, t+dt) at any path location."""
    if dt == 0:
        return False
    window = TimeRef(t, t + dt)
    _, violated = _window_state(kg, loc_path, window, event_kind, threshold)
    return violated


def _feasible(kg, loc_path, window, event_kind, threshold) -> bool:
    """Gold-label feasibility: fully observed and violation-free.

    Absence of records never counts as absence of events; a window the
    corpus does not cover cannot be certified feasible, which keeps the
    labels reachable by evidence-bounded reasoning.
    """
    covered, violated = _window_state(kg, loc_path, window, event_kind, threshold)
    return covered and not violated


def a_early(
    kg: TemporalKG,
    loc_path: tuple[str, ...],
    t: int,
    dt: int,
    horizon: int,
    event_kind: str = "rain",
    threshold: float | None = None,
) -> int | None:
    """Latest feasible start strictly before t within the horizon (slot scan)."""
    slot = kg.slot_duration
    start = t - slot
    while start > t - horizon:
        if _feasible(kg, loc_path, TimeRef(start, start + dt), event_kind, threshold):
            return start
        start -= slot
    return None


def a_late(
    kg: TemporalKG,
    loc_path: tuple[str, ...],
    t: int,
    dt: int,
    horizon: int,
    event_kind: str = "rain",
    threshold: float | None = None,
) -> int | None:
    """Earliest feasible start strictly after t within the horizon (slot scan)."""
    slot = kg.slot_duration
    start = t + slot
    while start < t + horizon:
        if _feasible(kg, loc_path, TimeRef(start, start + dt), event_kind, threshold):
            return start
        start += slot
    return None


# -- question templates --------------------------------------------------------


def _q1_text(kg: TemporalKG, path: tuple[str, ...], t: int, dt: int, event_word: str) -> str:
    names = [kg.node(loc).name or loc for loc in path]
    stamp = to_iso(t)
    hours = dt / 3600
    hours_text = f"{hours:g}"
    return (
        f"I am a resident in {names[0]}, and I plan to have a trip on {stamp}, "
        f"passing {names} in {hours_text} hours, considering the weather, "
        f"can I avoid {event_word} during this time?"
    )


def _q2_text(event_word: str) -> str:
    return (
        f"Based on the above situation, if I cannot avoid {event_word}, I can leave early, "
        "what is the latest time for me to leave early. "
        f"If I can avoid {event_word}, just answer 'no need', "
        "if there is no such time, just answer 'no answer'."
    )


def _q3_text(event_word: str) -> str:
    return (
        f"Based on the above situation, if I cannot avoid {event_word}, I can leave late "
        f"until there is no {event_word}, what is the earliest time for me to leave late? "
        f"If I can avoid {event_word}, just answer 'no need', "
        "if there is no such time, just answer 'no answer'."
    )


# -- generation -----------------------------------------------------------------


@dataclass(frozen=True)
class GenParams:
    m: int = 100
    duration: int = 2 * 3600
    horizon: int = 12 * 3600
    seed: int = 0
    event_kind: str = "rain"
    threshold: float | None = None
    paths: tuple[tuple[str, ...], ...] = ()


def generate(kg: TemporalKG, params: GenParams) -> list[QAItem]:
    """Sample anchors uniformly, label Q1, and spawn Q2/Q3 where Q1 finds an event.

    Anchors sit on slot boundaries with duration + horizon coverage on both
    sides. Deterministic under the seed; output order is canonical (anchor,
    kind, path).
    """
    coverage = kg.time_coverage()
    if coverage is None:
        raise InsufficientCoverage("empty graph")
    slot = kg.slot_duration
    lo = coverage.start + params.horizon
    hi = coverage.end - params.duration - params.horizon
    eligible = list(range(lo + (-lo) % slot, hi + 1, slot))
    if not eligible:
        raise InsufficientCoverage(
            f"graph covers {coverage.iso()}, too narrow for duration+horizon on both sides"
        )

    rng = random.Random(params.seed)
    paths = list(params.paths) or [(loc,) for loc in kg.locations()]
    items: list[QAItem] = []
    for _ in range(params.m):
        t = rng.choice(eligible)
        path = paths[rng.randrange(len(paths))]
        items.extend(_items_for_anchor(kg, t, path, params))
    items.sort(key=lambda item: (item.anchor, item.kind.value, item.location_path))
    return items


def _items_for_anchor(kg: TemporalKG, t: int, path: tuple[str, ...], params: GenParams) -> list[QAItem]:
    event_word = "rain" if params.event_kind == "rain" else f"abnormal {params.event_kind}"
    exists = i_exist(kg, path, t, params.duration, params.event_kind, params.threshold)
    out: list[QAItem] = []

    base = f"{to_iso(t)}-{'-'.join(path)}"
    q1 = QAItem(
        id=f"qa:{base}:Q1",
        kind=QAKind.Q1,
        anchor=t,
        duration=params.duration,
        horizon=params.horizon,
        location_path=path,
        question_text=_q1_text(kg, path, t, params.duration, event_word),
        gold=Gold("FALSE" if exists else "TRUE"),
        sd=frozenset(),
        event_kind=params.event_kind,
        threshold=params.threshold,
        labels={"detect": exists, "avoid": not exists},
    )
    q1 = _with_sd(kg, q1)
    out.append(q1)

    if exists:
        early = a_early(kg, path, t, params.duration, params.horizon, params.event_kind, params.threshold)
        late = a_late(kg, path, t, params.duration, params.horizon, params.event_kind, params.threshold)
        q2 = QAItem(
            id=f"qa:{base}:Q2",
            kind=QAKind.Q2,
            anchor=t,
            duration=params.duration,
            horizon=params.horizon,
            location_path=path,
            question_text=_q2_text(event_word),
            gold=Gold("TIME", early) if early is not None else Gold("NO_ANSWER"),
            sd=frozenset(),
            event_kind=params.event_kind,
            threshold=params.threshold,
        )
        q3 = QAItem(
            id=f"qa:{base}:Q3",
            kind=QAKind.Q3,
            anchor=t,
            duration=params.duration,
            horizon=params.horizon,
            location_path=path,
            question_text=_q3_text(event_word),
            gold=Gold("TIME", late) if late is not None else Gold("NO_ANSWER"),
            sd=frozenset(),
            event_kind=params.event_kind,
            threshold=params.threshold,
        )
        out.append(_with_sd(kg, q2))
        out.append(_with_sd(kg, q3))
    return out


def _with_sd(kg: TemporalKG, item: QAItem) -> QAItem:
    sd = minimal_evidence(kg, item)
    return QAItem(
        id=item.id,
        kind=item.kind,
        anchor=item.anchor,
        duration=item.duration,
        horizon=item.horizon,
        location_path=item.location_path,
        question_text=item.question_text,
        gold=item.gold,
        sd=frozenset(sd),
        event_kind=item.event_kind,
        threshold=item.threshold,
        labels=item.labels,
    )


# -- minimal evidence (standard data) --------------------------------------------


def _region(item: QAItem) -> TimeRef:
    return TimeRef(item.anchor - item.horizon - item.duration, item.anchor + item.horizon + item.duration)


def _region_facts(kg: TemporalKG, item: QAItem):
    """All candidate observations an SD may draw from, keyed by provenance."""
    facts: dict[str, tuple[str, TimeRef, bool]] = {}
    for loc in item.location_path:
        for time_ref, prov, violating in _observations(
            kg, loc, _region(item), item.event_kind, item.threshold
        ):
            facts[prov] = (loc, time_ref, violating)
    return facts


def _candidates(item: QAItem, slot: int) -> list[int]:
    """Candidate window starts in direction order (nearest first)."""
    if item.kind is QAKind.Q3:
        return list(range(item.anchor + slot, item.anchor + item.horizon, slot))
    if item.kind is QAKind.Q2:
        return list(range(item.anchor - slot, item.anchor - item.horizon, -slot))
    return []


def sd_solves(kg: TemporalKG, item: QAItem, sd: frozenset[str] | set[str]) -> bool:
    """Can the gold label be derived from exactly these facts?

    TIME labels need the decisive window certified (every slot covered and
    clean) and a violating witness inside every nearer candidate window.
    NO_ANSWER needs a witness for every candidate the corpus fully covers;
    windows the corpus itself leaves uncovered are uncertifiable regardless
    of retrieved evidence.
    """
    slot = kg.slot_duration
    facts = _region_facts(kg, item)
    chosen = [(prov, *facts[prov]) for prov in sd if prov in facts]

    def covered_clean(window: TimeRef) -> bool:
        starts = slot_starts(window, slot)
        for loc in item.location_path:
            got = set()
            for prov, floc, ftime, fviol in chosen:
                if floc != loc:
                    continue
                if fviol and within(ftime, window):
                    return False
                for s in starts:
                    if ftime.start <= s and ftime.end >= s + slot:
                        got.add(s)
            if len(got) < len(starts):
                return False
        return True

    def witnessed(window: TimeRef) -> bool:
        return any(fviol and within(ftime, window) for _, _, ftime, fviol in chosen)

    if item.kind is QAKind.Q1:
        window = item.window()
        if item.gold.label == "FALSE":
            return witnessed(window)
        return covered_clean(window)

    if item.gold.label == "NO_NEED":
        return covered_clean(item.window())

    if item.gold.label == "TIME":
        assert item.gold.time is not None
        decisive = TimeRef(item.gold.time, item.gold.time + item.duration)
        if not covered_clean(decisive):
            return False
        for start in _candidates(item, slot):
            if start == item.gold.time:
                break
            if not witnessed(TimeRef(start, start + item.duration)):
                return False
        return True

    # NO_ANSWER: reject every candidate that the corpus could certify.
    for start in _candidates(item, slot):
        window = TimeRef(start, start + item.duration)
        kg_covered, _ = _window_state(kg, item.location_path, window, item.event_kind, item.threshold)
        if kg_covered and not witnessed(window):
            return False
    return True


def minimal_evidence(kg: TemporalKG, item: QAItem) -> set[str]:
    """Build an irreducible evidence set and verify it by the removal test.

    Seeds: for existence proofs one violating witness; for feasibility
    proofs every slot observation of the decisive window; for nearest-window
    labels additionally one violating witness per rejected intermediate
    window (a greedy far-reaching witness covers a run of them). A pruning
    pass then drops any member whose removal leaves the label derivable, so
    every surviving element is necessary.
    """
    if item.gold.label not in {"TRUE", "FALSE", "TIME", "NO_NEED", "NO_ANSWER"}:
        raise NoGoldLabel(item.id)
    slot = kg.slot_duration
    facts = _region_facts(kg, item)

    def window_provs(window: TimeRef, only_violating: bool = False) -> list[str]:
        out = []
        for prov, (_, ftime, fviol) in sorted(facts.items()):
            if only_violating:
                if fviol and within(ftime, window):
                    out.append(prov)
            elif _covers_some(ftime, window, slot):
                out.append(prov)
        return out

    sd: set[str] = set()
    if item.kind is QAKind.Q1:
        if item.gold.label == "FALSE":
            witnesses = sorted(
                (facts[p][1].start, p) for p in window_provs(item.window(), only_violating=True)
            )
            if not witnesses:
                raise NoGoldLabel(f"{item.id}: no violating witness for FALSE")
            sd.add(witnesses[0][1])
        else:
            sd.update(window_provs(item.window()))
    elif item.gold.label in {"TIME", "NO_ANSWER", "NO_NEED"}:
        if item.gold.label == "NO_NEED":
            sd.update(window_provs(item.window()))
        else:
            if item.gold.label == "TIME":
                assert item.gold.time is not None
                decisive = TimeRef(item.gold.time, item.gold.time + item.duration)
                sd.update(window_provs(decisive))
            for start in _candidates(item, slot):
                if item.gold.label == "TIME" and start == item.gold.time:
                    break
                window = TimeRef(start, start + item.duration)
                if any(facts[p][2] and within(facts[p][1], window) for p in sd):
                    continue  # already witnessed by a chosen violating fact
                witnesses = window_provs(window, only_violating=True)
                if witnesses:
                    # Farthest-reaching witness covers the longest candidate run.
                    if item.kind is QAKind.Q3:
                        best = max(witnesses, key=lambda p: (facts[p][1].end, p))
                    else:
                        best = min(witnesses, key=lambda p: (facts[p][1].start, p))
                    sd.add(best)

    if not sd_solves(kg, item, sd):
        raise NoGoldLabel(f"{item.id}: seed evidence does not derive the gold label")

    for prov in sorted(sd):
        trimmed = sd - {prov}
        if sd_solves(kg, item, trimmed):
            sd = trimmed
    return sd


def _covers_some(time_ref: TimeRef, window: TimeRef, slot: int) -> bool:
    return any(
        time_ref.start <= s and time_ref.end >= s + slot for s in slot_starts(window, slot)
    )


# -- planted instances for the cost/coverage analyses ------------------------------


@dataclass
class PlantedInstance:
    """Synthetic corpus with a known nearest-feasible offset d*."""

    kg: TemporalKG
    query: QueryIntent
    d_star: int
    sd: frozenset[str]
    item: QAItem


def plant_offset_instance(
    d_star: int,
    slot: int = 1800,
    dt_slots: int = 1,
    horizon_slots: int = 16,
    seed: int = 0,
    noise_rate: float = 0.0,
    start: int = 1704067200,
) -> PlantedInstance:
    """Corpus where the first feasible window sits exactly d* shifts away.

    Slots at offsets 0..d*-1 from the anchor violate, the decisive window is
    clean, and Bernoulli noise may populate slots beyond it. Anchored so the
    whole horizon is covered.
    """
    if d_star < 1 or d_star + dt_slots > horizon_slots:
        raise ValueError("need 1 <= d_star and d_star + dt_slots <= horizon_slots")
    rng = random.Random(seed)
    loc = "P00"
    dt = dt_slots * slot
    anchor = start + 4 * slot  # a little pre-anchor coverage
    span_slots = 4 + horizon_slots + dt_slots + 1

    records = []
    for k in range(span_slots):
        ts = start + k * slot
        offset = (ts - anchor) // slot
        if 0 <= offset < d_star:
            measure = round(rng.uniform(1.0, 9.9), 1)
        elif d_star <= offset < d_star + dt_slots:
            measure = 0.0
        elif offset >= d_star + dt_slots and rng.random() < noise_rate:
            measure = round(rng.uniform(1.0, 9.9), 1)
        else:
            measure = 0.0
        records.append(
            RawRecord(date=ts, location_id=loc, location_name=loc, measure=measure,
                      measure_kind=MeasureKind.RAIN)
        )
    kg = build_kg(records, slot_duration=slot)

    query = QueryIntent(
        kind=QueryKind.Q3_EARLIEST_AFTER,
        anchor=TimeRef.point(anchor),
        duration=dt,
        horizon=horizon_slots * slot,
        location_path=(loc,),
    )
    item = QAItem(
        id=f"planted:{d_star}:{seed}",
        kind=QAKind.Q3,
        anchor=anchor,
        duration=dt,
        horizon=horizon_slots * slot,
        location_path=(loc,),
        question_text="planted nearest-feasible-offset instance",
        gold=Gold("TIME", anchor + d_star * slot),
        sd=frozenset(),
    )
    item = _with_sd(kg, item)
    return PlantedInstance(kg=kg, query=query, d_star=d_star, sd=item.sd, item=item)


def make_benchmark_kg(event_rate: float, seed: int, locations: int = 1, span_slots: int = 96,
                      slot: int = 1800) -> TemporalKG:
    """Synthetic full-coverage corpus used by the oracle-equivalence suites."""
    params = SynthParams(
        locations=locations, span_slots=span_slots, slot_duration=slot,
        event_rate=event_rate, seed=seed,
    )
    records = synth_corpus(params)
    return build_kg(records, slot_duration=slot, near_edges=synth_near_edges(params))


# -- jsonl io ------------------------------------------------------------------


def dump_items(items: list[QAItem], fh: IO[str]) -> None:
    for item in items:
        fh.write(json.dumps(item.to_json(), sort_keys=True) + "\n")


def load_items(fh: IO[str]) -> list[QAItem]:
    return [QAItem.from_json(json.loads(line)) for line in fh if line.strip()]
