"""Time-aware retrieval: window x radius x pattern filtering with dedup and budget."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .errors import BudgetExceeded
from .graph import TemporalKG
from .intervals import (
    AFTER_FAMILY,
    BEFORE_FAMILY,
    OVERLAP_FAMILY,
    WITHIN_FAMILY,
    AllenRelation,
    TimeRef,
    window_relation,
)


class Predicate(str, Enum):
    NO_EVENT_IN_WINDOW = "NO_EVENT_IN_WINDOW"
    EVENT_EXISTS_IN_WINDOW = "EVENT_EXISTS_IN_WINDOW"
    NEAREST_FEASIBLE_BEFORE = "NEAREST_FEASIBLE_BEFORE"
    NEAREST_FEASIBLE_AFTER = "NEAREST_FEASIBLE_AFTER"


class RelationFamily(str, Enum):
    BEFORE = "BEFORE"
    AFTER = "AFTER"
    DURING = "DURING"
    OVERLAPS = "OVERLAPS"


_FAMILIES: dict[RelationFamily, frozenset[AllenRelation]] = {
    RelationFamily.BEFORE: BEFORE_FAMILY,
    RelationFamily.AFTER: AFTER_FAMILY,
    RelationFamily.DURING: WITHIN_FAMILY,
    RelationFamily.OVERLAPS: OVERLAP_FAMILY,
}


@dataclass(frozen=True)
class RetrievalPattern:
    """Structural + temporal predicate a candidate observation must satisfy.

    `threshold` is the event-defining cutoff; None defers to the graph's
    per-(kind, location) table. The feasibility predicates keep sub-cutoff
    observations in batches - the verifier needs positive slot coverage, and
    the cutoff classifies each entry as violating instead of filtering it.
    """

    predicate: Predicate
    event_kind: str = "rain"
    threshold: float | None = None
    required_relation: RelationFamily | None = None

    def __post_init__(self) -> None:
        if self.threshold is not None and self.threshold < 0:
            raise ValueError("threshold must be >= 0")

    def family(self) -> frozenset[AllenRelation]:
        if self.required_relation is not None:
            return _FAMILIES[self.required_relation]
        return WITHIN_FAMILY

    def cutoff(self, kg: TemporalKG, loc: str) -> float:
        if self.threshold is not None:
            return self.threshold
        return kg.threshold(self.event_kind, loc)

    def query_region(self, anchor: TimeRef) -> TimeRef:
        """Index region to scan: the window itself, or the adjacent span of
        equal length when the pattern demands BEFORE/AFTER evidence."""
        if self.required_relation is RelationFamily.BEFORE:
            return TimeRef(anchor.start - max(anchor.duration, 1), anchor.start)
        if self.required_relation is RelationFamily.AFTER:
            return TimeRef(anchor.end, anchor.end + max(anchor.duration, 1))
        return anchor


@dataclass(frozen=True)
class RetrievalParams:
    """Window behaviour, spatial reach, and the per-run triple budget."""

    radius: int = 0
    hop_cap: int = 2
    budget: int = 512

    def __post_init__(self) -> None:
        if self.budget <= 0:
            raise ValueError("budget must be positive")
        if self.hop_cap < 0 or self.radius < 0:
            raise ValueError("radius/hop_cap must be >= 0")

    @property
    def effective_radius(self) -> int:
        return min(self.radius, self.hop_cap)


@dataclass(frozen=True)
class Observation:
    """One resolved event bundle: the three triples of a record, flattened."""

    event_id: str
    event_kind: str
    time: TimeRef
    loc: str
    value: float
    violating: bool
    hops: int
    provenance: str

    @property
    def key(self) -> tuple[str, int, str]:
        return (self.event_id, self.time.start, self.loc)


@dataclass
class RetrievalBatch:
    """Evidence emitted by one retrieval call around one anchor."""

    triples: list[Observation]
    anchor: TimeRef
    step: int

    def __len__(self) -> int:
        return len(self.triples)


def psi(
    kg: TemporalKG,
    anchor: TimeRef,
    loc: str,
    p: RetrievalPattern,
    params: RetrievalParams,
    seen: set[tuple[str, int, str]],
    step: int = 0,
) -> RetrievalBatch:
    """Materialize evidence around (anchor, loc) under pattern p.

    Returns every stored observation whose time matches the pattern family
    against the anchor window, whose location is within the hop radius, and
    whose kind matches - minus entries already in `seen`. New keys are added
    to `seen` (one owner per run). Raises BudgetExceeded when emitting the
    batch would push the run across `params.budget` total triples.
    """
    family = p.family()
    region = p.query_region(anchor)
    out: list[Observation] = []
    for location, hops in kg.near_with_hops(loc, params.effective_radius):
        cutoff = p.cutoff(kg, location)
        for time_ref, event_id, value in kg.window_query(location, region):
            if kg.node(event_id).event_kind != p.event_kind:
                continue
            if window_relation(time_ref, anchor) not in family:
                continue
            obs = Observation(
                event_id=event_id,
                event_kind=p.event_kind,
                time=time_ref,
                loc=location,
                value=value,
                violating=value > cutoff,
                hops=hops,
                provenance=kg.node(event_id).observation or event_id,
            )
            if obs.key in seen:
                continue
            out.append(obs)
    if len(seen) + len(out) > params.budget:
        raise BudgetExceeded(f"run would exceed budget of {params.budget} triples")
    ordered = prioritize(out, anchor, loc)
    for obs in ordered:
        seen.add(obs.key)
    return RetrievalBatch(triples=ordered, anchor=anchor, step=step)


def prioritize(candidates: list[Observation], anchor: TimeRef, loc: str) -> list[Observation]:
    """Stable three-tier ordering of one batch.

    Exact anchor match first, then within-window entries, then nearest
    neighbours in time (out-of-window entries admitted by a BEFORE/AFTER
    pattern). Ties break by hop distance to `loc`, then by earlier start.
    """

    def tier_key(obs: Observation) -> tuple:
        rel = window_relation(obs.time, anchor)
        if rel is AllenRelation.EQUALS:
            tier, dist = 0, 0
        elif rel in WITHIN_FAMILY or rel in OVERLAP_FAMILY:
            tier, dist = 1, 0
        else:
            gap = max(anchor.start - obs.time.end, obs.time.start - anchor.end, 0)
            tier, dist = 2, gap
        return (tier, dist, obs.hops, obs.time.start, obs.event_id)

    return sorted(candidates, key=tier_key)


@dataclass
class Evidence:
    """Accumulated deduplicated observations across a run (plus seeds)."""

    entries: dict[tuple[str, int, str], Observation] = field(default_factory=dict)
    batches: list[RetrievalBatch] = field(default_factory=list)
    last_anchor: TimeRef | None = None

    def add_batch(self, batch: RetrievalBatch) -> None:
        self.batches.append(batch)
        self.last_anchor = batch.anchor
        for obs in batch.triples:
            self.entries.setdefault(obs.key, obs)

    def observations(self) -> list[Observation]:
        return sorted(self.entries.values(), key=lambda o: (o.time.start, o.loc, o.event_id))

    def seen_keys(self) -> set[tuple[str, int, str]]:
        return set(self.entries.keys())

    def provenance_ids(self) -> set[str]:
        return {obs.provenance for obs in self.entries.values()}

    def conflicted_cells(self) -> set[tuple[str, int, str]]:
        """(kind, slot start, loc) cells holding mutually exclusive values."""
        values: dict[tuple[str, int, str], set[float]] = {}
        for obs in self.entries.values():
            values.setdefault((obs.event_kind, obs.time.start, obs.loc), set()).add(obs.value)
        return {cell for cell, vals in values.items() if len(vals) > 1}

    def clean_observations(self) -> list[Observation]:
        """Observations outside conflicted cells (coverage-relevant view)."""
        conflicted = self.conflicted_cells()
        return [
            obs
            for obs in self.observations()
            if (obs.event_kind, obs.time.start, obs.loc) not in conflicted
        ]

    def copy(self) -> Evidence:
        clone = Evidence(entries=dict(self.entries), batches=list(self.batches))
        clone.last_anchor = self.last_anchor
        return clone
