"""Typed temporal multigraph: nodes, triples, indexes, and the record mapper."""
from __future__ import annotations

import json
from bisect import bisect_left
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable

import numpy as np

from ._kernels import scan_intersecting
from .errors import MalformedRecord, UnknownLocation
from .intervals import TimeRef

NO_EVENT_TAG = "no-event observation"


class NodeKind(str, Enum):
    TIME = "TIME"
    LOCATION = "LOCATION"
    EVENT = "EVENT"
    VALUE = "VALUE"


class Relation(str, Enum):
    OCCURS_AT = "occursAt"
    AT_LOCATION = "atLocation"
    HAS_VALUE = "hasValue"
    BEFORE = "before"
    AFTER = "after"
    DURING = "during"
    OVERLAPS = "overlaps"
    NEAR = "near"


# Legal (head kind, tail kind) per relation.
_ENDPOINTS = {
    Relation.OCCURS_AT: (NodeKind.EVENT, NodeKind.TIME),
    Relation.AT_LOCATION: (NodeKind.EVENT, NodeKind.LOCATION),
    Relation.HAS_VALUE: (NodeKind.EVENT, NodeKind.VALUE),
    Relation.BEFORE: (NodeKind.TIME, NodeKind.TIME),
    Relation.AFTER: (NodeKind.TIME, NodeKind.TIME),
    Relation.DURING: (NodeKind.TIME, NodeKind.TIME),
    Relation.OVERLAPS: (NodeKind.TIME, NodeKind.TIME),
    Relation.NEAR: (NodeKind.LOCATION, NodeKind.LOCATION),
}


@dataclass(frozen=True)
class Node:
    """Graph node; payload fields are populated per kind."""

    id: str
    kind: NodeKind
    time: TimeRef | None = None  # TIME
    name: str | None = None  # LOCATION
    lat: float | None = None
    lon: float | None = None
    event_kind: str | None = None  # EVENT phenomenon ("rain", "volume")
    tag: str | None = None  # EVENT: "event" or the no-event tag
    observation: str | None = None  # EVENT: source record id
    magnitude: float | None = None  # VALUE
    unit: str | None = None  # VALUE


@dataclass(frozen=True)
class Triple:
    head: str
    rel: Relation
    tail: str
    provenance: str


class MeasureKind(str, Enum):
    RAIN = "RAIN"
    VOLUME = "VOLUME"


_UNITS = {MeasureKind.RAIN: "mm", MeasureKind.VOLUME: "vehicles"}
_EVENT_KINDS = {MeasureKind.RAIN: "rain", MeasureKind.VOLUME: "volume"}


@dataclass(frozen=True)
class RawRecord:
    """One normalized observation row (slot-aligned, non-negative measure)."""

    date: int  # UTC epoch seconds, slot-aligned
    location_id: str
    location_name: str
    measure: float
    measure_kind: MeasureKind
    direction: str | None = None

    @property
    def record_id(self) -> str:
        tail = f":{self.direction}" if self.direction else ""
        return f"{self.location_id}:{self.date}:{self.measure_kind.value}:{self.measure}{tail}"


@dataclass
class _LocIndex:
    """Per-location, start-sorted view of event observations."""

    starts: np.ndarray
    ends: np.ndarray
    event_ids: list[str]
    values: np.ndarray
    max_span: int


class FrozenGraphError(RuntimeError):
    """Mutation attempted on a frozen graph."""


class TemporalKG:
    """Immutable-after-build store for time/location/event/value nodes.

    Construction happens through `map_record`/`add_near`/`set_threshold`
    followed by `freeze()`; after that the graph only serves reads and is
    safe for concurrent readers. Derived temporal edges (before/during/
    overlaps between time nodes) are computed on demand by retrieval, never
    materialized here.
    """

    def __init__(self, slot_duration: int) -> None:
        if slot_duration <= 0:
            raise ValueError("slot_duration must be positive")
        self.slot_duration = slot_duration
        self._nodes: dict[str, Node] = {}
        self._edges: list[Triple] = []
        self._edge_keys: set[tuple[str, str, str]] = set()
        self._near: dict[str, set[str]] = {}
        self._events_by_loc: dict[str, list[tuple[TimeRef, str, float]]] = {}
        self._thresholds: dict[tuple[str, str], float] = {}
        self._index: dict[str, _LocIndex] = {}
        self._frozen = False

    # -- construction ------------------------------------------------------

    def _check_mutable(self) -> None:
        if self._frozen:
            raise FrozenGraphError("graph is frozen; build a new one instead")

    def _add_node(self, node: Node) -> Node:
        existing = self._nodes.get(node.id)
        if existing is not None:
            return existing
        self._check_mutable()
        self._nodes[node.id] = node
        return node

    def _add_triple(self, triple: Triple) -> bool:
        """Insert unless an identical (head, rel, tail) edge exists."""
        key = (triple.head, triple.rel.value, triple.tail)
        if key in self._edge_keys:
            return False
        self._check_mutable()
        head_kind, tail_kind = _ENDPOINTS[triple.rel]
        if self._nodes[triple.head].kind is not head_kind or self._nodes[triple.tail].kind is not tail_kind:
            raise ValueError(f"illegal endpoints for {triple.rel.value}")
        self._edge_keys.add(key)
        self._edges.append(triple)
        return True

    def add_near(self, loc_a: str, loc_b: str, provenance: str = "near-edge") -> None:
        """Declare symmetric spatial proximity between two locations."""
        self._check_mutable()
        for loc in (loc_a, loc_b):
            if loc not in self._nodes:
                self._add_node(Node(id=loc, kind=NodeKind.LOCATION, name=loc))
        self._add_triple(Triple(loc_a, Relation.NEAR, loc_b, provenance))
        self._near.setdefault(loc_a, set()).add(loc_b)
        self._near.setdefault(loc_b, set()).add(loc_a)

    def set_threshold(self, event_kind: str, location_id: str, cutoff: float) -> None:
        """Event-defining cutoff: values strictly above it count as events."""
        self._check_mutable()
        self._thresholds[(event_kind, location_id)] = cutoff

    def freeze(self) -> TemporalKG:
        """Sort per-location observations and build the time index."""
        if self._frozen:
            return self
        for loc, entries in self._events_by_loc.items():
            entries.sort(key=lambda item: (item[0].start, item[0].end, item[1]))
            starts = np.fromiter((t.start for t, _, _ in entries), dtype=np.int64, count=len(entries))
            ends = np.fromiter((t.end for t, _, _ in entries), dtype=np.int64, count=len(entries))
            values = np.fromiter((v for _, _, v in entries), dtype=np.float64, count=len(entries))
            span = int((ends - starts).max()) if len(entries) else 0
            self._index[loc] = _LocIndex(starts, ends, [e for _, e, _ in entries], values, span)
        self._frozen = True
        return self

    # -- accessors ----------------------------------------------------------

    @property
    def frozen(self) -> bool:
        return self._frozen

    def node(self, node_id: str) -> Node:
        return self._nodes[node_id]

    def has_node(self, node_id: str) -> bool:
        return node_id in self._nodes

    def nodes(self) -> Iterable[Node]:
        return self._nodes.values()

    def edges(self) -> list[Triple]:
        return list(self._edges)

    def locations(self) -> list[str]:
        return sorted(n.id for n in self._nodes.values() if n.kind is NodeKind.LOCATION)

    def threshold(self, event_kind: str, location_id: str) -> float:
        return self._thresholds.get((event_kind, location_id), 0.0)

    def thresholds(self) -> dict[tuple[str, str], float]:
        return dict(self._thresholds)

    def time_coverage(self) -> TimeRef | None:
        """Half-open hull of all observation slots, or None when empty."""
        lo: int | None = None
        hi: int | None = None
        for idx in self._index.values():
            if len(idx.starts) == 0:
                continue
            lo = int(idx.starts[0]) if lo is None else min(lo, int(idx.starts[0]))
            hi = int(idx.ends.max()) if hi is None else max(hi, int(idx.ends.max()))
        if lo is None or hi is None:
            return None
        return TimeRef(lo, hi)

    def stats(self) -> dict:
        """Entity/relation/record counts plus the covered period."""
        events = sum(1 for n in self._nodes.values() if n.kind is NodeKind.EVENT)
        coverage = self.time_coverage()
        return {
            "period": [coverage.start, coverage.end] if coverage else None,
            "entities": len(self._nodes),
            "relations": len(self._edges),
            "records": events,
        }

    # -- queries -------------------------------------------------------------

    def window_query(self, loc: str, w: TimeRef) -> list[tuple[TimeRef, str, float]]:
        """Observations at `loc` whose time intersects `w`, sorted by start.

        Intersection treats stored slots as half-open; `w` may be a point.
        """
        if loc not in self._nodes or self._nodes[loc].kind is not NodeKind.LOCATION:
            raise UnknownLocation(loc)
        idx = self._index.get(loc)
        if idx is None or len(idx.starts) == 0:
            return []
        w_start_c, w_end_c = w.closed()
        lo = bisect_left(idx.starts, w_start_c - idx.max_span)
        hits = scan_intersecting(idx.starts, idx.ends, w_start_c, w_end_c, lo)
        return [
            (TimeRef(int(idx.starts[i]), int(idx.ends[i])), idx.event_ids[i], float(idx.values[i]))
            for i in hits
        ]

    def near(self, loc: str, r: int | None) -> set[str]:
        """Locations within `r` hops of `loc` (inclusive); None = unbounded."""
        if loc not in self._nodes or self._nodes[loc].kind is not NodeKind.LOCATION:
            raise UnknownLocation(loc)
        if r is not None and r < 0:
            raise ValueError("hop count must be >= 0")
        return {node for node, _ in self.near_with_hops(loc, r)}

    def near_with_hops(self, loc: str, r: int | None) -> list[tuple[str, int]]:
        """BFS over near-edges returning (location, hop distance) pairs."""
        if loc not in self._nodes or self._nodes[loc].kind is not NodeKind.LOCATION:
            raise UnknownLocation(loc)
        seen = {loc: 0}
        queue = deque([loc])
        while queue:
            current = queue.popleft()
            depth = seen[current]
            if r is not None and depth >= r:
                continue
            for neighbor in self._near.get(current, ()):
                if neighbor not in seen:
                    seen[neighbor] = depth + 1
                    queue.append(neighbor)
        return sorted(seen.items(), key=lambda kv: (kv[1], kv[0]))

    def resolve_location(self, ref: str) -> str:
        """Map a location id or display name to the node id."""
        if ref in self._nodes and self._nodes[ref].kind is NodeKind.LOCATION:
            return ref
        for node in self._nodes.values():
            if node.kind is NodeKind.LOCATION and node.name == ref:
                return node.id
        raise UnknownLocation(ref)

    def event_observation(self, event_id: str) -> tuple[TimeRef, str, float, Node]:
        """Resolve an event node to its (time, location, value, node) bundle."""
        node = self._nodes[event_id]
        time_ref = loc = value = None
        for triple in self._edges:
            if triple.head != event_id:
                continue
            if triple.rel is Relation.OCCURS_AT:
                time_ref = self._nodes[triple.tail].time
            elif triple.rel is Relation.AT_LOCATION:
                loc = triple.tail
            elif triple.rel is Relation.HAS_VALUE:
                value = self._nodes[triple.tail].magnitude
        if time_ref is None or loc is None or value is None:
            raise KeyError(f"event {event_id} lacks its three edges")
        return time_ref, loc, value, node

    # -- internal hook used by map_record ------------------------------------

    def _register_event(self, loc: str, time_ref: TimeRef, event_id: str, value: float) -> None:
        self._events_by_loc.setdefault(loc, []).append((time_ref, event_id, value))


def map_record(record: RawRecord, kg: TemporalKG) -> list[Triple]:
    """Deterministically map one record to (event, occursAt/atLocation/hasValue) triples.

    Idempotent: an identical record maps to the same node ids, so re-mapping
    emits no new triples. Zero-measure rows become explicit no-event
    observations so window coverage stays provable.
    """
    if record.date % kg.slot_duration != 0:
        raise MalformedRecord(f"date {record.date} not aligned to {kg.slot_duration}s slots")
    if record.measure < 0:
        raise MalformedRecord(f"negative measure {record.measure}")

    kind = _EVENT_KINDS[record.measure_kind]
    slot = TimeRef(record.date, record.date + kg.slot_duration)
    cutoff = kg.threshold(kind, record.location_id)
    tag = kind if record.measure > cutoff else NO_EVENT_TAG

    time_node = kg._add_node(Node(id=f"t:{slot.start}:{slot.end}", kind=NodeKind.TIME, time=slot))
    loc_node = kg._add_node(
        Node(id=record.location_id, kind=NodeKind.LOCATION, name=record.location_name)
    )
    value_node = kg._add_node(
        Node(
            id=f"v:{record.measure}:{_UNITS[record.measure_kind]}",
            kind=NodeKind.VALUE,
            magnitude=record.measure,
            unit=_UNITS[record.measure_kind],
        )
    )
    event_id = f"e:{record.record_id}"
    fresh = not kg.has_node(event_id)
    kg._add_node(
        Node(
            id=event_id,
            kind=NodeKind.EVENT,
            event_kind=kind,
            tag=tag,
            observation=record.record_id,
        )
    )

    emitted = []
    for rel, tail in (
        (Relation.OCCURS_AT, time_node.id),
        (Relation.AT_LOCATION, loc_node.id),
        (Relation.HAS_VALUE, value_node.id),
    ):
        triple = Triple(event_id, rel, tail, record.record_id)
        if kg._add_triple(triple):
            emitted.append(triple)
    if fresh:
        kg._register_event(loc_node.id, slot, event_id, record.measure)
    return emitted


# -- serialization -----------------------------------------------------------


def dump_jsonl(kg: TemporalKG, fh: IO[str]) -> None:
    """Write header, node table, then one object per triple (canonical order)."""
    header = {
        "type": "header",
        "slot_duration": kg.slot_duration,
        "thresholds": [
            {"event_kind": k, "location": loc, "cutoff": cutoff}
            for (k, loc), cutoff in sorted(kg.thresholds().items())
        ],
    }
    fh.write(json.dumps(header, sort_keys=True) + "\n")
    for node in sorted(kg.nodes(), key=lambda n: (n.kind.value, n.id)):
        payload: dict = {"type": "node", "id": node.id, "kind": node.kind.value}
        if node.kind is NodeKind.TIME and node.time is not None:
            payload.update(start=node.time.start, end=node.time.end)
        elif node.kind is NodeKind.LOCATION:
            payload.update(name=node.name)
            if node.lat is not None:
                payload.update(lat=node.lat, lon=node.lon)
        elif node.kind is NodeKind.EVENT:
            payload.update(event_kind=node.event_kind, tag=node.tag, observation=node.observation)
        elif node.kind is NodeKind.VALUE:
            payload.update(magnitude=node.magnitude, unit=node.unit)
        fh.write(json.dumps(payload, sort_keys=True) + "\n")
    for triple in sorted(kg.edges(), key=lambda t: (t.rel.value, t.head, t.tail, t.provenance)):
        fh.write(
            json.dumps(
                {
                    "type": "triple",
                    "head": triple.head,
                    "rel": triple.rel.value,
                    "tail": triple.tail,
                    "provenance": triple.provenance,
                },
                sort_keys=True,
            )
            + "\n"
        )


def load_jsonl(fh: IO[str]) -> TemporalKG:
    """Rebuild a frozen graph from its JSON-lines dump."""
    kg: TemporalKG | None = None
    nodes: dict[str, dict] = {}
    triples: list[dict] = []
    for line in fh:
        line = line.strip()
        if not line:
            continue
        obj = json.loads(line)
        kind = obj.get("type")
        if kind == "header":
            kg = TemporalKG(slot_duration=int(obj["slot_duration"]))
            for entry in obj.get("thresholds", []):
                kg.set_threshold(entry["event_kind"], entry["location"], float(entry["cutoff"]))
        elif kind == "node":
            nodes[obj["id"]] = obj
        elif kind == "triple":
            triples.append(obj)
        else:
            raise ValueError(f"unknown line type {kind!r}")
    if kg is None:
        raise ValueError("dump has no header line")

    for obj in nodes.values():
        node_kind = NodeKind(obj["kind"])
        node = Node(
            id=obj["id"],
            kind=node_kind,
            time=TimeRef(obj["start"], obj["end"]) if node_kind is NodeKind.TIME else None,
            name=obj.get("name"),
            lat=obj.get("lat"),
            lon=obj.get("lon"),
            event_kind=obj.get("event_kind"),
            tag=obj.get("tag"),
            observation=obj.get("observation"),
            magnitude=obj.get("magnitude"),
            unit=obj.get("unit"),
        )
        kg._add_node(node)

    # First pass registers events into the time index via their edges.
    occurs: dict[str, str] = {}
    at_loc: dict[str, str] = {}
    has_val: dict[str, str] = {}
    for obj in triples:
        rel = Relation(obj["rel"])
        if rel is Relation.NEAR:
            kg.add_near(obj["head"], obj["tail"], obj["provenance"])
            continue
        kg._add_triple(Triple(obj["head"], rel, obj["tail"], obj["provenance"]))
        if rel is Relation.OCCURS_AT:
            occurs[obj["head"]] = obj["tail"]
        elif rel is Relation.AT_LOCATION:
            at_loc[obj["head"]] = obj["tail"]
        elif rel is Relation.HAS_VALUE:
            has_val[obj["head"]] = obj["tail"]
    for event_id, time_id in occurs.items():
        loc = at_loc.get(event_id)
        value_id = has_val.get(event_id)
        if loc is None or value_id is None:
            raise ValueError(f"event {event_id} lacks atLocation/hasValue edges")
        time_ref = kg.node(time_id).time
        magnitude = kg.node(value_id).magnitude
        assert time_ref is not None and magnitude is not None
        kg._register_event(loc, time_ref, event_id, magnitude)
    return kg.freeze()
