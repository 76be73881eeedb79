"""Corpus parsing, normalization/dedup, graph construction, synthetic corpora."""
from __future__ import annotations

import csv
import random
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from zoneinfo import ZoneInfo

from .errors import InvalidParams, SchemaMismatch
from .graph import MeasureKind, RawRecord, TemporalKG, map_record

_DATE_FORMATS = (
    "%d-%b-%Y %H:%M",
    "%Y-%m-%d %H:%M:%S",
    "%Y-%m-%dT%H:%M:%S",
    "%Y-%m-%d %H:%M",
    "%d/%m/%Y %H:%M",
)


@dataclass(frozen=True)
class CorpusSchema:
    """Column layout of one supported CSV corpus."""

    name: str
    date_column: str
    measure_column: str
    measure_kind: MeasureKind
    location_id_column: str | None
    location_name_column: str | None
    direction_column: str | None
    default_slot: int
    fallback_location: str | None = None


# Extra columns (humidity, sunlight, ...) are ignored silently. The TFNSW
# layout has no station column of its own; an optional one is honoured and
# the direction is folded into the location identity so that northbound and
# southbound counters stay distinct spatial entities.
SCHEMAS: dict[str, CorpusSchema] = {
    "irish": CorpusSchema(
        name="irish",
        date_column="date",
        measure_column="rain",
        measure_kind=MeasureKind.RAIN,
        location_id_column="station ID",
        location_name_column="station",
        direction_column=None,
        default_slot=3600,
    ),
    "sydney": CorpusSchema(
        name="sydney",
        date_column="date",
        measure_column="rain",
        measure_kind=MeasureKind.RAIN,
        location_id_column="station ID",
        location_name_column="station",
        direction_column=None,
        default_slot=1800,
    ),
    "tfnsw": CorpusSchema(
        name="tfnsw",
        date_column="date",
        measure_column="volume",
        measure_kind=MeasureKind.VOLUME,
        location_id_column="station ID",
        location_name_column="station",
        direction_column="direction",
        default_slot=3600,
        fallback_location="tfnsw-counter",
    ),
}


@dataclass
class ParseResult:
    """Parsed records plus the exact row accounting."""

    records: list[RawRecord]
    rows_in: int = 0
    kept: int = 0
    duplicates: int = 0
    skipped: int = 0


def _parse_date(raw: str, tz: ZoneInfo) -> int | None:
    text = raw.strip()
    for fmt in _DATE_FORMATS:
        for candidate in (text, text.title()):
            try:
                dt = datetime.strptime(candidate, fmt)
            except ValueError:
                continue
            return int(dt.replace(tzinfo=tz).astimezone(timezone.utc).timestamp())
    return None


def parse_corpus(
    path: str | Path,
    schema: str | CorpusSchema,
    tz: str = "UTC",
    slot_duration: int | None = None,
) -> ParseResult:
    """Parse one CSV into normalized records.

    Rows with unparseable dates or negative measures are skipped and
    counted; duplicates (same location, timestamp, measure, direction) are
    dropped and counted. Timestamps are read in corpus-local time, converted
    to UTC, and floor-aligned to the slot grid.
    """
    spec = SCHEMAS[schema] if isinstance(schema, str) else schema
    slot = slot_duration or spec.default_slot
    zone = ZoneInfo(tz)

    path = Path(path)
    result = ParseResult(records=[])
    seen: set[tuple] = set()
    with path.open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        required = {spec.date_column, spec.measure_column}
        if spec.direction_column:
            required.add(spec.direction_column)
        missing = required - set(header)
        if missing:
            raise SchemaMismatch(f"{path.name}: missing columns {sorted(missing)}")

        for row in reader:
            result.rows_in += 1
            ts = _parse_date(row.get(spec.date_column) or "", zone)
            if ts is None:
                result.skipped += 1
                continue
            try:
                measure = float(row[spec.measure_column])
            except (TypeError, ValueError):
                result.skipped += 1
                continue
            if measure < 0:
                result.skipped += 1
                continue

            direction = None
            if spec.direction_column:
                direction = (row.get(spec.direction_column) or "").strip() or None
            loc_id = (row.get(spec.location_id_column or "") or "").strip()
            loc_name = (row.get(spec.location_name_column or "") or "").strip()
            if not loc_id:
                loc_id = loc_name or spec.fallback_location or ""
            if not loc_id:
                result.skipped += 1
                continue
            if direction:
                loc_id = f"{loc_id}|{direction}"
                loc_name = f"{loc_name or loc_id} ({direction})"
            record = RawRecord(
                date=ts - ts % slot,
                location_id=loc_id,
                location_name=loc_name or loc_id,
                measure=measure,
                measure_kind=spec.measure_kind,
                direction=direction,
            )
            key = (record.location_id, record.date, record.measure, record.direction)
            if key in seen:
                result.duplicates += 1
                continue
            seen.add(key)
            result.records.append(record)
            result.kept += 1
    result.records.sort(key=lambda r: (r.location_id, r.date, r.measure))
    return result


def merge_records(results: list[ParseResult]) -> list[RawRecord]:
    """Deterministic merge of independently parsed files."""
    merged: list[RawRecord] = []
    seen: set[tuple] = set()
    for result in results:
        for record in result.records:
            key = (record.location_id, record.date, record.measure, record.direction)
            if key not in seen:
                seen.add(key)
                merged.append(record)
    merged.sort(key=lambda r: (r.location_id, r.date, r.measure))
    return merged


def write_records_csv(records: list[RawRecord], path: str | Path, schema: str = "sydney") -> None:
    """Write records back out in a parseable schema (dedup fixed-point check)."""
    spec = SCHEMAS[schema]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        columns = [spec.date_column]
        if spec.location_id_column:
            columns.append(spec.location_id_column)
        if spec.location_name_column:
            columns.append(spec.location_name_column)
        if spec.direction_column:
            columns.append(spec.direction_column)
        columns.append(spec.measure_column)
        writer = csv.writer(fh)
        writer.writerow(columns)
        for record in records:
            stamp = datetime.fromtimestamp(record.date, tz=timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
            row = [stamp]
            loc_id = record.location_id
            if record.direction and loc_id.endswith(f"|{record.direction}"):
                loc_id = loc_id[: -len(record.direction) - 1]
            if spec.location_id_column:
                row.append(loc_id)
            if spec.location_name_column:
                row.append(record.location_name)
            if spec.direction_column:
                row.append(record.direction or "")
            row.append(str(record.measure))
            writer.writerow(row)


def build_kg(
    records: list[RawRecord],
    slot_duration: int,
    near_edges: list[tuple[str, str]] | None = None,
    traffic_percentile: float = 95.0,
) -> TemporalKG:
    """Build and freeze a graph: thresholds first, then the record mapper.

    Rain events are measure > 0. Traffic abnormality is volume strictly
    above the per-location percentile cutoff computed over the ingested
    span, so the cutoffs must exist before events are tagged.
    """
    kg = TemporalKG(slot_duration=slot_duration)

    volumes: dict[str, list[float]] = {}
    for record in records:
        if record.measure_kind is MeasureKind.VOLUME:
            volumes.setdefault(record.location_id, []).append(record.measure)
    for loc, values in sorted(volumes.items()):
        kg.set_threshold("volume", loc, _percentile(values, traffic_percentile))

    for record in records:
        map_record(record, kg)
    for loc_a, loc_b in near_edges or []:
        kg.add_near(loc_a, loc_b)
    return kg.freeze()


def _percentile(values: list[float], pct: float) -> float:
    """Nearest-rank percentile; deterministic and library-free."""
    ordered = sorted(values)
    if not ordered:
        return 0.0
    rank = max(1, int(round(pct / 100.0 * len(ordered) + 0.5)))
    return ordered[min(rank, len(ordered)) - 1]


@dataclass(frozen=True)
class SynthParams:
    """Parameters for the deterministic synthetic corpus generator."""

    locations: int = 1
    span_slots: int = 48
    slot_duration: int = 1800
    event_rate: float = 0.3
    seed: int = 0
    start: int = 1704067200  # 2024-01-01T00:00:00Z
    measure_kind: MeasureKind = MeasureKind.RAIN
    location_names: tuple[str, ...] = ()
    chain_near: bool = True


def synth_corpus(params: SynthParams) -> list[RawRecord]:
    """One record per (location, slot); measure > 0 with P(event_rate)."""
    if not 0.0 <= params.event_rate <= 1.0:
        raise InvalidParams("event_rate must lie in [0, 1]")
    if params.span_slots < 1:
        raise InvalidParams("span must cover at least one slot")
    if params.locations < 1 and not params.location_names:
        raise InvalidParams("need at least one location")
    if params.start % params.slot_duration != 0:
        raise InvalidParams("start must be slot-aligned")

    names = list(params.location_names) or [f"S{i:02d}" for i in range(params.locations)]
    rng = random.Random(params.seed)
    records = []
    for name in names:
        for k in range(params.span_slots):
            hit = rng.random() < params.event_rate
            measure = round(rng.uniform(0.2, 9.9), 1) if hit else 0.0
            records.append(
                RawRecord(
                    date=params.start + k * params.slot_duration,
                    location_id=name,
                    location_name=name,
                    measure=measure,
                    measure_kind=params.measure_kind,
                )
            )
    return records


def synth_near_edges(params: SynthParams) -> list[tuple[str, str]]:
    """Chain topology S00--S01--S02... when requested."""
    if not params.chain_near:
        return []
    names = list(params.location_names) or [f"S{i:02d}" for i in range(params.locations)]
    return [(a, b) for a, b in zip(names, names[1:])]
