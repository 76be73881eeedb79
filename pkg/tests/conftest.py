from __future__ import annotations

import pytest

from chronokg.graph import MeasureKind, RawRecord
from chronokg.ingest import build_kg
from chronokg.intervals import from_iso

SLOT = 1800
OPERA = "066006"
PARRA = "066124"
HOLSWORTHY = "067117"

DEC5_BASE = from_iso("2024-12-05T13:00:00Z")
DEC5_RAIN = {
    from_iso("2024-12-05T13:30:00Z"): 3.2,
    from_iso("2024-12-05T15:30:00Z"): 2.6,
    from_iso("2024-12-05T16:00:00Z"): 4.1,
}

MAR11_BASE = from_iso("2024-03-11T00:00:00Z")
MAR11_ANCHOR = from_iso("2024-03-11T04:00:00Z")
MAR11_RAIN = {from_iso("2024-03-11T02:00:00Z"), MAR11_ANCHOR}


def opera_house_records() -> list[RawRecord]:
    """12 half-hour slots 13:00-18:30 with rain at 13:30/15:30/16:00."""
    records = []
    for k in range(12):
        ts = DEC5_BASE + k * SLOT
        records.append(
            RawRecord(
                date=ts,
                location_id=OPERA,
                location_name="SYDNEY OPERA HOUSE",
                measure=DEC5_RAIN.get(ts, 0.0),
                measure_kind=MeasureKind.RAIN,
            )
        )
    return records


def parramatta_records() -> list[RawRecord]:
    """Two stations, 00:00-08:30; rain at 02:00 and 04:00 at Parramatta only."""
    records = []
    for loc, name in ((PARRA, "PARRAMATTA NORTH"), (HOLSWORTHY, "HOLSWORTHY CONTROL RANGE")):
        for k in range(18):
            ts = MAR11_BASE + k * SLOT
            wet = 4.0 if loc == PARRA and ts in MAR11_RAIN else 0.0
            records.append(
                RawRecord(
                    date=ts,
                    location_id=loc,
                    location_name=name,
                    measure=wet,
                    measure_kind=MeasureKind.RAIN,
                )
            )
    return records


@pytest.fixture(scope="session")
def opera_kg():
    return build_kg(opera_house_records(), slot_duration=SLOT)


@pytest.fixture(scope="session")
def parramatta_kg():
    return build_kg(
        parramatta_records(), slot_duration=SLOT, near_edges=[(PARRA, HOLSWORTHY)]
    )
