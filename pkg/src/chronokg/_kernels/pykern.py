"""Pure-Python twins of the compiled interval kernels.

Semantics must stay bit-identical to ckern.pyx; tests/test_kernels.py
cross-checks both lanes on random inputs.
"""
from __future__ import annotations

# Relation codes shared with chronokg.intervals.AllenRelation.
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


def allen_code(a_start: int, a_end: int, b_start: int, b_end: int) -> int:
    """Classify closed intervals [a_start, a_end] vs [b_start, b_end].

    A point is start == end. The branch order below is a partition: for
    any pair of (possibly degenerate) intervals exactly one code fires.
    Degenerate touch cases fold into the STARTS/FINISHES families so that
    inverse symmetry holds for points as well.
    """
    if a_end < b_start:
        return BEFORE
    if a_start > b_end:
        return AFTER
    if a_start == b_start:
        if a_end == b_end:
            return EQUALS
        return STARTS if a_end < b_end else STARTED_BY
    if a_end == b_end:
        return FINISHES if a_start > b_start else FINISHED_BY
    if a_end == b_start:
        return MEETS
    if a_start == b_end:
        return MET_BY
    if a_start > b_start and a_end < b_end:
        return DURING
    if a_start < b_start and a_end > b_end:
        return CONTAINS
    return OVERLAPS if a_start < b_start else OVERLAPPED_BY


def scan_intersecting(starts, ends, w_start_c: int, w_end_c: int, lo: int = 0) -> list[int]:
    """Indexes of entries intersecting a closed window [w_start_c, w_end_c].

    `starts` is ascending; entries are half-open slots (end > start) or
    points (end == start) and are collapsed to closed form on the fly.
    Scanning starts at `lo` and stops at the first start beyond the window.
    """
    n = len(starts)
    out = []
    i = lo
    while i < n:
        s = starts[i]
        if s > w_end_c:
            break
        e = ends[i]
        if e > s:
            e -= 1
        if e >= w_start_c:
            out.append(i)
        i += 1
    return out
