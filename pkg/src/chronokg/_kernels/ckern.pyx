# cython: language_level=3
"""Compiled interval kernels. Pure-Python twin: pykern.py (keep in sync)."""

cdef enum:
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


cpdef int allen_code(long long a_start, long long a_end, long long b_start, long long b_end):
    """Classify closed intervals [a_start, a_end] vs [b_start, b_end]."""
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


cpdef list scan_intersecting(const long long[:] starts, const long long[:] ends,
                             long long w_start_c, long long w_end_c, Py_ssize_t lo=0):
    """Indexes of entries intersecting a closed window [w_start_c, w_end_c]."""
    cdef Py_ssize_t n = starts.shape[0]
    cdef Py_ssize_t i = lo
    cdef long long s, e
    out = []
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
