"""Contradiction filter, decisive-time selection, and weighted answer fusion."""
from __future__ import annotations

import math
from itertools import combinations

import pytest

from chronokg.agents import QueryIntent, QueryKind
from chronokg.errors import EmptyEvidence
from chronokg.intervals import TimeRef
from chronokg.retrieval import Evidence, Observation, RetrievalBatch, RetrievalParams, psi
from chronokg.synthesis import (
    Verdict,
    contradiction_filter,
    fuse,
    select_decisive_time,
    window_feasible,
)

from conftest import DEC5_BASE, OPERA, SLOT


def _obs(start: int, value: float, loc: str = "L", kind: str = "rain") -> Observation:
    return Observation(
        event_id=f"e:{loc}:{start}:{value}",
        event_kind=kind,
        time=TimeRef(start, start + SLOT),
        loc=loc,
        value=value,
        violating=value > 0,
        hops=0,
        provenance=f"p:{loc}:{start}:{value}",
    )


def _evidence(observations: list[Observation]) -> Evidence:
    evidence = Evidence()
    anchor = TimeRef(
        min(o.time.start for o in observations), max(o.time.end for o in observations)
    )
    evidence.add_batch(RetrievalBatch(triples=observations, anchor=anchor, step=0))
    return evidence


def test_conflicting_values_both_removed():
    evidence = _evidence([_obs(0, 0.0), _obs(0, 5.0), _obs(SLOT, 0.0)])
    kept, report = contradiction_filter(evidence)
    assert [o.time.start for o in kept] == [SLOT]
    assert report.removed == 2
    assert report.unknown_cells == [("rain", 0, "L")]


def test_filter_identity_on_clean_evidence():
    observations = [_obs(0, 0.0), _obs(SLOT, 3.0)]
    kept, report = contradiction_filter(_evidence(observations))
    assert kept == sorted(observations, key=lambda o: (o.time.start, o.loc, o.event_id))
    assert report.removed == 0 and not report.unknown_cells


def test_three_way_conflict_all_removed():
    kept, report = contradiction_filter(_evidence([_obs(0, 0.0), _obs(0, 1.0), _obs(0, 2.0)]))
    assert kept == []
    assert report.removed == 3


def test_filter_soundness_exhaustive_pairs():
    evidence = _evidence(
        [_obs(0, 0.0), _obs(0, 5.0), _obs(SLOT, 1.0), _obs(2 * SLOT, 1.0), _obs(2 * SLOT, 1.0)]
    )
    kept, _ = contradiction_filter(evidence)
    for a, b in combinations(kept, 2):
        same_cell = (a.event_kind, a.time.start, a.loc) == (b.event_kind, b.time.start, b.loc)
        assert not (same_cell and a.value != b.value)


def _case_study_query(kind=QueryKind.Q3_EARLIEST_AFTER) -> QueryIntent:
    return QueryIntent(
        kind=kind, anchor=TimeRef.point(DEC5_BASE + SLOT), duration=2 * 3600,
        horizon=6 * 3600, location_path=(OPERA,),
    )


def _case_study_evidence(opera_kg) -> list[Observation]:
    evidence = Evidence()
    seen: set = set()
    q = _case_study_query()
    for start in range(DEC5_BASE, DEC5_BASE + 9 * SLOT, 2 * SLOT):
        window = TimeRef(start, start + 4 * SLOT)
        evidence.add_batch(psi(opera_kg, window, OPERA, q.pattern(), RetrievalParams(), seen))
    kept, _ = contradiction_filter(evidence)
    return kept


def test_select_decisive_time_case_study(opera_kg):
    observations = _case_study_evidence(opera_kg)
    t_star = select_decisive_time(observations, _case_study_query(), SLOT)
    assert t_star is not None and t_star.start == DEC5_BASE + 7 * SLOT  # 16:30


def test_select_decisive_time_infeasible():
    q = _case_study_query()
    rainy = [_obs(DEC5_BASE + k * SLOT, 2.0, loc=OPERA) for k in range(16)]
    assert select_decisive_time(rainy, q, SLOT) is None


def test_select_decisive_time_q1_projection(opera_kg):
    observations = _case_study_evidence(opera_kg)
    violated = QueryIntent(
        kind=QueryKind.Q1_AVOID, anchor=TimeRef.point(DEC5_BASE), duration=2 * 3600,
        horizon=6 * 3600, location_path=(OPERA,),
    )
    assert select_decisive_time(observations, violated, SLOT) is None
    clear = QueryIntent(
        kind=QueryKind.Q1_AVOID, anchor=TimeRef.point(DEC5_BASE + 7 * SLOT),
        duration=2 * 3600, horizon=6 * 3600, location_path=(OPERA,),
    )
    t_star = select_decisive_time(observations, clear, SLOT)
    assert t_star is not None and t_star.start == DEC5_BASE + 7 * SLOT


def test_fuse_weight_ratio_and_normalization():
    q = _case_study_query(QueryKind.Q3_EARLIEST_AFTER)
    t_star = TimeRef.point(DEC5_BASE)
    # Two slots whose midpoints sit exactly 2h apart: weight ratio e^0 : e^-2.
    a = _obs(DEC5_BASE, 1.0, loc=OPERA)
    b = _obs(DEC5_BASE + 4 * SLOT, 1.0, loc=OPERA)
    answer = fuse(q, [a, b], t_star, gamma=1.0)
    weights = {c.fact_id: c.weight for c in answer.rationale}
    ratio = weights[a.provenance] / weights[b.provenance]
    assert ratio == pytest.approx(math.exp(2.0))  # separated by exactly 2h
    assert sum(weights.values()) == pytest.approx(1.0, abs=1e-9)


def test_fuse_single_fact_weight_one():
    q = _case_study_query()
    only = _obs(DEC5_BASE, 0.0, loc=OPERA)
    answer = fuse(q, [only], TimeRef.point(DEC5_BASE), gamma=1.0)
    assert len(answer.rationale) == 1
    assert answer.rationale[0].weight == pytest.approx(1.0, abs=1e-9)


def test_fuse_decay_monotonic_and_gamma_zero_uniform():
    q = _case_study_query()
    t_star = TimeRef.point(DEC5_BASE)
    facts = [_obs(DEC5_BASE + k * SLOT, 0.0, loc=OPERA) for k in range(5)]
    answer = fuse(q, facts, t_star, gamma=1.0)
    ordered = [c.weight for c in answer.rationale]
    assert ordered == sorted(ordered, reverse=True)
    assert len(set(ordered)) == len(ordered)  # strictly decreasing with distance

    # gamma -> 0 is uniform; the implementation treats gamma=0 as exact uniform.
    uniform = fuse(q, facts, t_star, gamma=1e-12)
    weights = [c.weight for c in uniform.rationale]
    assert all(w == pytest.approx(1 / len(facts), rel=1e-6) for w in weights)


def test_fuse_case_study_rationale_cites_rain_and_clear_stretch(opera_kg):
    observations = _case_study_evidence(opera_kg)
    q = _case_study_query()
    t_star = select_decisive_time(observations, q, SLOT)
    answer = fuse(q, observations, t_star, gamma=1.0)
    assert answer.verdict is Verdict.TIME
    cited = " ".join(c.text for c in answer.rationale)
    for hhmm in ("13:30", "15:30", "16:00"):
        assert hhmm in cited
    clear_cited = [c for c in answer.rationale if "(clear)" in c.text and "16:30" in c.text]
    assert clear_cited


def test_fuse_verdict_invariant_under_gamma_sweep(opera_kg):
    observations = _case_study_evidence(opera_kg)
    q = _case_study_query()
    t_star = select_decisive_time(observations, q, SLOT)
    verdicts = set()
    times = set()
    for gamma in (0.25, 0.5, 1.0, 2.0, 4.0):
        answer = fuse(q, observations, t_star, gamma=gamma)
        verdicts.add(answer.verdict)
        times.add(answer.decisive_time.start)
    assert verdicts == {Verdict.TIME}
    assert times == {DEC5_BASE + 7 * SLOT}


def test_fuse_empty_evidence_raises():
    q = _case_study_query()
    with pytest.raises(EmptyEvidence):
        fuse(q, [], TimeRef.point(DEC5_BASE), gamma=1.0)


def test_window_feasible_requires_full_clean_coverage():
    window = TimeRef(0, 4 * SLOT)
    full = [_obs(k * SLOT, 0.0) for k in range(4)]
    assert window_feasible(full, window, ("L",), SLOT)
    assert not window_feasible(full[:-1], window, ("L",), SLOT)
    assert not window_feasible(full + [_obs(SLOT, 2.0)], window, ("L",), SLOT)
