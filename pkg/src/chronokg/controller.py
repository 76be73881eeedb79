"""Time-anchored iterative loop with stop rule, fallback, and a single-pass baseline."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations

from .agents import AnchorProposal, QueryIntent, QueryKind, RulePlanner, RuleVerifier
from .errors import (
    BudgetExceeded,
    EmptyEvidence,
    HorizonExhausted,
    NetworkError,
    ParseFailure,
    RateLimited,
)
from .graph import TemporalKG
from .intervals import TimeRef, allen_relation, inverse, slot_starts, within
from .retrieval import Evidence, Predicate, RetrievalParams, RetrievalPattern, psi
from .synthesis import (
    Answer,
    Verdict,
    contradiction_filter,
    fallback_rationale,
    fuse,
    select_decisive_time,
    window_feasible,
)


class RunMode(str, Enum):
    ITERATIVE = "ITERATIVE"
    SINGLE_PASS = "SINGLE_PASS"
    LIMITED_RECALL = "LIMITED_RECALL"
    NO_SUFFICIENCY_CHECK = "NO_SUFFICIENCY_CHECK"


@dataclass(frozen=True)
class RunConfig:
    """Loop thresholds and ablation switches; every field is CLI-exposed."""

    theta: float = 1.0
    t_max: int = 6
    lam: float = 0.5
    gamma: float = 1.0
    radius: int = 0
    hop_cap: int = 2
    budget: int = 512
    mode: RunMode = RunMode.ITERATIVE

    def __post_init__(self) -> None:
        if self.t_max < 1:
            raise ValueError("t_max must be >= 1")
        if not 0.0 < self.theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        if self.lam < 0 or self.gamma <= 0 or self.budget <= 0:
            raise ValueError("lambda must be >= 0; gamma and budget positive")


@dataclass
class StepRecord:
    """One loop iteration as recorded in the trace."""

    step: int
    window: TimeRef
    retrieved: bool
    batch_sizes: list[int]
    confidence: float
    sufficient: bool
    violated: bool
    consistent: bool
    stopped: bool
    proposal: int | None = None

    def to_dict(self) -> dict:
        return {
            "step": self.step,
            "window": self.window.iso(),
            "retrieved": self.retrieved,
            "batch_sizes": self.batch_sizes,
            "confidence": round(self.confidence, 6),
            "sufficient": self.sufficient,
            "violated": self.violated,
            "consistent": self.consistent,
            "stopped": self.stopped,
            "proposal": self.proposal,
        }


@dataclass
class RunTrace:
    """Ordered record of retrievals, judgments, and updates for one run."""

    mode: str
    steps: list[StepRecord] = field(default_factory=list)
    kg_calls: int = 0
    llm_calls: int = 0
    triples_retrieved: int = 0
    flags: dict[str, bool] = field(default_factory=dict)
    retrieved_provenance: set[str] = field(default_factory=set)
    evidence_cells: set[tuple[str, int]] = field(default_factory=set)
    final: Verdict | None = None
    evidence: Evidence | None = None  # session handle; not serialized

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "steps": [s.to_dict() for s in self.steps],
            "totals": {
                "kg_calls": self.kg_calls,
                "llm_calls": self.llm_calls,
                "triples_retrieved": self.triples_retrieved,
            },
            "flags": dict(sorted(self.flags.items())),
            "final": self.final.value if self.final else None,
        }


_PAIR_CAP = 2000  # pairwise consistency scan bound per check


def allen_consistent(
    observations: list,
    p: RetrievalPattern,
    window: TimeRef,
    locs: tuple[str, ...] | None = None,
) -> bool:
    """Interval-constraint side of the stop rule.

    (i) No pair of evidence intervals may carry contradictory derived
    relations (relation(a,b) must invert to relation(b,a)); (ii) the
    pattern's required relation must hold against the window: feasibility
    patterns forbid a violating observation inside it, the existence
    pattern demands one (vacuously true on empty evidence).
    """
    scoped = [o for o in observations if locs is None or o.loc in locs]

    refs = sorted({o.time for o in scoped})
    for n, (a, b) in enumerate(combinations(refs, 2)):
        if n >= _PAIR_CAP:
            break
        if allen_relation(a, b) is not inverse(allen_relation(b, a)):
            return False

    violating_inside = any(o.violating and within(o.time, window) for o in scoped)
    if p.predicate is Predicate.EVENT_EXISTS_IN_WINDOW:
        return violating_inside or not scoped
    return not violating_inside


def _fallback_agents(kg: TemporalKG, cfg: RunConfig) -> tuple[RulePlanner, RuleVerifier]:
    return (
        RulePlanner(slot_duration=kg.slot_duration, lam=cfg.lam),
        RuleVerifier(theta=cfg.theta, slot_duration=kg.slot_duration),
    )


def run(
    q: QueryIntent,
    kg: TemporalKG,
    cfg: RunConfig | None = None,
    planner=None,
    verifier=None,
    seed_evidence: Evidence | None = None,
) -> tuple[Answer, RunTrace]:
    """Anchored loop: judge, retrieve when needed, stop or move the anchor.

    Retrieval is skipped for a window the accumulated evidence already shows
    violated, so a follow-up run seeded with a prior run's evidence spends
    its graph calls only on genuinely new windows. On step or horizon
    exhaustion the fallback no-answer verdict carries a best-effort
    rationale. Remote agent failures downgrade to the rule-based agents and
    set a trace flag.
    """
    cfg = cfg or RunConfig()
    rule_planner, rule_verifier = _fallback_agents(kg, cfg)
    planner = planner or rule_planner
    verifier = verifier or rule_verifier

    evidence = seed_evidence.copy() if seed_evidence is not None else Evidence()
    seen = evidence.seen_keys()
    # The triple budget caps what THIS run emits; seeded evidence is free.
    params = RetrievalParams(
        radius=cfg.radius, hop_cap=cfg.hop_cap, budget=cfg.budget + len(seen)
    )
    trace = RunTrace(mode=cfg.mode.value)

    window, _, pattern = planner.plan_init(q)
    if cfg.mode is RunMode.LIMITED_RECALL:
        iterations = min(cfg.t_max, 2)
    elif cfg.mode is RunMode.NO_SUFFICIENCY_CHECK:
        iterations = cfg.t_max
    else:
        iterations = cfg.t_max + 1

    answer: Answer | None = None
    for step in range(iterations):
        try:
            judgment, retrieved, sizes = _observe(
                q, kg, cfg, verifier, evidence, seen, window, pattern, params, trace, step
            )
        except BudgetExceeded:
            trace.flags["budget_exceeded"] = True
            break
        except (ParseFailure, NetworkError, RateLimited):
            trace.flags["remote_fallback"] = True
            verifier = rule_verifier
            judgment, retrieved, sizes = _observe(
                q, kg, cfg, verifier, evidence, seen, window, pattern, params, trace, step
            )

        consistent = allen_consistent(
            evidence.clean_observations(), pattern, window, tuple(q.location_path)
        )
        record = StepRecord(
            step=step,
            window=window,
            retrieved=retrieved,
            batch_sizes=sizes,
            confidence=judgment.confidence,
            sufficient=judgment.sufficient,
            violated=judgment.violated,
            consistent=consistent,
            stopped=False,
        )
        trace.steps.append(record)

        if cfg.mode is not RunMode.NO_SUFFICIENCY_CHECK and judgment.sufficient and consistent:
            record.stopped = True
            answer = _accept(q, kg, cfg, evidence, judgment, window)
            break

        if q.kind in (QueryKind.Q1_AVOID, QueryKind.Q1_DETECT):
            if cfg.mode is RunMode.NO_SUFFICIENCY_CHECK:
                continue  # fixed-window query; later steps just re-judge
            if judgment.decided:
                record.stopped = True
                answer = _decided_q1(q, cfg, evidence, judgment)
            else:
                trace.flags["undecidable_window"] = True
            break

        try:
            proposal = _propose(planner, rule_planner, q, evidence, window, trace)
        except HorizonExhausted:
            trace.flags["horizon_exhausted"] = True
            break
        record.proposal = proposal.next_anchor.start
        window = proposal.next_anchor
    else:
        trace.flags["step_budget_exhausted"] = True

    if answer is None:
        if cfg.mode is RunMode.NO_SUFFICIENCY_CHECK:
            answer = _unverified_synthesis(q, kg, cfg, evidence)
        else:
            filtered, _ = contradiction_filter(evidence)
            answer = Answer(
                verdict=Verdict.NO_ANSWER,
                rationale=fallback_rationale(q, filtered, cfg.gamma),
            )

    trace.final = answer.verdict
    trace.evidence = evidence
    return answer, trace


def _observe(q, kg, cfg, verifier, evidence, seen, window, pattern, params, trace, step):
    """Judge; retrieve every path location and re-judge unless the window is
    already decided by accumulated (possibly seeded) evidence."""
    judgment = verifier.judge(q, evidence, window)
    trace.llm_calls += 1
    retrieved = False
    sizes: list[int] = []
    if not judgment.decided:
        for path_loc in q.location_path:
            batch = psi(kg, window, path_loc, pattern, params, seen, step)
            trace.kg_calls += 1
            trace.triples_retrieved += len(batch)
            sizes.append(len(batch))
            evidence.add_batch(batch)
            for obs in batch.triples:
                trace.retrieved_provenance.add(obs.provenance)
                trace.evidence_cells.add((obs.loc, obs.time.start))
        retrieved = True
        judgment = verifier.judge(q, evidence, window)
        trace.llm_calls += 1
    return judgment, retrieved, sizes


def _propose(planner, rule_planner, q, evidence, window, trace) -> AnchorProposal:
    trace.llm_calls += 1
    try:
        return planner.plan_update(q, evidence, window)
    except (ParseFailure, NetworkError, RateLimited):
        trace.flags["remote_fallback"] = True
        return rule_planner.plan_update(q, evidence, window)


def _accept(q, kg, cfg, evidence: Evidence, judgment, window: TimeRef) -> Answer:
    """Stop rule fired: consolidate, pick the decisive time, fuse."""
    filtered, report = contradiction_filter(evidence)
    if q.kind is QueryKind.Q1_DETECT and judgment.candidate_answer is Verdict.YES:
        return _decided_q1(q, cfg, evidence, judgment)
    if q.kind in (QueryKind.Q1_AVOID, QueryKind.Q1_DETECT):
        t_star = TimeRef.point(q.window().start)
    elif window.start == q.window().start:
        t_star = TimeRef.point(window.start)
    else:
        t_star = select_decisive_time(filtered, q, kg.slot_duration) or TimeRef.point(window.start)
    answer = fuse(q, filtered, t_star, cfg.gamma)
    answer.filter_report = report
    return answer


def _decided_q1(q, cfg, evidence: Evidence, judgment) -> Answer:
    """Fixed-window verdict decided by the evidence (possibly negatively)."""
    filtered, report = contradiction_filter(evidence)
    decisive = None
    if judgment.violated:
        hits = sorted(
            o.time.start
            for o in filtered
            if o.violating and o.loc in q.location_path and within(o.time, q.window())
        )
        if hits and q.kind is QueryKind.Q1_DETECT:
            decisive = TimeRef.point(hits[0])
    elif judgment.candidate_time is not None:
        decisive = TimeRef.point(judgment.candidate_time)
    answer = Answer(
        verdict=judgment.candidate_answer or Verdict.NO_ANSWER,
        rationale=fallback_rationale(q, filtered, cfg.gamma),
        decisive_time=decisive,
    )
    answer.filter_report = report
    return answer


def _unverified_synthesis(q, kg, cfg, evidence: Evidence) -> Answer:
    """Ablation synthesis: commit to the nearest window with no observed
    violation, without requiring slot coverage (no consistency check)."""
    filtered, report = contradiction_filter(evidence)
    t_star = select_decisive_time(filtered, q, kg.slot_duration, require_coverage=False)
    if t_star is None:
        answer = Answer(
            verdict=Verdict.NO_ANSWER,
            rationale=fallback_rationale(q, filtered, cfg.gamma),
        )
    else:
        try:
            answer = fuse(q, filtered, t_star, cfg.gamma)
        except EmptyEvidence:
            answer = Answer(verdict=Verdict.NO_ANSWER)
    answer.filter_report = report
    return answer


def run_single_pass(
    q: QueryIntent,
    kg: TemporalKG,
    window_radius: int,
    cfg: RunConfig | None = None,
) -> tuple[Answer, RunTrace]:
    """Baseline: one wide retrieval chosen a priori, one judgment, no iteration.

    The inspected span is the anchor window extended by `window_radius`
    slots in the query's search direction, so the baseline can certify a
    shifted window only if the shift count is within the radius.
    """
    cfg = cfg or RunConfig(mode=RunMode.SINGLE_PASS)
    if window_radius < 0:
        raise ValueError("window radius must be >= 0")
    slot = kg.slot_duration
    anchor_window = q.window()
    if q.kind is QueryKind.Q3_EARLIEST_AFTER:
        span = TimeRef(anchor_window.start, anchor_window.end + window_radius * slot)
    elif q.kind is QueryKind.Q2_LATEST_BEFORE:
        span = TimeRef(anchor_window.start - window_radius * slot, anchor_window.end)
    else:
        span = anchor_window

    params = RetrievalParams(radius=cfg.radius, hop_cap=cfg.hop_cap, budget=cfg.budget)
    pattern = q.pattern()
    evidence = Evidence()
    seen: set = set()
    trace = RunTrace(mode=RunMode.SINGLE_PASS.value)
    trace.flags["single_pass_w"] = True

    try:
        for path_loc in q.location_path:
            batch = psi(kg, span, path_loc, pattern, params, seen, 0)
            trace.kg_calls += 1
            trace.triples_retrieved += len(batch)
            evidence.add_batch(batch)
            for obs in batch.triples:
                trace.retrieved_provenance.add(obs.provenance)
                trace.evidence_cells.add((obs.loc, obs.time.start))
    except BudgetExceeded:
        trace.flags["budget_exceeded"] = True
        answer = Answer(verdict=Verdict.NO_ANSWER)
        trace.final = answer.verdict
        return answer, trace

    verifier = RuleVerifier(theta=cfg.theta, slot_duration=slot)
    judgment = verifier.judge(q, evidence, anchor_window)
    trace.llm_calls += 1
    filtered, report = contradiction_filter(evidence)
    locs = tuple(q.location_path)

    if q.kind in (QueryKind.Q1_AVOID, QueryKind.Q1_DETECT):
        if judgment.decided:
            answer = _decided_q1(q, cfg, evidence, judgment)
        else:
            answer = Answer(verdict=Verdict.NO_ANSWER)
    elif window_feasible(filtered, anchor_window, locs, slot):
        answer = fuse(q, filtered, TimeRef.point(anchor_window.start), cfg.gamma)
    else:
        t_star = select_decisive_time(filtered, q, slot)
        if t_star is None:
            answer = Answer(
                verdict=Verdict.NO_ANSWER,
                rationale=fallback_rationale(q, filtered, cfg.gamma),
            )
        else:
            answer = fuse(q, filtered, t_star, cfg.gamma)
    answer.filter_report = report

    consistent = allen_consistent(filtered, pattern, anchor_window, locs)
    trace.steps.append(
        StepRecord(
            step=0,
            window=span,
            retrieved=True,
            batch_sizes=[trace.triples_retrieved],
            confidence=judgment.confidence,
            sufficient=judgment.sufficient,
            violated=judgment.violated,
            consistent=consistent,
            stopped=True,
        )
    )
    trace.final = answer.verdict
    trace.evidence = evidence
    return answer, trace
