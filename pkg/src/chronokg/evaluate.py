"""Scoring (accuracy, macro-F1, hit rate), hallucination audit, cost curves."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .controller import RunTrace
from .errors import LengthMismatch
from .qa_gen import QAItem, QAKind
from .synthesis import Answer, Verdict


@dataclass
class Prediction:
    """One answered item: verdict plus the trace that produced it."""

    item_id: str
    answer: Answer
    trace: RunTrace


@dataclass
class EvalReport:
    accuracy: float
    macro_f1: float
    hit_rate: float
    hallucination_rate: float
    per_kind: dict[str, dict] = field(default_factory=dict)
    cost: dict = field(default_factory=dict)
    n_items: int = 0

    def to_dict(self) -> dict:
        return {
            "accuracy": round(self.accuracy, 6),
            "macro_f1": round(self.macro_f1, 6),
            "hit_rate": round(self.hit_rate, 6),
            "hallucination_rate": round(self.hallucination_rate, 6),
            "per_kind": self.per_kind,
            "cost": self.cost,
            "n_items": self.n_items,
        }


def _slot_equal(pred_ts: int | None, gold_ts: int | None, slot: int) -> bool:
    if pred_ts is None or gold_ts is None:
        return pred_ts is None and gold_ts is None
    return pred_ts - pred_ts % slot == gold_ts - gold_ts % slot


def exact_match(answer: Answer, item: QAItem, slot: int) -> bool:
    """Slot-granular exact match of a prediction against the gold label."""
    gold = item.gold
    if item.kind is QAKind.Q1:
        if gold.label == "TRUE":
            return answer.verdict is Verdict.YES
        return answer.verdict is Verdict.NO
    if gold.label == "TIME":
        return (
            answer.verdict is Verdict.TIME
            and answer.decisive_time is not None
            and _slot_equal(answer.decisive_time.start, gold.time, slot)
        )
    return answer.verdict.value == gold.label


def _answer_class(answer: Answer, item: QAItem, slot: int) -> str:
    """Class id used by macro-F1 (TIME splits into correct/wrong)."""
    if item.kind is QAKind.Q1:
        return answer.verdict.value if answer.verdict in (Verdict.YES, Verdict.NO) else "NO"
    if answer.verdict is Verdict.TIME:
        return "TIME-correct" if exact_match(answer, item, slot) else "TIME-wrong"
    if answer.verdict in (Verdict.NO_NEED, Verdict.NO_ANSWER):
        return answer.verdict.value
    return "TIME-wrong"


def _gold_class(item: QAItem) -> str:
    if item.kind is QAKind.Q1:
        return "YES" if item.gold.label == "TRUE" else "NO"
    if item.gold.label == "TIME":
        return "TIME-correct"
    return item.gold.label


def _macro_f1(pairs: list[tuple[str, str]]) -> float:
    """Unweighted mean F1 over classes with any gold or predicted support."""
    classes = sorted({g for g, _ in pairs} | {p for _, p in pairs})
    scores = []
    for cls in classes:
        tp = sum(1 for g, p in pairs if g == cls and p == cls)
        fp = sum(1 for g, p in pairs if g != cls and p == cls)
        fn = sum(1 for g, p in pairs if g == cls and p != cls)
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom else 0.0)
    return sum(scores) / len(scores) if scores else 0.0


def score(predictions: list[Prediction], items: list[QAItem], slot: int) -> EvalReport:
    """Exact-match accuracy, per-kind macro-F1, Jaccard hit rate, audit rate."""
    if len(predictions) != len(items):
        raise LengthMismatch(f"{len(predictions)} predictions vs {len(items)} items")
    by_id = {item.id: item for item in items}
    if set(by_id) != {p.item_id for p in predictions}:
        raise LengthMismatch("prediction ids do not align with item ids")

    matches = 0
    jaccards = []
    hal_flags = []
    pairs_by_kind: dict[str, list[tuple[str, str]]] = {}
    kind_stats: dict[str, dict] = {}
    kg_calls, llm_calls, triples, steps = [], [], [], []

    for pred in sorted(predictions, key=lambda p: p.item_id):
        item = by_id[pred.item_id]
        hit = exact_match(pred.answer, item, slot)
        matches += hit

        retrieved = pred.trace.retrieved_provenance
        union = retrieved | item.sd
        jaccards.append(len(retrieved & item.sd) / len(union) if union else 1.0)

        flag, _ = audit_hallucination(pred, item, slot)
        hal_flags.append(flag)

        pairs_by_kind.setdefault(item.kind.value, []).append(
            (_gold_class(item), _answer_class(pred.answer, item, slot))
        )
        stats = kind_stats.setdefault(item.kind.value, {"n": 0, "matches": 0})
        stats["n"] += 1
        stats["matches"] += hit

        kg_calls.append(pred.trace.kg_calls)
        llm_calls.append(pred.trace.llm_calls)
        triples.append(pred.trace.triples_retrieved)
        steps.append(len(pred.trace.steps))

    per_kind = {}
    for kind, pairs in sorted(pairs_by_kind.items()):
        stats = kind_stats[kind]
        per_kind[kind] = {
            "n": stats["n"],
            "accuracy": round(stats["matches"] / stats["n"], 6),
            "macro_f1": round(_macro_f1(pairs), 6),
        }
    f1_values = [v["macro_f1"] for v in per_kind.values()]

    histogram: dict[str, int] = {}
    for s in steps:
        histogram[str(s)] = histogram.get(str(s), 0) + 1

    n = len(predictions)
    return EvalReport(
        accuracy=matches / n if n else 0.0,
        macro_f1=sum(f1_values) / len(f1_values) if f1_values else 0.0,
        hit_rate=sum(jaccards) / n if n else 0.0,
        hallucination_rate=sum(hal_flags) / n if n else 0.0,
        per_kind=per_kind,
        cost={
            "mean_kg_calls": round(float(np.mean(kg_calls)), 6) if kg_calls else 0.0,
            "mean_llm_calls": round(float(np.mean(llm_calls)), 6) if llm_calls else 0.0,
            "mean_triples": round(float(np.mean(triples)), 6) if triples else 0.0,
            "steps_histogram": dict(sorted(histogram.items(), key=lambda kv: int(kv[0]))),
        },
        n_items=n,
    )


def audit_hallucination(pred: Prediction, item: QAItem, slot: int) -> tuple[int, str | None]:
    """Flag unsupported answers; returns (flag, first triggered clause).

    Fixed-window items: any wrong yes/no is a hallucination. Nearest-window
    items: (a) the answered window is not in the retrieved evidence, (b) the
    answered event time is wrong, (c) the loop failed to stop at a
    judged-sufficient, interval-consistent step. Abstentions are not
    hallucinations under clauses (a)/(b).
    """
    answer = pred.answer
    if item.kind is QAKind.Q1:
        if not exact_match(answer, item, slot):
            return 1, "q1"
        return 0, None

    if answer.verdict is Verdict.TIME and answer.decisive_time is not None:
        start = answer.decisive_time.start
        wanted = range(start, start + item.duration, slot)
        cells = pred.trace.evidence_cells
        in_evidence = all(
            (loc, s) in cells for loc in item.location_path for s in wanted
        )
        if not in_evidence:
            return 1, "a"
        if not (item.gold.label == "TIME" and _slot_equal(start, item.gold.time, slot)):
            return 1, "b"

    for record in pred.trace.steps[:-1]:
        if record.sufficient and record.consistent and not record.stopped:
            return 1, "c"
    if pred.trace.steps:
        last = pred.trace.steps[-1]
        if last.sufficient and last.consistent and not last.stopped:
            return 1, "c"
    return 0, None


# -- fault injection (audit completeness harness) ------------------------------


def inject_fault(pred: Prediction, item: QAItem, clause: str, slot: int) -> Prediction:
    """Corrupt a correct prediction so that exactly `clause` should trigger."""
    import copy

    broken = copy.deepcopy(pred)
    if clause == "q1":
        broken.answer.verdict = Verdict.NO if item.gold.label == "TRUE" else Verdict.YES
    elif clause == "a":
        from .intervals import TimeRef

        far = item.anchor + item.horizon + 64 * slot  # never retrieved
        broken.answer.verdict = Verdict.TIME
        broken.answer.decisive_time = TimeRef.point(far)
    elif clause == "b":
        from .intervals import TimeRef

        assert item.gold.label == "TIME" and item.gold.time is not None
        wrong = item.gold.time + slot
        covered = {
            s
            for loc in item.location_path
            for (cell_loc, s) in pred.trace.evidence_cells
            if cell_loc == loc
        }
        # Pick an in-evidence but wrong window start.
        candidates = sorted(
            s
            for s in covered
            if s != item.gold.time
            and all(
                (loc, x) in pred.trace.evidence_cells
                for loc in item.location_path
                for x in range(s, s + item.duration, slot)
            )
        )
        broken.answer.verdict = Verdict.TIME
        broken.answer.decisive_time = TimeRef.point(candidates[0] if candidates else wrong)
    elif clause == "c":
        if broken.trace.steps:
            target = broken.trace.steps[-1]
            target.sufficient = True
            target.consistent = True
            target.stopped = False
    else:
        raise ValueError(f"unknown clause {clause!r}")
    return broken


# -- retrieval-cost curves -------------------------------------------------------


@dataclass(frozen=True)
class CostPoint:
    """One run of either mode on a planted instance."""

    d_star: int
    kg_calls: int
    triples: int
    mode: str
    w: int | None = None
    success: bool | None = None
    precision: float | None = None


@dataclass
class CostReport:
    iterative_points: list[tuple[int, int]]
    slope: float
    intercept: float
    r_squared: float
    single_pass: dict[int, dict]
    coverage_violations: int

    def to_dict(self) -> dict:
        return {
            "iterative": {
                "points": [{"d_star": d, "kg_calls": c} for d, c in self.iterative_points],
                "fit": {
                    "slope": round(self.slope, 6),
                    "intercept": round(self.intercept, 6),
                    "r_squared": round(self.r_squared, 6),
                },
            },
            "single_pass": self.single_pass,
            "coverage_violations": self.coverage_violations,
        }


def cost_report(iterative: list[CostPoint], single_pass: list[CostPoint]) -> CostReport:
    """Fit kg_calls against d* for the loop; summarize the baseline per radius.

    Also counts coverage-condition violations: a baseline success below
    w = d* or a failure at w >= d* each count as one.
    """
    pts = sorted((p.d_star, p.kg_calls) for p in iterative)
    xs = np.array([d for d, _ in pts], dtype=float)
    ys = np.array([c for _, c in pts], dtype=float)
    if len(pts) >= 2 and np.ptp(xs) > 0:
        slope, intercept = np.polyfit(xs, ys, 1)
        fitted = slope * xs + intercept
        ss_res = float(np.sum((ys - fitted) ** 2))
        ss_tot = float(np.sum((ys - ys.mean()) ** 2))
        r_squared = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    else:
        slope = intercept = 0.0
        r_squared = 1.0

    by_w: dict[int, dict] = {}
    violations = 0
    for point in single_pass:
        assert point.w is not None
        bucket = by_w.setdefault(
            point.w, {"n": 0, "successes": 0, "triples": [], "precisions": []}
        )
        bucket["n"] += 1
        bucket["successes"] += bool(point.success)
        bucket["triples"].append(point.triples)
        if point.precision is not None:
            bucket["precisions"].append(point.precision)
        expected = point.w >= point.d_star
        if bool(point.success) != expected:
            violations += 1

    summary = {}
    for w, bucket in sorted(by_w.items()):
        precisions = sorted(bucket["precisions"])
        summary[w] = {
            "n": bucket["n"],
            "success_rate": round(bucket["successes"] / bucket["n"], 6),
            "mean_triples": round(float(np.mean(bucket["triples"])), 6),
            "median_precision": (
                round(float(np.median(precisions)), 6) if precisions else None
            ),
        }

    return CostReport(
        iterative_points=pts,
        slope=float(slope),
        intercept=float(intercept),
        r_squared=float(r_squared),
        single_pass=summary,
        coverage_violations=violations,
    )


def sign_test_p(successes: int, trials: int) -> float:
    """One-sided exact binomial tail P[X >= successes] under p = 1/2."""
    if trials == 0:
        return 1.0
    total = sum(math.comb(trials, k) for k in range(successes, trials + 1))
    return total / 2**trials
