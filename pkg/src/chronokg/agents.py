"""Planner and verifier agents: deterministic rules plus an optional remote client.

The rule-based pair substitutes exact slot-coverage arithmetic for the
estimated utilities a chat model would produce, which makes runs
deterministic and testable. The remote pair speaks a strict line-oriented
grammar (documented in the README); the whole build runs offline by default.
"""
from __future__ import annotations

import os
import re
import threading
import time
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import requests

from .errors import HorizonExhausted, NetworkError, ParseFailure, RateLimited
from .graph import TemporalKG
from .intervals import TimeRef, from_iso, slot_starts, to_iso
from .retrieval import Evidence, Predicate, RetrievalPattern
from .synthesis import Verdict, covered_cells, window_violated


class QueryKind(str, Enum):
    Q1_AVOID = "Q1_AVOID"
    Q1_DETECT = "Q1_DETECT"
    Q2_LATEST_BEFORE = "Q2_LATEST_BEFORE"
    Q3_EARLIEST_AFTER = "Q3_EARLIEST_AFTER"


_PATTERN_FOR_KIND = {
    QueryKind.Q1_AVOID: Predicate.NO_EVENT_IN_WINDOW,
    QueryKind.Q1_DETECT: Predicate.EVENT_EXISTS_IN_WINDOW,
    QueryKind.Q2_LATEST_BEFORE: Predicate.NEAREST_FEASIBLE_BEFORE,
    QueryKind.Q3_EARLIEST_AFTER: Predicate.NEAREST_FEASIBLE_AFTER,
}


@dataclass(frozen=True)
class QueryIntent:
    """Structured query: what to check, where, and how far to search."""

    kind: QueryKind
    anchor: TimeRef  # point: the planned start instant
    duration: int  # trip length in seconds
    horizon: int  # search reach in seconds on the query's side
    location_path: tuple[str, ...]
    event_kind: str = "rain"
    threshold: float | None = None

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.horizon < self.duration:
            raise ValueError("horizon must be >= duration")
        if not self.location_path:
            raise ValueError("location_path must be non-empty")

    def window(self) -> TimeRef:
        return TimeRef(self.anchor.start, self.anchor.start + self.duration)

    def pattern(self) -> RetrievalPattern:
        return RetrievalPattern(
            predicate=_PATTERN_FOR_KIND[self.kind],
            event_kind=self.event_kind,
            threshold=self.threshold,
        )

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "anchor": to_iso(self.anchor.start),
            "duration_s": self.duration,
            "horizon_s": self.horizon,
            "location_path": list(self.location_path),
            "event_kind": self.event_kind,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class Judgment:
    """Verifier output: sufficiency, coverage confidence, candidate answer."""

    sufficient: bool
    confidence: float
    candidate_answer: Verdict | None
    candidate_time: int | None
    missing: str
    decided: bool
    violated: bool


@dataclass(frozen=True)
class AnchorProposal:
    """Planner output: next window/location plus the scored alternatives."""

    next_anchor: TimeRef
    next_loc: str
    next_pattern: RetrievalPattern
    utility: float
    candidates: tuple[tuple[int, str, float], ...] = ()


def plan_init(q: QueryIntent) -> tuple[TimeRef, str, RetrievalPattern]:
    """Initial state: the anchor window, first path location, kind's pattern."""
    return q.window(), q.location_path[0], q.pattern()


class RuleVerifier:
    """Coverage-counting stand-in for the verifier role.

    confidence = observed cells / total cells over the current candidate
    window and the path locations, after blanking contradicted cells.
    sufficient requires confidence >= theta AND a decidable predicate; a
    violating observation decides feasibility regardless of coverage.
    """

    def __init__(self, theta: float = 1.0, slot_duration: int = 1800) -> None:
        if not 0.0 < theta <= 1.0:
            raise ValueError("theta must lie in (0, 1]")
        self.theta = theta
        self.slot_duration = slot_duration

    def judge(self, q: QueryIntent, evidence: Evidence, window: TimeRef | None = None) -> Judgment:
        window = window or evidence.last_anchor or q.window()
        locs = tuple(q.location_path)
        clean = evidence.clean_observations()

        total = len(slot_starts(window, self.slot_duration)) * len(locs)
        covered = covered_cells(clean, window, locs, self.slot_duration)
        confidence = len(covered) / total if total else 0.0
        fully_covered = total > 0 and len(covered) == total
        violated = window_violated(clean, window, locs)

        verdict: Verdict | None = None
        candidate_time: int | None = None
        decided = violated or fully_covered
        if q.kind is QueryKind.Q1_AVOID:
            if violated:
                verdict = Verdict.NO
            elif fully_covered:
                verdict, candidate_time = Verdict.YES, window.start
        elif q.kind is QueryKind.Q1_DETECT:
            if violated:
                verdict = Verdict.YES
            elif fully_covered:
                verdict = Verdict.NO
        else:
            if not violated and fully_covered:
                if window.start == q.window().start:
                    verdict = Verdict.NO_NEED
                else:
                    verdict, candidate_time = Verdict.TIME, window.start

        missing = ""
        if not fully_covered:
            absent = [
                (s, loc)
                for s in slot_starts(window, self.slot_duration)
                for loc in locs
                if (s, loc) not in covered
            ]
            shown = ", ".join(f"{to_iso(s)}@{loc}" for s, loc in absent[:4])
            missing = f"{len(absent)} uncovered slot(s): {shown}"

        return Judgment(
            sufficient=decided and confidence >= self.theta,
            confidence=confidence,
            candidate_answer=verdict,
            candidate_time=candidate_time,
            missing=missing,
            decided=decided,
            violated=violated,
        )


class RulePlanner:
    """Frontier planner: slide to the nearest not-yet-falsified window.

    Candidate starts sit on slot boundaries within the horizon, walked in
    the query's direction. Windows containing a known violating observation
    are skipped, which realizes the advance-just-past-the-violation rule;
    enumerating farther windows would break nearest-first minimality, so the
    temporal neighborhood is exactly the surviving frontier window while the
    spatial neighborhood ranges over the path. The returned utility is
    gain - lambda * overlap in slot-coverage counts.
    """

    def __init__(self, slot_duration: int = 1800, lam: float = 0.5) -> None:
        self.slot_duration = slot_duration
        self.lam = lam

    def plan_init(self, q: QueryIntent) -> tuple[TimeRef, str, RetrievalPattern]:
        return plan_init(q)

    def plan_update(
        self, q: QueryIntent, evidence: Evidence, current: TimeRef | None = None
    ) -> AnchorProposal:
        current = current or evidence.last_anchor or q.window()
        locs = tuple(q.location_path)
        clean = evidence.clean_observations()
        anchor_start = q.window().start
        step = self.slot_duration

        if q.kind is QueryKind.Q3_EARLIEST_AFTER:
            moves: Callable[[int], int] = lambda t: t + step
            in_horizon: Callable[[int], bool] = lambda t: t < anchor_start + q.horizon
        elif q.kind is QueryKind.Q2_LATEST_BEFORE:
            moves = lambda t: t - step
            in_horizon = lambda t: t > anchor_start - q.horizon
        else:
            raise HorizonExhausted("fixed-window queries have no candidate windows")

        t = moves(current.start)
        proposal_start: int | None = None
        while in_horizon(t):
            window = TimeRef(t, t + q.duration)
            if not window_violated(clean, window, locs):
                proposal_start = t
                break
            t = moves(t)
        if proposal_start is None:
            raise HorizonExhausted(
                f"no candidate window beyond {to_iso(current.start)} within the horizon"
            )

        window = TimeRef(proposal_start, proposal_start + q.duration)
        scored: list[tuple[int, str, float]] = []
        best_loc, best_q = locs[0], float("-inf")
        n_slots = len(slot_starts(window, self.slot_duration))
        for loc in locs:
            overlap = len(covered_cells(clean, window, (loc,), self.slot_duration))
            gain = n_slots - overlap
            utility = gain - self.lam * overlap
            scored.append((proposal_start, loc, utility))
            if utility > best_q:
                best_loc, best_q = loc, utility

        return AnchorProposal(
            next_anchor=window,
            next_loc=best_loc,
            next_pattern=q.pattern(),
            utility=best_q,
            candidates=tuple(scored),
        )


# -- natural-language templates ----------------------------------------------

_Q1_RE = re.compile(
    r"trip on (?P<date>.+?), passing \[(?P<path>[^\]]*)\] in (?P<hours>[\d.]+) hours?",
    re.IGNORECASE,
)


def parse_question(
    text: str,
    kg: TemporalKG | None = None,
    context: QueryIntent | None = None,
    horizon: int = 12 * 3600,
    event_kind: str = "rain",
) -> QueryIntent:
    """Pattern-extract one of the three supported question templates.

    The fixed-window template carries its own anchor/path/duration; the
    leave-early and leave-late follow-ups inherit them from `context`.
    Anything else must arrive as a structured QueryIntent.
    """
    lowered = text.lower()
    if "leave early" in lowered or "leave late" in lowered:
        if context is None:
            raise ParseFailure("follow-up question requires the fixed-window context")
        kind = QueryKind.Q2_LATEST_BEFORE if "leave early" in lowered else QueryKind.Q3_EARLIEST_AFTER
        return QueryIntent(
            kind=kind,
            anchor=context.anchor,
            duration=context.duration,
            horizon=context.horizon,
            location_path=context.location_path,
            event_kind=context.event_kind,
            threshold=context.threshold,
        )

    match = _Q1_RE.search(text)
    if not match:
        raise ParseFailure("question does not match a supported template")
    kind = QueryKind.Q1_AVOID if "avoid" in lowered else QueryKind.Q1_DETECT
    raw_path = [part.strip().strip("'\"") for part in match.group("path").split(",")]
    path = tuple(kg.resolve_location(name) for name in raw_path) if kg else tuple(raw_path)
    anchor_ts = _parse_template_date(match.group("date"))
    duration = int(float(match.group("hours")) * 3600)
    return QueryIntent(
        kind=kind,
        anchor=TimeRef.point(anchor_ts),
        duration=duration,
        horizon=max(horizon, duration),
        location_path=path,
        event_kind=event_kind,
    )


def _parse_template_date(raw: str) -> int:
    from datetime import datetime, timezone

    text = raw.strip()
    for fmt in ("%d-%b-%Y %H:%M", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S"):
        for candidate in (text, text.title()):
            try:
                return int(datetime.strptime(candidate, fmt).replace(tzinfo=timezone.utc).timestamp())
            except ValueError:
                continue
    return from_iso(text)


# -- remote chat-endpoint client ----------------------------------------------

Transport = Callable[[str, dict, dict, float], tuple[int, dict]]


@dataclass
class RemoteConfig:
    """Chat-completion endpoint settings; the key comes from the environment."""

    endpoint: str
    model: str = "gpt-4o"
    api_key_env: str = "CHRONOKG_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout: float = 30.0
    rate_limit_attempts: int = 3
    backoff: float = 1.0
    max_in_flight: int = 4


def _requests_transport(url: str, headers: dict, payload: dict, timeout: float) -> tuple[int, dict]:
    response = requests.post(url, headers=headers, json=payload, timeout=timeout)
    try:
        body = response.json()
    except ValueError:
        body = {}
    return response.status_code, body


class RemoteClient:
    """Reentrant chat client with an in-flight cap and rate-limit backoff."""

    def __init__(self, config: RemoteConfig, transport: Transport | None = None) -> None:
        self.config = config
        self._transport = transport or _requests_transport
        self._gate = threading.Semaphore(config.max_in_flight)

    def call(self, prompt: str) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise NetworkError(f"no API key in ${self.config.api_key_env}")
        headers = {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}
        payload = {
            "model": self.config.model,
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
            "messages": [{"role": "user", "content": prompt}],
        }
        delay = self.config.backoff
        with self._gate:
            for attempt in range(self.config.rate_limit_attempts):
                try:
                    status, body = self._transport(
                        self.config.endpoint, headers, payload, self.config.timeout
                    )
                except requests.RequestException as exc:
                    raise NetworkError(str(exc)) from exc
                if status == 429:
                    if attempt + 1 == self.config.rate_limit_attempts:
                        raise RateLimited("rate limit persisted through backoff")
                    time.sleep(delay)
                    delay *= 2
                    continue
                if status != 200:
                    raise NetworkError(f"endpoint returned HTTP {status}")
                try:
                    return body["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise ParseFailure("malformed completion payload") from exc
        raise RateLimited("rate limit persisted through backoff")


def remote_agent_call(prompt: str, config: RemoteConfig, transport: Transport | None = None) -> str:
    """One-shot text completion against the configured endpoint."""
    return RemoteClient(config, transport).call(prompt)


def format_evidence(evidence: Evidence, limit: int = 64) -> str:
    """Serialize observations as triplet lines for prompt embedding."""
    lines = []
    for obs in evidence.observations()[:limit]:
        head = f"{obs.event_kind}@{obs.loc}@{to_iso(obs.time.start)}"
        lines.append(f"({head}, occursAt, {obs.time.iso()})")
        lines.append(f"({head}, atLocation, {obs.loc})")
        lines.append(f"({head}, hasValue, {obs.value})")
    return "\n".join(lines)


_VERIFIER_GRAMMAR = re.compile(
    r"SUFFICIENT:\s*(?P<sufficient>yes|no)\s*\n"
    r"CONFIDENCE:\s*(?P<confidence>[01](?:\.\d+)?)\s*\n"
    r"VIOLATED:\s*(?P<violated>yes|no)\s*\n"
    r"ANSWER:\s*(?P<answer>yes|no|no_need|no_answer|undecided|time=\S+)",
    re.IGNORECASE,
)

_PLANNER_GRAMMAR = re.compile(
    r"NEXT_START:\s*(?P<start>\S+)\s*\n"
    r"NEXT_LOCATION:\s*(?P<loc>\S+)\s*\n"
    r"PATTERN:\s*(?P<pattern>\S+)\s*\n"
    r"UTILITY:\s*(?P<utility>-?\d+(?:\.\d+)?)",
    re.IGNORECASE,
)


class RemoteVerifier:
    """Verifier backed by a chat endpoint; replies must match the grammar.

    One retry is attempted on an unparseable reply, then ParseFailure
    surfaces so the controller can fall back to the rule-based verifier.
    """

    def __init__(self, config: RemoteConfig, slot_duration: int, transport: Transport | None = None):
        self.client = RemoteClient(config, transport)
        self.slot_duration = slot_duration

    def judge(self, q: QueryIntent, evidence: Evidence, window: TimeRef | None = None) -> Judgment:
        window = window or evidence.last_anchor or q.window()
        prompt = (
            "You verify evidence sufficiency for a temporal query.\n"
            f"Query: {q.to_dict()}\n"
            f"Candidate window: {window.iso()}\n"
            "Evidence triplets:\n"
            f"{format_evidence(evidence)}\n"
            "Reply EXACTLY in this format:\n"
            "SUFFICIENT: yes|no\nCONFIDENCE: <0..1>\nVIOLATED: yes|no\n"
            "ANSWER: yes|no|no_need|no_answer|undecided|time=<iso8601>\nMISSING: <text>"
        )
        for attempt in range(2):
            reply = self.client.call(prompt)
            match = _VERIFIER_GRAMMAR.search(reply)
            if match:
                return self._to_judgment(match, reply)
        raise ParseFailure("verifier reply did not match the grammar twice")

    def _to_judgment(self, match: re.Match, reply: str) -> Judgment:
        raw_answer = match.group("answer")
        answer = raw_answer.lower()
        verdict: Verdict | None = None
        candidate_time: int | None = None
        if answer == "yes":
            verdict = Verdict.YES
        elif answer == "no":
            verdict = Verdict.NO
        elif answer == "no_need":
            verdict = Verdict.NO_NEED
        elif answer == "no_answer":
            verdict = Verdict.NO_ANSWER
        elif answer.startswith("time="):
            verdict = Verdict.TIME
            candidate_time = from_iso(raw_answer.split("=", 1)[1])
        missing_match = re.search(r"MISSING:\s*(?P<missing>.*)", reply, re.IGNORECASE)
        sufficient = match.group("sufficient").lower() == "yes"
        return Judgment(
            sufficient=sufficient,
            confidence=float(match.group("confidence")),
            candidate_answer=verdict,
            candidate_time=candidate_time,
            missing=missing_match.group("missing").strip() if missing_match else "",
            decided=verdict is not None,
            violated=match.group("violated").lower() == "yes",
        )


class RemotePlanner:
    """Planner backed by a chat endpoint; initial anchors stay rule-derived."""

    def __init__(self, config: RemoteConfig, slot_duration: int, transport: Transport | None = None):
        self.client = RemoteClient(config, transport)
        self.slot_duration = slot_duration

    def plan_init(self, q: QueryIntent) -> tuple[TimeRef, str, RetrievalPattern]:
        return plan_init(q)

    def plan_update(
        self, q: QueryIntent, evidence: Evidence, current: TimeRef | None = None
    ) -> AnchorProposal:
        current = current or evidence.last_anchor or q.window()
        prompt = (
            "You plan the next retrieval anchor for a temporal query.\n"
            f"Query: {q.to_dict()}\n"
            f"Current window: {current.iso()}\n"
            "Evidence triplets:\n"
            f"{format_evidence(evidence)}\n"
            "Reply EXACTLY in this format:\n"
            "NEXT_START: <iso8601>\nNEXT_LOCATION: <id>\n"
            "PATTERN: NO_EVENT_IN_WINDOW|EVENT_EXISTS_IN_WINDOW|"
            "NEAREST_FEASIBLE_BEFORE|NEAREST_FEASIBLE_AFTER\nUTILITY: <float>"
        )
        for attempt in range(2):
            reply = self.client.call(prompt)
            match = _PLANNER_GRAMMAR.search(reply)
            if match:
                start = from_iso(match.group("start"))
                lo = q.window().start - q.horizon
                hi = q.window().start + q.horizon
                if not lo <= start <= hi:
                    raise HorizonExhausted("remote proposal outside the horizon")
                return AnchorProposal(
                    next_anchor=TimeRef(start, start + q.duration),
                    next_loc=match.group("loc"),
                    next_pattern=RetrievalPattern(
                        predicate=Predicate(match.group("pattern").upper()),
                        event_kind=q.event_kind,
                        threshold=q.threshold,
                    ),
                    utility=float(match.group("utility")),
                )
        raise ParseFailure("planner reply did not match the grammar twice")
