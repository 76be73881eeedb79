"""Remote agent client: grammar parsing, retries, fallback wiring."""
from __future__ import annotations

import pytest

from chronokg.agents import (
    QueryIntent,
    QueryKind,
    RemoteConfig,
    RemotePlanner,
    RemoteVerifier,
    remote_agent_call,
)
from chronokg.controller import RunConfig, run
from chronokg.errors import NetworkError, ParseFailure, RateLimited
from chronokg.intervals import TimeRef, to_iso
from chronokg.retrieval import Evidence
from chronokg.synthesis import Verdict

from conftest import DEC5_BASE, OPERA, SLOT

CONFIG = RemoteConfig(endpoint="https://example.invalid/v1/chat", backoff=0.0)


@pytest.fixture(autouse=True)
def _api_key(monkeypatch):
    monkeypatch.setenv("CHRONOKG_API_KEY", "test-key")


def _transport_returning(*texts: str, statuses: list[int] | None = None):
    """Fake transport yielding canned completions (cycling on exhaustion)."""
    replies = list(texts)
    calls = {"n": 0}

    def transport(url, headers, payload, timeout):
        i = min(calls["n"], len(replies) - 1)
        status = statuses[min(calls["n"], len(statuses) - 1)] if statuses else 200
        calls["n"] += 1
        return status, {"choices": [{"message": {"content": replies[i]}}]}

    transport.calls = calls
    return transport


def _query() -> QueryIntent:
    return QueryIntent(
        kind=QueryKind.Q1_AVOID, anchor=TimeRef.point(DEC5_BASE), duration=2 * 3600,
        horizon=6 * 3600, location_path=(OPERA,),
    )


def test_well_formed_verifier_reply():
    reply = (
        "SUFFICIENT: yes\nCONFIDENCE: 0.8\nVIOLATED: no\n"
        "ANSWER: yes\nMISSING: nothing"
    )
    verifier = RemoteVerifier(CONFIG, SLOT, transport=_transport_returning(reply))
    judgment = verifier.judge(_query(), Evidence(), TimeRef(DEC5_BASE, DEC5_BASE + 7200))
    assert judgment.sufficient
    assert judgment.confidence == 0.8
    assert judgment.candidate_answer is Verdict.YES
    assert judgment.missing == "nothing"


def test_time_answer_parses():
    stamp = to_iso(DEC5_BASE + 7 * SLOT)
    reply = f"SUFFICIENT: yes\nCONFIDENCE: 1.0\nVIOLATED: no\nANSWER: time={stamp}\nMISSING:"
    verifier = RemoteVerifier(CONFIG, SLOT, transport=_transport_returning(reply))
    judgment = verifier.judge(_query(), Evidence(), TimeRef(DEC5_BASE, DEC5_BASE + 7200))
    assert judgment.candidate_answer is Verdict.TIME
    assert judgment.candidate_time == DEC5_BASE + 7 * SLOT


def test_garbage_reply_retries_once_then_fails():
    transport = _transport_returning("nonsense", "more nonsense")
    verifier = RemoteVerifier(CONFIG, SLOT, transport=transport)
    with pytest.raises(ParseFailure):
        verifier.judge(_query(), Evidence(), TimeRef(DEC5_BASE, DEC5_BASE + 7200))
    assert transport.calls["n"] == 2


def test_network_error_surfaces():
    import requests

    def broken(url, headers, payload, timeout):
        raise requests.ConnectionError("connection refused")

    with pytest.raises(NetworkError):
        remote_agent_call("hello", CONFIG, transport=broken)


def test_rate_limit_backoff_then_error():
    transport = _transport_returning("irrelevant", statuses=[429, 429, 429])
    with pytest.raises(RateLimited):
        remote_agent_call("hello", CONFIG, transport=transport)
    assert transport.calls["n"] == CONFIG.rate_limit_attempts


def test_rate_limit_recovers():
    ok = "SUFFICIENT: no\nCONFIDENCE: 0.1\nVIOLATED: no\nANSWER: undecided\nMISSING: all"
    transport = _transport_returning(ok, ok, statuses=[429, 200])
    text = remote_agent_call("hello", CONFIG, transport=transport)
    assert "SUFFICIENT" in text


def test_missing_api_key(monkeypatch):
    monkeypatch.delenv("CHRONOKG_API_KEY", raising=False)
    with pytest.raises(NetworkError):
        remote_agent_call("hello", CONFIG, transport=_transport_returning("x"))


def test_planner_grammar():
    stamp = to_iso(DEC5_BASE + 2 * SLOT)
    reply = (
        f"NEXT_START: {stamp}\nNEXT_LOCATION: {OPERA}\n"
        "PATTERN: NEAREST_FEASIBLE_AFTER\nUTILITY: 3.5"
    )
    planner = RemotePlanner(CONFIG, SLOT, transport=_transport_returning(reply))
    q = QueryIntent(
        kind=QueryKind.Q3_EARLIEST_AFTER, anchor=TimeRef.point(DEC5_BASE),
        duration=2 * 3600, horizon=6 * 3600, location_path=(OPERA,),
    )
    proposal = planner.plan_update(q, Evidence(), q.window())
    assert proposal.next_anchor.start == DEC5_BASE + 2 * SLOT
    assert proposal.utility == 3.5


def test_controller_falls_back_to_rules_on_parse_failure(opera_kg):
    transport = _transport_returning("garbage")
    verifier = RemoteVerifier(CONFIG, SLOT, transport=transport)
    answer, trace = run(_query(), opera_kg, RunConfig(), verifier=verifier)
    assert answer.verdict is Verdict.NO  # rain at 13:30 decides the window
    assert trace.flags.get("remote_fallback")
