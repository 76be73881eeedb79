"""Single entry point wiring ingest -> graph -> QA generation -> runs -> evaluation."""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - py310 path
    import tomli as tomllib

from . import evaluate, qa_gen
from .agents import QueryIntent, QueryKind
from .controller import RunConfig, RunMode, run, run_single_pass
from .errors import ChronoError
from .graph import TemporalKG, dump_jsonl, load_jsonl
from .ingest import (
    SCHEMAS,
    ParseResult,
    SynthParams,
    build_kg,
    merge_records,
    parse_corpus,
    synth_corpus,
    synth_near_edges,
)
from .intervals import TimeRef, from_iso, to_iso
from .retrieval import Evidence

_MODES = {
    "iterative": RunMode.ITERATIVE,
    "single-pass": RunMode.SINGLE_PASS,
    "limited-recall": RunMode.LIMITED_RECALL,
    "no-sufficiency": RunMode.NO_SUFFICIENCY_CHECK,
}


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _duration(text: str) -> int:
    """Parse '90m', '2h', '1d', or plain seconds."""
    raw = text.strip().lower()
    units = {"s": 1, "m": 60, "h": 3600, "d": 86400}
    if raw and raw[-1] in units:
        return int(float(raw[:-1]) * units[raw[-1]])
    return int(raw)


def _emit(obj: dict, out: str | None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _run_config(args, config: dict) -> RunConfig:
    """Config precedence: defaults < config file [run] < flags."""
    section = dict(config.get("run", {}))
    if getattr(args, "mode", None):
        section["mode"] = args.mode
    for name in ("theta", "t_max", "lam", "gamma", "radius", "hop_cap", "budget"):
        value = getattr(args, name, None)
        if value is not None:
            section[name] = value
    mode = section.pop("mode", "iterative")
    mode = _MODES[mode] if isinstance(mode, str) else mode
    if "lambda" in section:  # toml spelling
        section["lam"] = section.pop("lambda")
    return RunConfig(mode=mode, **section)


def _load_kg(path: str) -> TemporalKG:
    with open(path, encoding="utf-8") as fh:
        return load_jsonl(fh)


def _query_from_json(obj: dict, kg: TemporalKG) -> QueryIntent:
    locations = tuple(kg.resolve_location(ref) for ref in obj["locations"])
    duration = _duration(str(obj["duration"]))
    horizon = _duration(str(obj.get("horizon", "12h")))
    return QueryIntent(
        kind=QueryKind(obj["kind"]),
        anchor=TimeRef.point(from_iso(obj["anchor"])),
        duration=duration,
        horizon=max(horizon, duration),
        location_path=locations,
        event_kind=obj.get("event_kind", "rain"),
        threshold=obj.get("threshold"),
    )


# -- subcommands ---------------------------------------------------------------


def _cmd_ingest(args) -> int:
    config = _load_config(args.config)
    section = config.get("ingest", {})
    slot = args.slot or section.get("slot") or None
    tz = args.tz or section.get("tz", "UTC")
    percentile = args.percentile if args.percentile is not None else section.get("traffic_percentile", 95.0)

    results: list[ParseResult] = []
    for path in args.inputs:
        results.append(parse_corpus(path, args.schema, tz=tz, slot_duration=slot))
    records = merge_records(results)
    slot = slot or SCHEMAS[args.schema].default_slot
    near = [tuple(pair.split(",", 1)) for pair in args.near or []]
    kg = build_kg(records, slot_duration=slot, near_edges=near, traffic_percentile=percentile)
    with open(args.out, "w", encoding="utf-8") as fh:
        dump_jsonl(kg, fh)

    stats = kg.stats()
    rows_in = sum(r.rows_in for r in results)
    kept = sum(r.kept for r in results)
    dupes = sum(r.duplicates for r in results)
    skipped = sum(r.skipped for r in results)
    period = stats["period"]
    print("period              entities  relations  records")
    label = f"{to_iso(period[0])}..{to_iso(period[1])}" if period else "-"
    print(f"{label}  {stats['entities']:>8}  {stats['relations']:>9}  {stats['records']:>7}")
    print(f"rows_in={rows_in} kept={kept} duplicates={dupes} skipped={skipped}")
    if rows_in != kept + dupes + skipped:
        raise ChronoError("row accounting failed")
    return 0


def _cmd_synth(args) -> int:
    params = SynthParams(
        locations=args.locations,
        span_slots=args.slots,
        slot_duration=args.slot,
        event_rate=args.rate,
        seed=args.seed,
        chain_near=not args.no_near,
    )
    records = synth_corpus(params)
    kg = build_kg(records, slot_duration=args.slot, near_edges=synth_near_edges(params))
    with open(args.out, "w", encoding="utf-8") as fh:
        dump_jsonl(kg, fh)
    stats = kg.stats()
    print(json.dumps(stats, sort_keys=True))
    return 0


def _cmd_gen_qa(args) -> int:
    config = _load_config(args.config)
    section = config.get("qa", {})
    kg = _load_kg(args.kg)
    params = qa_gen.GenParams(
        m=args.m or section.get("m", 100),
        duration=_duration(args.dt or section.get("duration", "2h")),
        horizon=_duration(args.horizon or section.get("horizon", "12h")),
        seed=args.seed,
        event_kind=args.event_kind or section.get("event_kind", "rain"),
    )
    items = qa_gen.generate(kg, params)
    with open(args.out, "w", encoding="utf-8") as fh:
        qa_gen.dump_items(items, fh)
    q1 = [i for i in items if i.kind is qa_gen.QAKind.Q1]
    q2 = [i for i in items if i.kind is qa_gen.QAKind.Q2]
    q3 = [i for i in items if i.kind is qa_gen.QAKind.Q3]
    print(
        json.dumps(
            {
                "q1": {"n": len(q1), "true": sum(i.gold.label == "TRUE" for i in q1)},
                "q2": {"n": len(q2), "has_answer": sum(i.gold.label == "TIME" for i in q2)},
                "q3": {"n": len(q3), "has_answer": sum(i.gold.label == "TIME" for i in q3)},
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_answer(args) -> int:
    kg = _load_kg(args.kg)
    cfg = _run_config(args, _load_config(args.config))
    with open(args.query, encoding="utf-8") as fh:
        payload = json.load(fh)
    queries = payload["session"] if "session" in payload else [payload]

    out = []
    evidence: Evidence | None = None
    for obj in queries:
        q = _query_from_json(obj, kg)
        if cfg.mode is RunMode.SINGLE_PASS:
            answer, trace = run_single_pass(q, kg, args.w, cfg)
        else:
            answer, trace = run(q, kg, cfg, seed_evidence=evidence)
            evidence = trace.evidence
        out.append({"query": q.to_dict(), "answer": answer.to_dict(), "trace": trace.to_dict()})
    _emit({"results": out}, args.out)
    return 0


def _predict_items(kg: TemporalKG, items, cfg: RunConfig, w: int, jobs: int):
    def solve(item) -> evaluate.Prediction:
        q = item.to_query()
        if cfg.mode is RunMode.SINGLE_PASS:
            answer, trace = run_single_pass(q, kg, w, cfg)
        else:
            answer, trace = run(q, kg, cfg)
        return evaluate.Prediction(item_id=item.id, answer=answer, trace=trace)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            preds = list(pool.map(solve, items))
    else:
        preds = [solve(item) for item in items]
    return sorted(preds, key=lambda p: p.item_id)


def _cmd_bench(args) -> int:
    kg = _load_kg(args.kg)
    cfg = _run_config(args, _load_config(args.config))
    with open(args.qa, encoding="utf-8") as fh:
        items = qa_gen.load_items(fh)
    preds = _predict_items(kg, items, cfg, args.w, args.jobs)
    report = evaluate.score(preds, items, kg.slot_duration)
    _emit(report.to_dict(), args.out)
    if args.results:
        with open(args.results, "w", encoding="utf-8") as fh:
            for pred in preds:
                fh.write(
                    json.dumps(
                        {
                            "id": pred.item_id,
                            "answer": pred.answer.to_dict(),
                            "trace": pred.trace.to_dict(),
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
    if args.csv:
        by_id = {item.id: item for item in items}
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("id,kind,gold,verdict,correct,jaccard,kg_calls,llm_calls,triples,steps\n")
            for pred in preds:
                item = by_id[pred.item_id]
                hit = evaluate.exact_match(pred.answer, item, kg.slot_duration)
                union = pred.trace.retrieved_provenance | item.sd
                jac = (
                    len(pred.trace.retrieved_provenance & item.sd) / len(union)
                    if union
                    else 1.0
                )
                fh.write(
                    f"{pred.item_id},{item.kind.value},{item.gold.label},"
                    f"{pred.answer.verdict.value},{int(hit)},{jac:.6f},"
                    f"{pred.trace.kg_calls},{pred.trace.llm_calls},"
                    f"{pred.trace.triples_retrieved},{len(pred.trace.steps)}\n"
                )
    return 0


def _cmd_audit(args) -> int:
    kg = _load_kg(args.kg)
    cfg = _run_config(args, _load_config(args.config))
    with open(args.qa, encoding="utf-8") as fh:
        items = qa_gen.load_items(fh)
    preds = _predict_items(kg, items, cfg, args.w, args.jobs)
    by_id = {item.id: item for item in items}
    listing = []
    for pred in preds:
        flag, clause = evaluate.audit_hallucination(pred, by_id[pred.item_id], kg.slot_duration)
        listing.append(
            {
                "id": pred.item_id,
                "verdict": pred.answer.verdict.value,
                "hallucination": flag,
                "clause": clause,
            }
        )
    _emit({"items": listing, "rate": sum(e["hallucination"] for e in listing) / len(listing) if listing else 0.0}, args.out)
    return 0


def _cmd_cost_report(args) -> int:
    w_list = [int(w) for w in args.w_list.split(",")]
    cfg = RunConfig(t_max=args.t_max, budget=args.budget)

    iterative: list[evaluate.CostPoint] = []
    single: list[evaluate.CostPoint] = []
    for d_star in range(1, args.d_max + 1):
        for rep in range(args.per_d):
            inst = qa_gen.plant_offset_instance(
                d_star,
                dt_slots=args.dt_slots,
                horizon_slots=args.horizon_slots,
                seed=args.seed + rep * 1000 + d_star,
                noise_rate=args.noise,
            )
            _, trace = run(inst.query, inst.kg, cfg)
            iterative.append(
                evaluate.CostPoint(
                    d_star=d_star, kg_calls=trace.kg_calls, triples=trace.triples_retrieved,
                    mode="iterative",
                )
            )
            for w in w_list:
                answer, sp_trace = run_single_pass(inst.query, inst.kg, w, cfg)
                gold_start = inst.item.gold.time
                success = (
                    answer.verdict.value == "TIME"
                    and answer.decisive_time is not None
                    and answer.decisive_time.start == gold_start
                )
                retrieved = sp_trace.retrieved_provenance
                precision = len(retrieved & inst.sd) / len(retrieved) if retrieved else 0.0
                single.append(
                    evaluate.CostPoint(
                        d_star=d_star, kg_calls=sp_trace.kg_calls,
                        triples=sp_trace.triples_retrieved, mode="single_pass",
                        w=w, success=success, precision=precision,
                    )
                )
    report = evaluate.cost_report(iterative, single)
    _emit(report.to_dict(), args.out)
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as fh:
            fh.write("mode,d_star,w,kg_calls,triples,success,precision\n")
            for p in iterative + single:
                fh.write(
                    f"{p.mode},{p.d_star},{'' if p.w is None else p.w},{p.kg_calls},"
                    f"{p.triples},{'' if p.success is None else int(p.success)},"
                    f"{'' if p.precision is None else round(p.precision, 6)}\n"
                )
    return 0


def _add_run_flags(sub) -> None:
    sub.add_argument("--config", help="TOML config file")
    sub.add_argument("--mode", choices=sorted(_MODES), help="controller mode")
    sub.add_argument("--theta", type=float)
    sub.add_argument("--t-max", dest="t_max", type=int)
    sub.add_argument("--lambda", dest="lam", type=float)
    sub.add_argument("--gamma", type=float)
    sub.add_argument("--radius", type=int)
    sub.add_argument("--hop-cap", dest="hop_cap", type=int)
    sub.add_argument("--budget", type=int)
    sub.add_argument("--w", type=int, default=4, help="single-pass window radius in slots")
    sub.add_argument("--jobs", type=int, default=1)


def build_parser() -> _Parser:
    parser = _Parser(prog="chronokg", description=__doc__)
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("ingest", help="parse CSV corpora and build a graph")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--schema", required=True, choices=["irish", "sydney", "tfnsw"])
    p.add_argument("--slot", type=int, help="slot duration in seconds")
    p.add_argument("--tz", help="corpus-local timezone, e.g. Australia/Sydney")
    p.add_argument("--near", action="append", help="near edge 'LOC_A,LOC_B' (repeatable)")
    p.add_argument("--percentile", type=float, help="traffic abnormality percentile")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_ingest)

    p = commands.add_parser("synth", help="generate a synthetic corpus graph")
    p.add_argument("--locations", type=int, default=1)
    p.add_argument("--slots", type=int, default=96)
    p.add_argument("--slot", type=int, default=1800)
    p.add_argument("--rate", type=float, default=0.3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-near", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_synth)

    p = commands.add_parser("gen-qa", help="generate QA items with gold labels")
    p.add_argument("--kg", required=True)
    p.add_argument("--m", type=int)
    p.add_argument("--dt", help="trip duration, e.g. 2h")
    p.add_argument("--horizon", "--L", help="search horizon, e.g. 12h")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--event-kind", dest="event_kind")
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_gen_qa)

    p = commands.add_parser("answer", help="answer one query file (session-aware)")
    p.add_argument("--kg", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--out")
    _add_run_flags(p)
    p.set_defaults(fn=_cmd_answer)

    p = commands.add_parser("bench", help="run a QA file and score it")
    p.add_argument("--kg", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--out")
    p.add_argument("--results", help="write per-item results JSONL")
    p.add_argument("--csv", help="write per-item metric curves CSV")
    _add_run_flags(p)
    p.set_defaults(fn=_cmd_bench)

    p = commands.add_parser("audit", help="per-item hallucination clause listing")
    p.add_argument("--kg", required=True)
    p.add_argument("--qa", required=True)
    p.add_argument("--out")
    _add_run_flags(p)
    p.set_defaults(fn=_cmd_audit)

    p = commands.add_parser("cost-report", help="planted-offset cost and precision curves")
    p.add_argument("--d-max", dest="d_max", type=int, default=8)
    p.add_argument("--per-d", dest="per_d", type=int, default=5)
    p.add_argument("--w-list", dest="w_list", default="1,2,4,8")
    p.add_argument("--dt-slots", dest="dt_slots", type=int, default=1)
    p.add_argument("--horizon-slots", dest="horizon_slots", type=int, default=16)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--t-max", dest="t_max", type=int, default=12)
    p.add_argument("--budget", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--csv")
    p.set_defaults(fn=_cmd_cost_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except (ChronoError, OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except SystemExit:
        raise
    except Exception as exc:  # internal error contract
        sys.stderr.write(f"internal error: {exc.__class__.__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
