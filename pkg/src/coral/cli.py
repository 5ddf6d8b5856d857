"""``coral`` command-line entry point.

Exit codes: 0 success, 1 runtime failure (one-line diagnostic on stderr),
2 usage error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

from .baselines import BASELINE_KINDS, BaselineSpec, run_baseline
from .config import EngineConfig, config_from_dict, load_config, serialize_config
from .corpus_store import CorpusStore
from .errors import ConfigurationError, CoralError, DatasetError
from .evalkit import McqInstance, load_blend, load_click, render_table, report_json, score_batch
from .gateway import AgentGateway, ChatCompletionBackend, ScriptedBackend, ScriptedExchange, load_script
from .languages import parse_lang
from .loop import Engine, RunResult
from .vector_index import HashingEmbedder, HttpEmbedder, VectorIndex

logger = logging.getLogger("coral")

METHODS = ("coral", *BASELINE_KINDS)


class CliError(CoralError):
    pass


# -- engine assembly -------------------------------------------------------

def make_embedder(cfg: EngineConfig):
    if cfg.embedding.backend == "hashing":
        return HashingEmbedder(cfg.embedding.dim)
    ep = cfg.endpoints
    if not ep.embed_url or not ep.embed_model:
        raise ConfigurationError("embedding.backend=http needs endpoints.embed_url and endpoints.embed_model")
    return HttpEmbedder(ep.embed_url, ep.embed_model, api_key=cfg.resolve_secret(ep.embed_api_key_env),
                        timeout_s=ep.timeout_s, retries=cfg.retries.transport_retries,
                        backoff_s=cfg.retries.backoff_s, batch_size=cfg.embedding.batch_size,
                        max_in_flight=cfg.concurrency.max_in_flight)


def make_backend(cfg: EngineConfig, script: list[ScriptedExchange] | None):
    if script is not None:
        return ScriptedBackend(script)
    ep = cfg.endpoints
    if not ep.chat_url:
        raise ConfigurationError("no chat endpoint configured (set endpoints.chat_url, or pass --script)")
    models: Any = ep.models
    if not models:
        raise ConfigurationError("endpoints.models must name a model for each role")
    return ChatCompletionBackend(ep.chat_url, models, api_key=cfg.resolve_secret(ep.chat_api_key_env),
                                 timeout_s=ep.timeout_s, retries=cfg.retries.transport_retries,
                                 backoff_s=cfg.retries.backoff_s, effort_field=ep.effort_field)


def open_store(data_dir: Path) -> CorpusStore:
    return CorpusStore(data_dir / "corpora")


def open_index(cfg: EngineConfig, data_dir: Path, store: CorpusStore) -> VectorIndex:
    return VectorIndex(data_dir / "index", make_embedder(cfg), store, cfg.embedding.batch_size)


def build_engine(cfg: EngineConfig, data_dir: Path, script: list[ScriptedExchange] | None,
                 seed: int | None = None) -> Engine:
    store = open_store(data_dir)
    index = open_index(cfg, data_dir, store)
    gateway = AgentGateway(make_backend(cfg, script), cfg.role_settings(),
                           cfg.concurrency.max_in_flight, cfg.retries.parse_retries)
    header = {"engine": serialize_config(cfg), "seed": seed,
              "backend": "scripted" if script is not None else "live"}
    return Engine(store, index, gateway, cfg.loop_config(), cfg.pool(), header)


def parse_scope(text: str | None, query_lang: str | None) -> tuple[str, ...] | None:
    """Comma-separated codes; ``own`` stands for the query language."""
    if text is None:
        return None
    out = []
    for tok in (t.strip() for t in text.split(",")):
        if not tok:
            continue
        if tok.lower() == "own":
            if query_lang is None:
                raise CliError("scope 'own' needs --lang")
            tok = query_lang
        out.append(parse_lang(tok))
    if not out:
        raise CliError("empty --scope")
    return tuple(dict.fromkeys(out))


def execute(engine: Engine, method: str, query: str, query_lang: str | None, scope: str | None,
            uid: str | None = None) -> RunResult:
    if method == "coral":
        if scope is not None:
            raise CliError("--scope applies to baselines only; use loop.fixed_langs for coral")
        return engine.run_query(query, uid=uid)
    return run_baseline(engine, query, BaselineSpec(method, parse_scope(scope, query_lang)), query_lang, uid=uid)


def required_langs(cfg: EngineConfig, method: str, query_lang: str | None, scope: str | None) -> tuple[str, ...]:
    """Shards a method needs, so a missing index is reported before any agent call."""
    if method == "non_rag":
        return ()
    if method == "coral":
        lc = cfg.loop_config()
        return cfg.pool() if lc.enable_dynamic_corpora else lc.fixed_langs
    if method == "t_rag":
        return ("en",)
    if method == "mono_rag":
        explicit = parse_scope(scope, query_lang)
        if explicit:
            return explicit
        return (parse_lang(query_lang),) if query_lang else ()
    if method == "fixed_scope":
        return parse_scope(scope, query_lang) or ()
    return cfg.pool()


def preflight(cfg: EngineConfig, data_dir: Path, langs: Sequence[str]) -> None:
    store = open_store(data_dir)
    VectorIndex(data_dir / "index", None, store).require(langs)


def write_json(path: Path, obj: Any) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, ensure_ascii=False, indent=2) + "\n", encoding="utf-8")
    tmp.replace(path)
    return path


def _safe(text: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in text)[:80]


# -- subcommands -----------------------------------------------------------

def cmd_ingest(args, cfg: EngineConfig) -> int:
    store = open_store(args.data_dir)
    m = store.ingest_jsonl(args.jsonl, args.lang, cfg.chunk_policy())
    print(f"ingested {m.lang}: {m.doc_count} documents, {m.chunk_count} chunks")
    return 0


def cmd_index(args, cfg: EngineConfig) -> int:
    store = open_store(args.data_dir)
    index = open_index(cfg, args.data_dir, store)
    if args.lang == "all":
        langs = list(cfg.pool()) if args.allow_empty else [m.lang for m in store.list_corpora()]
        if not langs:
            raise CliError("no corpora ingested")
    else:
        langs = [parse_lang(args.lang)]
    for lang in langs:
        shard = index.build_shard(lang, allow_missing=args.allow_empty)
        print(f"indexed {lang}: {shard.rows} rows, dim {shard.dim}")
    return 0


def cmd_run(args, cfg: EngineConfig) -> int:
    preflight(cfg, args.data_dir, required_langs(cfg, args.method, args.lang, args.scope))
    engine = build_engine(cfg, args.data_dir, _global_script(args), args.seed)
    result = execute(engine, args.method, args.query, args.lang, args.scope, args.uid)
    name = f"run-{args.method}-{hashlib.sha256(args.query.encode()).hexdigest()[:12]}.json"
    path = write_json(args.trace_dir / name, result.to_json())
    print(f"answer: {result.answer or '-'}")
    print(f"iterations: {result.iterations_run}  evidence: {len(result.evidence_used)}  "
          f"tokens: {result.total_tokens}")
    print(f"trace: {path}")
    return 0


def _load_instances(args, cfg: EngineConfig) -> list[McqInstance]:
    path = args.data_file or (cfg.paths.blend if args.dataset == "blend" else cfg.paths.click)
    if path is None:
        raise CliError(f"no {args.dataset} file: pass --data-file or set paths.{args.dataset}")
    if args.dataset == "blend":
        return load_blend(path, cfg.tiers, one_per_question=args.one_per_question, seed=args.seed or 0)
    return load_click(path, cfg.tiers)


def cmd_eval(args, cfg: EngineConfig) -> int:
    instances = _load_instances(args, cfg)
    if args.limit is not None:
        instances = instances[:args.limit]
    script = _global_script(args)
    for lang in sorted({inst.source_lang for inst in instances}):
        preflight(cfg, args.data_dir, required_langs(cfg, args.method, lang, args.scope))
    engine = build_engine(cfg, args.data_dir, script, args.seed)
    out_dir = args.out or args.trace_dir / f"eval-{args.dataset}-{args.method}"
    workers = 1 if script is not None else cfg.concurrency.eval_workers

    def one(item: tuple[int, McqInstance]) -> RunResult:
        i, inst = item
        r = execute(engine, args.method, inst.question, inst.source_lang, args.scope, inst.uid)
        r.instance = inst.to_json()
        write_json(out_dir / "runs" / f"{i:05d}-{_safe(inst.uid)}.json", r.to_json())
        return r

    if workers == 1:
        results = [one(x) for x in enumerate(instances, start=1)]
    else:
        with ThreadPoolExecutor(workers) as ex:
            results = list(ex.map(one, enumerate(instances, start=1)))
    report = score_batch(instances, results, cfg.tiers, method=args.method)
    write_json(out_dir / "report.json", report_json([report]))
    table = render_table([report])
    (out_dir / "report.txt").write_text(table, encoding="utf-8")
    print(table, end="")
    print(f"accuracy: {report.accuracy:.4f} over {report.n} instances; mean iterations "
          f"{report.mean_iterations:.2f}")
    print(f"report: {out_dir / 'report.json'}")
    return 0


def load_trace_dir(path: Path) -> list[RunResult]:
    if not path.is_dir():
        raise CliError(f"not a directory: {path}")
    results = []
    for p in sorted(path.rglob("*.json")):
        try:
            data = json.loads(p.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise CliError(f"{p}: not valid JSON ({exc})") from None
        if isinstance(data, dict) and "trace" in data and "method" in data:
            results.append(RunResult.from_json(data))
    return results


def cmd_report(args, cfg: EngineConfig) -> int:
    results = load_trace_dir(args.trace_path)
    if not results:
        raise CliError(f"no run traces under {args.trace_path}")
    by_method: dict[str, list[RunResult]] = {}
    for r in results:
        by_method.setdefault(r.method, []).append(r)
    reports = []
    for method, runs in by_method.items():
        scored = [r for r in runs if r.instance]
        if len(scored) != len(runs):
            raise DatasetError(f"{len(runs) - len(scored)} {method} traces carry no instance metadata")
        instances = [McqInstance(r.instance["uid"], r.instance["dataset"], r.query,
                                 {k: str(v) for k, v in r.instance["options"].items()}, r.instance["gold"],
                                 r.instance["source_lang"], r.instance["group"], r.instance.get("tier"))
                     for r in scored]
        reports.append(score_batch(instances, scored, cfg.tiers, method=method))
    write_json(args.trace_path / "report.json", report_json(reports))
    print(render_table(reports), end="")
    for rep in reports:
        print(f"{rep.method}: n={rep.n} accuracy={rep.accuracy:.4f} mean_iterations={rep.mean_iterations:.2f} "
              f"mean_tokens={rep.mean_tokens:.1f}")
    return 0


def cmd_simulate(args, cfg: EngineConfig) -> int:
    """Run one query end to end on a self-contained scripted fixture.

    The fixture is a JSON object with ``exchanges`` plus ``query`` and
    ``corpora`` (lang -> list of ``{"id", "text"}``); optional ``method``,
    ``query_lang``, ``scope`` and ``config`` (overrides merged on top of the
    loaded config).
    """
    path = Path(args.sim_script or args.script or "")
    if not path.is_file():
        raise CliError("simulate needs --script <file>")
    fixture = json.loads(path.read_text(encoding="utf-8"))
    if not isinstance(fixture, dict) or "query" not in fixture or "corpora" not in fixture:
        raise CliError(f"{path}: a simulation fixture needs 'query', 'corpora' and 'exchanges'")
    if fixture.get("config"):
        cfg = config_from_dict(_deep_merge(serialize_config(cfg), fixture["config"]))
    method = fixture.get("method", "coral")
    if method not in METHODS:
        raise CliError(f"{path}: unknown method {method!r}")
    script = load_script(path)
    with tempfile.TemporaryDirectory(prefix="coral-sim-") as tmp:
        data_dir = Path(tmp)
        store = open_store(data_dir)
        for lang, docs in fixture["corpora"].items():
            payload = "".join(json.dumps(d, ensure_ascii=False) + "\n" for d in docs).encode("utf-8")
            store.ingest_bytes(payload, lang, cfg.chunk_policy())
        index = open_index(cfg, data_dir, store)
        for lang in cfg.pool():
            index.build_shard(lang, allow_missing=True)
        engine = build_engine(cfg, data_dir, script, args.seed)
        result = execute(engine, method, fixture["query"], fixture.get("query_lang"), fixture.get("scope"),
                         fixture.get("uid", path.stem))
        left = engine.gateway.backend.remaining
        if left:
            raise CliError(f"{path}: {left} scripted exchanges were never requested")
    out = write_json((args.out or args.trace_dir) / f"simulate-{_safe(path.stem)}.json", result.to_json())
    for rec in result.trace:
        langs = ",".join(rec.plan.language_names) if rec.plan else "-"
        enough = rec.decision.enough if rec.decision else "-"
        print(f"iteration {rec.iteration}: langs={langs} hits={len(rec.hits)} pool={rec.pool_size_after} "
              f"enough={enough}")
    print(f"answer: {result.answer or '-'}")
    print(f"trace: {out}")
    return 0


def _deep_merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


def _global_script(args) -> list[ScriptedExchange] | None:
    return load_script(args.script) if args.script else None


# -- parser ----------------------------------------------------------------

def _add_globals(p: argparse.ArgumentParser, suppress: bool, with_script: bool = True) -> None:
    # repeated on every subcommand so global options may follow the command name
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p.add_argument("--config", type=Path, default=d(None), help="JSON config file (defaults apply when omitted)")
    p.add_argument("--seed", type=int, default=d(None),
                   help="seed for sampling; retrieval has no random tie-breaks")
    if with_script:
        p.add_argument("--script", type=Path, default=d(None),
                       help="use the scripted agent backend with this exchange file")
    p.add_argument("--data-dir", type=Path, default=d(None),
                   help="corpus and index directory (overrides paths.data_dir)")
    p.add_argument("--trace-dir", type=Path, default=d(None),
                   help="trace output directory (overrides paths.trace_dir)")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="coral", description="Agentic multilingual RAG engine")
    _add_globals(p, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_globals(common, suppress=True)
    common_noscript = argparse.ArgumentParser(add_help=False)
    _add_globals(common_noscript, suppress=True, with_script=False)
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("ingest", parents=[common], help="chunk a JSONL corpus for one language")
    s.add_argument("lang")
    s.add_argument("jsonl", type=Path)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("index", parents=[common], help="embed a corpus into a search shard")
    s.add_argument("lang", help="language code or 'all'")
    s.add_argument("--allow-empty", action="store_true",
                   help="build empty shards for pool languages without a corpus")
    s.set_defaults(func=cmd_index)

    s = sub.add_parser("run", parents=[common], help="answer one query")
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--query", required=True)
    s.add_argument("--lang", help="query language (mono_rag and 'own' scope)")
    s.add_argument("--scope", help="comma-separated corpus codes for fixed_scope/mono_rag; 'own' = --lang")
    s.add_argument("--uid")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("eval", parents=[common], help="run a method over a benchmark and score it")
    s.add_argument("--dataset", choices=("blend", "click"), required=True)
    s.add_argument("--method", choices=METHODS, required=True)
    s.add_argument("--data-file", type=Path)
    s.add_argument("--limit", type=int)
    s.add_argument("--scope")
    s.add_argument("--one-per-question", action="store_true",
                   help="BLEnD: keep one seeded-random option set per question id")
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("report", parents=[common], help="aggregate a directory of run traces")
    s.add_argument("trace_path", type=Path)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("simulate", parents=[common_noscript], help="run a self-contained scripted fixture")
    s.add_argument("--script", dest="sim_script", type=Path)
    s.add_argument("--out", type=Path)
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "limit", None) is not None and args.limit < 0:
        parser.error("--limit must be non-negative")
    try:
        cfg = load_config(args.config)
        args.data_dir = args.data_dir or Path(cfg.paths.data_dir)
        args.trace_dir = args.trace_dir or Path(cfg.paths.trace_dir)
        return args.func(args, cfg)
    except (CoralError, OSError, ValueError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"coral: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
