"""Single-shot comparison pipelines: retrieve top-k, optionally translate, generate.

None of these consult the planner or the critic; the raw top-k hits go
straight to the generator.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

from .critic import EvidenceItem
from .errors import TransportError
from .gateway import AgentGateway, Usage, render_prompt
from .languages import LANGUAGE_NAMES, parse_lang
from .loop import Engine, IterationRecord, RunResult
from .vector_index import ScoredHit

logger = logging.getLogger(__name__)

BASELINE_KINDS = ("non_rag", "mono_rag", "t_rag", "multi_rag", "cross_rag", "fixed_scope")
BASELINE_TOP_K = 5


@dataclass(frozen=True)
class BaselineSpec:
    kind: str
    scope: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.kind not in BASELINE_KINDS:
            raise ValueError(f"unknown baseline kind {self.kind!r}; expected one of {BASELINE_KINDS}")
        if self.scope is not None:
            object.__setattr__(self, "scope", tuple(dict.fromkeys(parse_lang(c) for c in self.scope)))
        if self.kind == "mono_rag" and self.scope is not None and len(self.scope) != 1:
            raise ValueError("mono_rag scope must be a single language")
        if self.kind == "fixed_scope" and not self.scope:
            raise ValueError("fixed_scope needs a non-empty scope")


def translate(gateway: AgentGateway, text: str, target: str, usage: Usage | None = None) -> str:
    """Translate ``text`` into ``target``; the completion is returned verbatim."""
    if not text:
        return ""
    target = parse_lang(target)
    messages = render_prompt("translator", {"TARGET_LANGUAGE": LANGUAGE_NAMES[target], "TEXT": text})
    return gateway.ask("translator", messages, usage).text


def _translate_or_keep(gateway: AgentGateway, text: str, usage: Usage, flags: list[str]) -> str:
    try:
        out = translate(gateway, text, "en", usage)
    except TransportError as exc:
        logger.warning("translation failed, keeping source text: %s", exc)
        flags.append("translation_failed")
        return text
    if text and not out.strip():
        flags.append("translation_empty")
        return text
    return out


def _evidence(engine: Engine, hits: list[ScoredHit]) -> list[EvidenceItem]:
    out = []
    for h in hits:
        chunk = engine.store.get_chunk(h.chunk_id)
        out.append(EvidenceItem(h.chunk_id, h.lang, chunk.text, None, None, "", 1, h.rank,
                                retrieval_score=h.score))
    return out


def run_baseline(engine: Engine, query: str, spec: BaselineSpec, query_lang: str | None = None,
                 uid: str | None = None, k: int = BASELINE_TOP_K) -> RunResult:
    """Run one comparison pipeline over ``query``.

    ``query_lang`` comes from dataset metadata and is required for
    ``mono_rag`` when ``spec.scope`` is None.
    """
    if not query.strip():
        raise ValueError("query must be non-empty")
    usage = Usage()
    flags: list[str] = []
    trace: list[IterationRecord] = []
    evidence: list[EvidenceItem] = []

    if spec.kind != "non_rag":
        retrieval_query = query
        if spec.kind == "mono_rag":
            if spec.scope is None and query_lang is None:
                raise ValueError("mono_rag needs a scope or a query language")
            scope = spec.scope or (parse_lang(query_lang),)
            engine.index.require(scope)
            hits = engine.index.search(engine.index.embed_query(query), scope, k)[scope[0]]
        elif spec.kind == "t_rag":
            engine.index.require(("en",))
            retrieval_query = _translate_or_keep(engine.gateway, query, usage, flags)
            hits = engine.index.search(engine.index.embed_query(retrieval_query), ("en",), k)["en"]
        else:
            scope = spec.scope if spec.kind == "fixed_scope" else engine.pool
            engine.index.require(scope)
            hits = engine.index.search_pooled(engine.index.embed_query(query), k, scope)
        evidence = _evidence(engine, hits)
        if spec.kind == "cross_rag":
            evidence = [EvidenceItem(e.chunk_id, e.lang,
                                     _translate_or_keep(engine.gateway, e.text, usage, flags),
                                     None, None, "", 1, e.retrieval_rank, e.retrieval_score, ("translated",))
                        for e in evidence]
        trace.append(IterationRecord(1, None, retrieval_query, list(hits), pool_size_after=len(evidence)))

    raw, letter = engine.generate_answer(query, evidence, usage, engine.loop.evidence_char_limit)
    return RunResult(
        method=spec.kind, query=query, answer=letter, raw_answer=raw, evidence_used=evidence,
        trace=trace, prompt_tokens=usage.prompt_tokens, completion_tokens=usage.completion_tokens,
        calls=list(usage.calls), flags=list(dict.fromkeys(flags)), uid=uid,
        config={**engine.config_header, "baseline": {"kind": spec.kind,
                                                     "scope": list(spec.scope) if spec.scope else None,
                                                     "query_lang": query_lang, "k": k}},
    )
