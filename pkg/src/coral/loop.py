"""The retrieval-control loop and answer generation.

One run is a sequential state machine:

    plan -> embed retrieval query -> search selected corpora -> critique hits
         -> pool valid evidence -> sufficiency check -> (replan | stop)

followed by final evidence selection and generation. Every step is recorded
in an ``IterationRecord`` so a run can be replayed and analysed offline.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

from .corpus_store import CorpusStore
from .critic import (EMPTY_POOL_TEXT, Critic, Critique, CriterionScores, EvidenceItem,
                     SufficiencyDecision, Thresholds, Weights, select_final)
from .evalkit import extract_answer
from .gateway import AgentGateway, Usage, render_prompt
from .languages import LANGUAGE_POOL, parse_lang
from .planner import Planner, PlannerFeedback, RetrievalPlan, effective_query
from .vector_index import ScoredHit, VectorIndex

logger = logging.getLogger(__name__)

EVIDENCE_CHAR_LIMIT = 2000


@dataclass(frozen=True)
class LoopConfig:
    k_per_corpus: int = 5
    final_k: int = 5
    max_iterations: int = 3
    enable_query_rewrite: bool = True
    enable_dynamic_corpora: bool = True
    fixed_langs: tuple[str, ...] | None = None
    thresholds: Thresholds = field(default_factory=Thresholds)
    weights: Weights = field(default_factory=Weights)
    score_workers: int = 1
    evidence_char_limit: int = EVIDENCE_CHAR_LIMIT

    def __post_init__(self) -> None:
        for name in ("k_per_corpus", "final_k", "max_iterations", "score_workers", "evidence_char_limit"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.fixed_langs is not None:
            object.__setattr__(self, "fixed_langs", tuple(dict.fromkeys(parse_lang(c) for c in self.fixed_langs)))
            if not self.fixed_langs:
                raise ValueError("fixed_langs must not be empty")
        if not self.enable_dynamic_corpora and self.fixed_langs is None:
            raise ValueError("enable_dynamic_corpora=False needs fixed_langs")

    def to_json(self) -> dict:
        return {
            "k_per_corpus": self.k_per_corpus,
            "final_k": self.final_k,
            "max_iterations": self.max_iterations,
            "enable_query_rewrite": self.enable_query_rewrite,
            "enable_dynamic_corpora": self.enable_dynamic_corpora,
            "fixed_langs": list(self.fixed_langs) if self.fixed_langs is not None else None,
            "thresholds": {"per_criterion_min": self.thresholds.per_criterion_min,
                           "total_min": float(self.thresholds.total_min)},
            "weights": {k: float(getattr(self.weights, k)) for k in
                        ("relevance", "usefulness", "clarity_specificity", "compatibility")},
            "score_workers": self.score_workers,
            "evidence_char_limit": self.evidence_char_limit,
        }


@dataclass
class IterationRecord:
    iteration: int
    plan: RetrievalPlan | None
    retrieval_query: str
    hits: list[ScoredHit]
    critiques: list[Critique] = field(default_factory=list)
    pool_size_after: int = 0
    decision: SufficiencyDecision | None = None
    flags: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "iteration": self.iteration,
            "plan": self.plan.to_json() if self.plan else None,
            "retrieval_query": self.retrieval_query,
            "hits": [h.to_json() for h in self.hits],
            "critiques": [c.to_json() for c in self.critiques],
            "pool_size_after": self.pool_size_after,
            "decision": self.decision.to_json() if self.decision else None,
            "flags": list(self.flags),
        }

    @classmethod
    def from_json(cls, d: dict) -> "IterationRecord":
        p = d.get("plan")
        plan = (RetrievalPlan(tuple(p["language_names"]), p.get("rewritten_query"), p["iteration"],
                              tuple(p.get("flags", ())), p.get("fixed", False)) if p else None)
        critiques = [Critique(CriterionScores(**c["scores"]), c["critique"], c["chunk_id"], c["query_used"],
                              c.get("lang", ""), c.get("retrieval_rank", 0), "", tuple(c.get("flags", ())))
                     for c in d.get("critiques", [])]
        dec = d.get("decision")
        decision = (SufficiencyDecision(dec["enough_documents"], dec["reason"], tuple(dec.get("flags", ())))
                    if dec else None)
        return cls(d["iteration"], plan, d["retrieval_query"], [ScoredHit(**h) for h in d["hits"]],
                   critiques, d.get("pool_size_after", 0), decision, list(d.get("flags", [])))


@dataclass
class RunResult:
    method: str
    query: str
    answer: str | None
    raw_answer: str
    evidence_used: list[EvidenceItem]
    trace: list[IterationRecord]
    prompt_tokens: int = 0
    completion_tokens: int = 0
    calls: list[str] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    uid: str | None = None
    config: dict[str, Any] = field(default_factory=dict)
    instance: dict[str, Any] | None = None

    @property
    def iterations_run(self) -> int:
        return len(self.trace)

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "uid": self.uid,
            "query": self.query,
            "config": self.config,
            "instance": self.instance,
            "answer": self.answer,
            "raw_answer": self.raw_answer,
            "iterations_run": self.iterations_run,
            "tokens": {"prompt": self.prompt_tokens, "completion": self.completion_tokens},
            "calls": list(self.calls),
            "flags": list(self.flags),
            "evidence_used": [e.to_json() for e in self.evidence_used],
            "trace": [r.to_json() for r in self.trace],
        }

    @classmethod
    def from_json(cls, d: dict) -> "RunResult":
        evidence = []
        for e in d.get("evidence_used", []):
            scores = CriterionScores(**e["scores"]) if e.get("scores") else None
            s_tot = Fraction(e["s_tot"]).limit_denominator(1000) if e.get("s_tot") is not None else None
            evidence.append(EvidenceItem(e["chunk_id"], e["lang"], e.get("text", ""), scores, s_tot,
                                         e.get("critique", ""), e["found_iteration"], e["retrieval_rank"],
                                         e.get("retrieval_score"), tuple(e.get("flags", ()))))
        tokens = d.get("tokens", {})
        return cls(d["method"], d["query"], d.get("answer"), d.get("raw_answer", ""), evidence,
                   [IterationRecord.from_json(r) for r in d.get("trace", [])],
                   tokens.get("prompt", 0), tokens.get("completion", 0), list(d.get("calls", [])),
                   list(d.get("flags", [])), d.get("uid"), d.get("config", {}), d.get("instance"))


def render_evidence(evidence: Sequence[EvidenceItem], char_limit: int = EVIDENCE_CHAR_LIMIT) -> str:
    if not evidence:
        return EMPTY_POOL_TEXT
    return "\n\n".join(f"[{i}] ({e.lang}) {e.text[:char_limit]}" for i, e in enumerate(evidence, start=1))


class Engine:
    """Holds the shared, read-only pieces (store, index, gateway) that runs use."""

    def __init__(self, store: CorpusStore, index: VectorIndex, gateway: AgentGateway,
                 loop: LoopConfig | None = None, pool: tuple[str, ...] = LANGUAGE_POOL,
                 config_header: dict | None = None):
        self.store = store
        self.index = index
        self.gateway = gateway
        self.loop = loop or LoopConfig()
        self.pool = tuple(pool)
        self.config_header = config_header or {}
        self.planner = Planner(gateway, self.pool)

    def critic_for(self, cfg: LoopConfig) -> Critic:
        return Critic(self.gateway, cfg.thresholds, cfg.weights)

    def generate_answer(self, query: str, evidence: Sequence[EvidenceItem], usage: Usage | None = None,
                        char_limit: int = EVIDENCE_CHAR_LIMIT) -> tuple[str, str | None]:
        messages = render_prompt("generator_mcq", {"Docs": render_evidence(evidence, char_limit), "Query": query})
        raw = self.gateway.ask("generator", messages, usage).text
        return raw, extract_answer(raw)

    def _score_hits(self, critic: Critic, query: str, hits: list[ScoredHit], usage: Usage,
                    workers: int) -> list[Critique]:
        def one(hit: ScoredHit) -> Critique:
            return critic.score_document(query, self.store.get_chunk(hit.chunk_id), usage, hit.rank)

        if workers <= 1 or len(hits) <= 1:
            return [one(h) for h in hits]
        with ThreadPoolExecutor(min(workers, len(hits))) as ex:
            return list(ex.map(one, hits))

    def run_query(self, query: str, cfg: LoopConfig | None = None, uid: str | None = None) -> RunResult:
        cfg = cfg or self.loop
        if not query.strip():
            raise ValueError("query must be non-empty")
        dynamic = cfg.enable_dynamic_corpora
        self.index.require(self.pool if dynamic else cfg.fixed_langs)

        critic = self.critic_for(cfg)
        usage = Usage()
        trace: list[IterationRecord] = []
        run_flags: list[str] = []
        pool: list[EvidenceItem] = []
        retrieval_query = query
        plan: RetrievalPlan | None = None
        decision: SufficiencyDecision | None = None

        for iteration in range(1, cfg.max_iterations + 1):
            if iteration == 1:
                plan = (self.planner.plan_initial(query, usage) if dynamic
                        else RetrievalPlan(cfg.fixed_langs, None, 1, fixed=True))
            else:
                if not dynamic and not cfg.enable_query_rewrite:
                    run_flags.append("no_progress")
                    break
                feedback = PlannerFeedback(query, retrieval_query, plan.language_names, decision.reason,
                                           iteration - 1)
                revised = self.planner.plan_revise(
                    feedback, usage, allow_rewrite=cfg.enable_query_rewrite,
                    fixed_langs=None if dynamic else cfg.fixed_langs)
                if revised is None:
                    run_flags.append("no_progress")
                    break
                plan = revised
                if cfg.enable_query_rewrite:
                    retrieval_query = effective_query(plan, retrieval_query)

            record = IterationRecord(iteration, plan, retrieval_query, [])
            record.flags.extend(plan.flags)
            qvec = self.index.embed_query(retrieval_query)
            by_lang = self.index.search(qvec, plan.language_names, cfg.k_per_corpus)
            record.hits = [h for lang in plan.language_names for h in by_lang[lang]]
            record.critiques = self._score_hits(critic, retrieval_query, record.hits, usage, cfg.score_workers)
            for c in record.critiques:
                record.flags.extend(f for f in c.flags if f not in record.flags)
            pool = critic.pool(pool, record.critiques, iteration)
            record.pool_size_after = len(pool)
            decision = critic.judge_sufficiency(query, pool, usage)
            record.decision = decision
            record.flags.extend(decision.flags)
            trace.append(record)
            if decision.enough:
                break

        evidence = select_final(pool, cfg.final_k)
        raw, letter = self.generate_answer(query, evidence, usage, cfg.evidence_char_limit)
        return RunResult(
            method="coral", query=query, answer=letter, raw_answer=raw, evidence_used=evidence,
            trace=trace, prompt_tokens=usage.prompt_tokens, completion_tokens=usage.completion_tokens,
            calls=list(usage.calls), flags=run_flags, uid=uid,
            config={**self.config_header, "loop": cfg.to_json()},
        )
