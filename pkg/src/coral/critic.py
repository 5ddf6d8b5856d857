"""Per-document critique, evidence pooling, and the sufficiency check.

Scores are aggregated as

    total = relevance + 0.5 * (usefulness + clarity_specificity + compatibility)

in exact rational arithmetic, so ranking never depends on float ties.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Sequence

from .corpus_store import Chunk
from .gateway import AgentGateway, Usage, render_prompt

logger = logging.getLogger(__name__)

CRITERIA = ("relevance", "usefulness", "clarity_specificity", "compatibility")
SCORE_MIN, SCORE_MAX = 0, 5

UNPARSABLE_CRITIQUE = "unparsable"
EMPTY_POOL_TEXT = "No relevant documents were retrieved."
DEFAULT_INSUFFICIENT_REASON = "The retrieved documents were judged insufficient to answer the query."


@dataclass(frozen=True)
class Weights:
    relevance: Fraction = Fraction(1)
    usefulness: Fraction = Fraction(1, 2)
    clarity_specificity: Fraction = Fraction(1, 2)
    compatibility: Fraction = Fraction(1, 2)

    def __post_init__(self) -> None:
        for name in CRITERIA:
            v = Fraction(getattr(self, name))
            if v < 0:
                raise ValueError(f"weight {name} must be non-negative")
            object.__setattr__(self, name, v)


@dataclass(frozen=True)
class Thresholds:
    per_criterion_min: int = 2
    total_min: Fraction = Fraction(6)

    def __post_init__(self) -> None:
        object.__setattr__(self, "total_min", Fraction(self.total_min))


DEFAULT_WEIGHTS = Weights()
DEFAULT_THRESHOLDS = Thresholds()


@dataclass(frozen=True)
class CriterionScores:
    relevance: int
    usefulness: int
    clarity_specificity: int
    compatibility: int

    def __post_init__(self) -> None:
        for name in CRITERIA:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or not SCORE_MIN <= v <= SCORE_MAX:
                raise ValueError(f"{name} must be an integer in [0, 5], got {v!r}")

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.relevance, self.usefulness, self.clarity_specificity, self.compatibility)

    def to_json(self) -> dict:
        return dict(zip(CRITERIA, self.as_tuple()))


ZERO_SCORES = CriterionScores(0, 0, 0, 0)


def total_score(scores: CriterionScores, weights: Weights = DEFAULT_WEIGHTS) -> Fraction:
    return (weights.relevance * scores.relevance
            + weights.usefulness * scores.usefulness
            + weights.clarity_specificity * scores.clarity_specificity
            + weights.compatibility * scores.compatibility)


def is_valid(scores: CriterionScores, thresholds: Thresholds = DEFAULT_THRESHOLDS,
             weights: Weights = DEFAULT_WEIGHTS) -> bool:
    return (min(scores.as_tuple()) >= thresholds.per_criterion_min
            and total_score(scores, weights) >= thresholds.total_min)


@dataclass(frozen=True)
class Critique:
    scores: CriterionScores
    text: str
    chunk_id: str
    query_used: str
    lang: str = ""
    retrieval_rank: int = 0
    chunk_text: str = ""
    flags: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "lang": self.lang,
            "retrieval_rank": self.retrieval_rank,
            "scores": self.scores.to_json(),
            "critique": self.text,
            "query_used": self.query_used,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class EvidenceItem:
    """A document handed to the generator.

    Critic-validated items carry scores and ``s_tot``; baseline pipelines,
    which skip the critic, leave both as None and set ``retrieval_score``.
    """

    chunk_id: str
    lang: str
    text: str
    scores: CriterionScores | None
    s_tot: Fraction | None
    critique: str
    found_iteration: int
    retrieval_rank: int
    retrieval_score: float | None = None
    flags: tuple[str, ...] = ()

    def to_json(self) -> dict:
        return {
            "chunk_id": self.chunk_id,
            "lang": self.lang,
            "text": self.text,
            "scores": self.scores.to_json() if self.scores else None,
            "s_tot": float(self.s_tot) if self.s_tot is not None else None,
            "critique": self.critique,
            "found_iteration": self.found_iteration,
            "retrieval_rank": self.retrieval_rank,
            "retrieval_score": self.retrieval_score,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class SufficiencyDecision:
    enough: bool
    reason: str
    flags: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.enough and not self.reason.strip():
            raise ValueError("an insufficient decision needs a reason")

    def to_json(self) -> dict:
        return {"enough_documents": self.enough, "reason": self.reason, "flags": list(self.flags)}


def pool_order_key(item: EvidenceItem):
    return (-item.s_tot, -item.scores.relevance, item.found_iteration, item.chunk_id)


def pool_evidence(pool: Sequence[EvidenceItem], critiques: Iterable[Critique], iteration: int,
                  thresholds: Thresholds = DEFAULT_THRESHOLDS,
                  weights: Weights = DEFAULT_WEIGHTS) -> list[EvidenceItem]:
    """Merge valid critiques into the pool.

    One item per chunk id; a re-scored chunk keeps the higher total, and on
    a tie the earlier item. Result is sorted by (total desc, relevance desc,
    found_iteration asc, chunk_id asc).
    """
    by_id = {item.chunk_id: item for item in pool}
    for c in critiques:
        if not is_valid(c.scores, thresholds, weights):
            continue
        item = EvidenceItem(c.chunk_id, c.lang, c.chunk_text, c.scores, total_score(c.scores, weights),
                            c.text, iteration, c.retrieval_rank, flags=c.flags)
        old = by_id.get(c.chunk_id)
        if old is None or item.s_tot > old.s_tot or (
                item.s_tot == old.s_tot and item.found_iteration < old.found_iteration):
            by_id[c.chunk_id] = item
    return sorted(by_id.values(), key=pool_order_key)


def select_final(pool: Sequence[EvidenceItem], n: int = 5) -> list[EvidenceItem]:
    if n < 1:
        raise ValueError("n must be >= 1")
    return sorted(pool, key=pool_order_key)[:n]


def _coerce_score(value: Any) -> tuple[int, bool]:
    """Return (score, adjusted). Raises ValueError for values that are not numbers."""
    if isinstance(value, bool):
        raise ValueError("boolean is not a score")
    if isinstance(value, str):
        value = float(value.strip())
    if not isinstance(value, (int, float)):
        raise ValueError(f"not a number: {value!r}")
    if value != value or value in (float("inf"), float("-inf")):
        raise ValueError("non-finite score")
    adjusted = False
    if not float(value).is_integer():
        value = round(value)
        adjusted = True
    value = int(value)
    if value < SCORE_MIN or value > SCORE_MAX:
        value = min(max(value, SCORE_MIN), SCORE_MAX)
        adjusted = True
    return value, adjusted


def parse_critique_reply(obj: dict) -> tuple[CriterionScores, str, tuple[str, ...]]:
    scores = obj["scores"]
    if not isinstance(scores, dict):
        raise ValueError("'scores' must be an object")
    values = []
    flags = []
    for name in CRITERIA:
        v, adjusted = _coerce_score(scores[name])
        if adjusted:
            flags.append("score_clamped")
        values.append(v)
    text = obj.get("critique")
    text = text if isinstance(text, str) else ("" if text is None else str(text))
    if not text.strip():
        flags.append("empty_critique")
    return CriterionScores(*values), text, tuple(dict.fromkeys(flags))


def serialize_pool(pool: Sequence[EvidenceItem]) -> str:
    if not pool:
        return EMPTY_POOL_TEXT
    blocks = []
    for i, item in enumerate(pool, start=1):
        s = item.scores
        blocks.append(
            f"[{i}]\n"
            f"content: {item.text}\n"
            f"scores: relevance={s.relevance}, usefulness={s.usefulness}, "
            f"clarity_specificity={s.clarity_specificity}, compatibility={s.compatibility}, "
            f"s_tot={float(item.s_tot):g}\n"
            f"critique: {item.critique}"
        )
    return "\n\n".join(blocks)


def _parse_bool(v: Any) -> bool:
    if isinstance(v, bool):
        return v
    if isinstance(v, str) and v.strip().lower() in ("true", "false"):
        return v.strip().lower() == "true"
    raise ValueError(f"not a boolean: {v!r}")


@dataclass
class Critic:
    gateway: AgentGateway
    thresholds: Thresholds = field(default_factory=Thresholds)
    weights: Weights = field(default_factory=Weights)

    def score_document(self, query: str, chunk: Chunk, usage: Usage | None = None,
                       retrieval_rank: int = 0) -> Critique:
        messages = render_prompt("critic_score", {"QUERY": query, "DOCUMENTS": chunk.text})
        parsed = self.gateway.ask_json("critic", messages, usage, validate=parse_critique_reply)
        if parsed is None:
            logger.warning("critic reply for %s unparsable; scoring as zero", chunk.chunk_id)
            return Critique(ZERO_SCORES, UNPARSABLE_CRITIQUE, chunk.chunk_id, query, chunk.lang,
                            retrieval_rank, chunk.text, ("critic_unparsable",))
        scores, text, flags = parsed
        return Critique(scores, text, chunk.chunk_id, query, chunk.lang, retrieval_rank, chunk.text, flags)

    def pool(self, pool: Sequence[EvidenceItem], critiques: Iterable[Critique], iteration: int) -> list[EvidenceItem]:
        return pool_evidence(pool, critiques, iteration, self.thresholds, self.weights)

    def judge_sufficiency(self, query: str, pool: Sequence[EvidenceItem],
                          usage: Usage | None = None) -> SufficiencyDecision:
        messages = render_prompt("critic_sufficiency", {"QUERY": query, "DOCUMENTS": serialize_pool(pool)})

        def validate(obj: dict) -> SufficiencyDecision:
            enough = _parse_bool(obj["enough_documents"])
            reason = obj.get("reason")
            reason = reason if isinstance(reason, str) else ("" if reason is None else str(reason))
            if not enough and not reason.strip():
                return SufficiencyDecision(False, DEFAULT_INSUFFICIENT_REASON, ("empty_reason",))
            return SufficiencyDecision(enough, reason)

        decision = self.gateway.ask_json("sufficiency", messages, usage, validate=validate)
        if decision is None:
            logger.warning("sufficiency reply unparsable; stopping the loop")
            return SufficiencyDecision(True, "sufficiency reply unparsable", ("sufficiency_unparsable",))
        return decision
