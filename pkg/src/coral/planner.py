"""Corpus selection and critique-conditioned replanning."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Any

from .gateway import AgentGateway, ChatMessage, Usage, render_prompt
from .languages import LANGUAGE_POOL

logger = logging.getLogger(__name__)

MAX_PLAN_LANGS = 3
FALLBACK_LANGS = ("en",)

MUST_CHANGE_REMINDER = (
    "Your answer repeats the previous decision. You MUST NOT simply repeat the previous decision. "
    "At least one of the following must change: the set of language codes (`language_names`), "
    "OR the rewritten query. Return only the JSON object."
)


class PlanParseError(ValueError):
    pass


@dataclass(frozen=True)
class RetrievalPlan:
    language_names: tuple[str, ...]
    rewritten_query: str | None = None
    iteration: int = 1
    flags: tuple[str, ...] = ()
    fixed: bool = False  # scope imposed by configuration, not chosen by the planner

    def __post_init__(self) -> None:
        if not self.language_names:
            raise ValueError("a plan needs at least one language")
        if len(set(self.language_names)) != len(self.language_names):
            raise ValueError("duplicate languages in plan")
        if not self.fixed and len(self.language_names) > MAX_PLAN_LANGS:
            raise ValueError(f"a plan may select at most {MAX_PLAN_LANGS} languages")
        bad = [c for c in self.language_names if c not in LANGUAGE_POOL]
        if bad:
            raise ValueError(f"languages outside the pool: {bad}")
        if self.iteration < 1:
            raise ValueError("iteration must be positive")

    @property
    def degraded(self) -> bool:
        return "fallback_plan" in self.flags

    def to_json(self) -> dict:
        return {
            "language_names": list(self.language_names),
            "rewritten_query": self.rewritten_query,
            "iteration": self.iteration,
            "flags": list(self.flags),
            "fixed": self.fixed,
        }


@dataclass(frozen=True)
class PlannerFeedback:
    original_query: str
    previous_retrieval_query: str
    previous_langs: tuple[str, ...]
    reason: str
    previous_iteration: int = 1

    def __post_init__(self) -> None:
        if not self.reason.strip():
            raise ValueError("replanning needs a non-empty reason")


def sanitize_plan(raw: Any, iteration: int = 1, pool: tuple[str, ...] = LANGUAGE_POOL) -> RetrievalPlan:
    """Coerce a parsed planner reply into a valid plan.

    Unknown codes are dropped, codes are lowercased and deduplicated in
    order, and the list is cut to three. An empty result falls back to
    English with a ``fallback_plan`` flag. A reply without
    ``language_names`` raises PlanParseError.
    """
    if not isinstance(raw, dict) or "language_names" not in raw:
        raise PlanParseError("planner reply lacks 'language_names'")
    names = raw["language_names"]
    if isinstance(names, str):
        names = [names]
    elif not isinstance(names, list):
        names = []
    flags: list[str] = []
    langs: list[str] = []
    for item in names:
        code = item.strip().lower() if isinstance(item, str) else None
        if code is None or code not in pool:
            flags.append("dropped_unknown_lang")
            continue
        if code not in langs:
            langs.append(code)
    if len(langs) > MAX_PLAN_LANGS:
        flags.append("truncated_langs")
        langs = langs[:MAX_PLAN_LANGS]
    if not langs:
        flags.append("fallback_plan")
        langs = list(FALLBACK_LANGS)

    rq = raw.get("rewritten_query")
    if isinstance(rq, str):
        rewritten: str | None = rq
    elif isinstance(rq, (int, float)) and not isinstance(rq, bool):
        rewritten = str(rq)
    else:
        rewritten = None
    return RetrievalPlan(tuple(langs), rewritten, iteration, tuple(dict.fromkeys(flags)))


def effective_query(plan: RetrievalPlan, previous_query: str) -> str:
    """The retrieval query a revised plan implies; an empty rewrite carries the previous one forward."""
    if plan.rewritten_query is not None and plan.rewritten_query.strip():
        return plan.rewritten_query
    return previous_query


def plan_changed(plan: RetrievalPlan, feedback: PlannerFeedback, allow_rewrite: bool = True) -> bool:
    if set(plan.language_names) != set(feedback.previous_langs):
        return True
    if not allow_rewrite:
        return False
    return effective_query(plan, feedback.previous_retrieval_query) != feedback.previous_retrieval_query


class Planner:
    def __init__(self, gateway: AgentGateway, pool: tuple[str, ...] = LANGUAGE_POOL):
        self.gateway = gateway
        self.pool = pool

    def plan_initial(self, query: str, usage: Usage | None = None) -> RetrievalPlan:
        if not query.strip():
            raise ValueError("query must be non-empty")
        messages = render_prompt("planner_initial", {"USER_QUERY": query})
        plan = self.gateway.ask_json("planner", messages, usage,
                                     validate=lambda obj: sanitize_plan(obj, 1, self.pool))
        if plan is None:
            logger.warning("planner reply unparsable; falling back to %s", FALLBACK_LANGS)
            return RetrievalPlan(FALLBACK_LANGS, None, 1, ("fallback_plan", "planner_unparsable"))
        # rewriting only starts at the second round
        if plan.rewritten_query is not None:
            plan = RetrievalPlan(plan.language_names, None, 1, plan.flags)
        return plan

    def revise_messages(self, feedback: PlannerFeedback) -> list[ChatMessage]:
        return render_prompt("planner_revise", {
            "USER_QUERY": feedback.original_query,
            "REWRITTEN_QUERY": feedback.previous_retrieval_query,
            "PREV_LANGS": json.dumps(list(feedback.previous_langs)),
            "REASON": feedback.reason,
        })

    def plan_revise(self, feedback: PlannerFeedback, usage: Usage | None = None,
                    allow_rewrite: bool = True,
                    fixed_langs: tuple[str, ...] | None = None) -> RetrievalPlan | None:
        """Return a revised plan, or None when the planner makes no usable progress.

        A reply that repeats the previous decision gets one corrective
        re-prompt; a second repeat, or an unparsable reply, yields None.
        With ``fixed_langs`` the planner's language choice is overridden, so
        only the rewrite can count as a change.
        """
        iteration = feedback.previous_iteration + 1
        messages = self.revise_messages(feedback)

        def validate(obj: dict) -> RetrievalPlan:
            plan = sanitize_plan(obj, iteration, self.pool)
            if fixed_langs is not None:
                plan = RetrievalPlan(tuple(fixed_langs), plan.rewritten_query, iteration, (), fixed=True)
            return plan

        plan = self.gateway.ask_json("planner", messages, usage, validate=validate)
        if plan is None:
            return None
        if plan_changed(plan, feedback, allow_rewrite):
            return plan
        logger.info("revised plan repeats the previous decision; re-prompting once")
        plan = self.gateway.ask_json("planner", [*messages, ChatMessage("user", MUST_CHANGE_REMINDER)],
                                     usage, validate=validate)
        if plan is None or not plan_changed(plan, feedback, allow_rewrite):
            return None
        return RetrievalPlan(plan.language_names, plan.rewritten_query, iteration,
                             plan.flags + ("corrected_repeat",), plan.fixed)
