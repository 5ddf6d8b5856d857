"""Prompt templates and rendering.

Templates live in ``templates/<id>.txt`` as ``=== SYSTEM ===`` / ``=== USER ===``
sections. Only the known placeholder names are substituted, so literal JSON
braces inside the templates are left alone.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Mapping

from ..errors import TemplateError

PLACEHOLDERS = (
    "Docs", "Query", "USER_QUERY", "REWRITTEN_QUERY", "PREV_LANGS", "REASON",
    "QUERY", "DOCUMENTS", "TARGET_LANGUAGE", "TEXT",
)
PLACEHOLDER_RE = re.compile(r"\{(" + "|".join(PLACEHOLDERS) + r")\}")

TEMPLATE_IDS = (
    "planner_initial", "planner_revise", "critic_score", "critic_sufficiency",
    "generator_mcq", "generator_short", "translator",
)

_SECTION_RE = re.compile(r"^=== (SYSTEM|USER) ===\n", re.MULTILINE)


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user"):
            raise ValueError(f"unsupported message role {self.role!r}")
        if not self.content:
            raise ValueError("message content must be non-empty")

    def to_json(self) -> dict:
        return {"role": self.role, "content": self.content}


@lru_cache(maxsize=None)
def load_template(template_id: str) -> tuple[tuple[str, str], ...]:
    """Return the ``(role, text)`` sections of a stored template."""
    if template_id not in TEMPLATE_IDS:
        raise KeyError(f"unknown template {template_id!r}")
    raw = resources.files("coral.gateway").joinpath(f"templates/{template_id}.txt").read_text(encoding="utf-8")
    parts = _SECTION_RE.split(raw)
    # parts = ['', 'SYSTEM', text, 'USER', text]
    sections = []
    for role, text in zip(parts[1::2], parts[2::2]):
        sections.append((role.lower(), text[:-1] if text.endswith("\n") else text))
    return tuple(sections)


def template_placeholders(template_id: str) -> set[str]:
    return {m.group(1) for _, text in load_template(template_id) for m in PLACEHOLDER_RE.finditer(text)}


def fill(text: str, bindings: Mapping[str, str]) -> str:
    def sub(m: re.Match) -> str:
        name = m.group(1)
        if name not in bindings:
            raise TemplateError(name)
        return str(bindings[name])

    return PLACEHOLDER_RE.sub(sub, text)


def render_prompt(template_id: str, bindings: Mapping[str, str]) -> list[ChatMessage]:
    """Substitute ``bindings`` into a stored template in a single pass.

    Raises TemplateError naming the first placeholder without a binding.
    """
    return [ChatMessage(role, fill(text, bindings)) for role, text in load_template(template_id)]
