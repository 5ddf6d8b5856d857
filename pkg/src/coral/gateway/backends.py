"""Agent backends: scripted replay, rule callbacks, and a live chat-completion client."""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping

import httpx

from ..errors import ScriptedBackendError, TransportError
from ..transport import post_json
from .core import AgentRequest, AgentResponse


@dataclass(frozen=True)
class ScriptedExchange:
    """One canned reply. ``ordinal`` is 1-based among requests of the same role."""

    role: str
    reply: str
    ordinal: int | None = None
    contains: str | None = None
    truncated: bool = False
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @classmethod
    def from_json(cls, d: Mapping[str, Any]) -> "ScriptedExchange":
        unknown = set(d) - {"role", "reply", "ordinal", "contains", "truncated",
                            "prompt_tokens", "completion_tokens"}
        if unknown:
            raise ValueError(f"unknown scripted exchange keys: {sorted(unknown)}")
        reply = d["reply"]
        if not isinstance(reply, str):
            reply = json.dumps(reply, ensure_ascii=False)
        return cls(d["role"], reply, d.get("ordinal"), d.get("contains"),
                   bool(d.get("truncated", False)),
                   int(d.get("prompt_tokens", 0)), int(d.get("completion_tokens", 0)))


def load_script(path: str | Path) -> list[ScriptedExchange]:
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data.get("exchanges", [])
    return [ScriptedExchange.from_json(d) for d in data]


class ScriptedBackend:
    """Replays exchanges strictly in order; any mismatch is an error."""

    def __init__(self, exchanges: list[ScriptedExchange]):
        self.exchanges = list(exchanges)
        self.position = 0
        self.seen: dict[str, int] = {}
        self._lock = threading.Lock()

    @property
    def remaining(self) -> int:
        return len(self.exchanges) - self.position

    def complete(self, request: AgentRequest) -> AgentResponse:
        with self._lock:
            ordinal = self.seen.get(request.role_tag, 0) + 1
            self.seen[request.role_tag] = ordinal
            if self.position >= len(self.exchanges):
                raise ScriptedBackendError(request.role_tag, ordinal, "script exhausted")
            ex = self.exchanges[self.position]
            if ex.role != request.role_tag:
                raise ScriptedBackendError(request.role_tag, ordinal,
                                           f"next scripted exchange is for role {ex.role!r}")
            if ex.ordinal is not None and ex.ordinal != ordinal:
                raise ScriptedBackendError(request.role_tag, ordinal,
                                           f"next scripted exchange expects ordinal {ex.ordinal}")
            if ex.contains is not None and ex.contains not in request.user_text:
                raise ScriptedBackendError(request.role_tag, ordinal,
                                           f"user prompt does not contain {ex.contains!r}")
            self.position += 1
        return AgentResponse(ex.reply, ex.prompt_tokens, ex.completion_tokens, ex.truncated)


Rule = Callable[[AgentRequest], "str | AgentResponse"]


class RuleBackend:
    """Computes replies from per-role callables; handy for property and fuzz tests."""

    def __init__(self, rules: Mapping[str, Rule]):
        self.rules = dict(rules)
        self.seen: dict[str, int] = {}
        self._lock = threading.Lock()

    def complete(self, request: AgentRequest) -> AgentResponse:
        with self._lock:
            ordinal = self.seen.get(request.role_tag, 0) + 1
            self.seen[request.role_tag] = ordinal
        rule = self.rules.get(request.role_tag)
        if rule is None:
            raise ScriptedBackendError(request.role_tag, ordinal, "no rule for this role")
        out = rule(request)
        return out if isinstance(out, AgentResponse) else AgentResponse(str(out))


class ChatCompletionBackend:
    """Live binding for the common chat-completions HTTP protocol."""

    def __init__(self, url: str, models: str | Mapping[str, str], *, api_key: str | None = None,
                 timeout_s: float = 300.0, retries: int = 3, backoff_s: float = 1.0,
                 effort_field: str = "reasoning_effort", client: httpx.Client | None = None):
        self.url = url
        self.models = models
        self.retries = retries
        self.backoff_s = backoff_s
        self.effort_field = effort_field
        self.headers = {"Authorization": f"Bearer {api_key}"} if api_key else None
        self.client = client or httpx.Client(timeout=timeout_s)

    def model_for(self, role: str) -> str:
        if isinstance(self.models, str):
            return self.models
        try:
            return self.models[role]
        except KeyError:
            raise TransportError(f"no model configured for role {role!r}") from None

    def payload(self, request: AgentRequest) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model_for(request.role_tag),
            "messages": [m.to_json() for m in request.messages],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        if request.effort_tag:
            body[self.effort_field] = request.effort_tag
        return body

    def complete(self, request: AgentRequest) -> AgentResponse:
        body = post_json(self.client, self.url, self.payload(request), headers=self.headers,
                         retries=self.retries, backoff_s=self.backoff_s)
        try:
            choice = body["choices"][0]
            text = choice["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat completion response: {exc!r}") from exc
        usage = body.get("usage") or {}
        return AgentResponse(
            text=text,
            prompt_tokens=int(usage.get("prompt_tokens") or 0),
            completion_tokens=int(usage.get("completion_tokens") or 0),
            truncated=choice.get("finish_reason") == "length",
        )
