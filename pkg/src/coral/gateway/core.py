from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Protocol, Sequence

from ..errors import JSONExtractionError
from .jsonparse import parse_json_object
from .prompts import ChatMessage

logger = logging.getLogger(__name__)

ROLE_TAGS = ("planner", "critic", "sufficiency", "generator", "translator")

JSON_REMINDER = "Return only the JSON object."


@dataclass(frozen=True)
class RoleSettings:
    temperature: float
    top_p: float = 1.0
    max_tokens: int = 32768
    effort_tag: str | None = None


DEFAULT_ROLE_SETTINGS: dict[str, RoleSettings] = {
    "planner": RoleSettings(0.6, 1.0, 32768),
    "critic": RoleSettings(0.6, 1.0, 32768),
    "sufficiency": RoleSettings(0.6, 1.0, 32768),
    "generator": RoleSettings(0.0, 1.0, 4096),
    "translator": RoleSettings(0.0, 1.0, 4096),
}


@dataclass(frozen=True)
class AgentRequest:
    role_tag: str
    messages: tuple[ChatMessage, ...]
    temperature: float
    top_p: float
    max_tokens: int
    effort_tag: str | None = None

    def __post_init__(self) -> None:
        if self.role_tag not in ROLE_TAGS:
            raise ValueError(f"unknown role tag {self.role_tag!r}")
        if not self.messages:
            raise ValueError("request needs at least one message")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")

    @property
    def user_text(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "user")


@dataclass(frozen=True)
class AgentResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    truncated: bool = False


class AgentBackend(Protocol):
    def complete(self, request: AgentRequest) -> AgentResponse: ...


@dataclass
class Usage:
    """Token and call accounting for one run."""

    prompt_tokens: int = 0
    completion_tokens: int = 0
    calls: list[str] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def record(self, role: str, resp: AgentResponse) -> None:
        with self._lock:
            self.prompt_tokens += resp.prompt_tokens
            self.completion_tokens += resp.completion_tokens
            self.calls.append(role)

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


class AgentGateway:
    """Single entry point for every agent role.

    Applies per-role sampling defaults, caps concurrent calls, retries once
    with doubled ``max_tokens`` when the backend reports truncation, and
    re-asks up to ``parse_retries`` times when a JSON reply is unusable.
    """

    def __init__(self, backend: AgentBackend,
                 role_settings: Mapping[str, RoleSettings] | None = None,
                 max_in_flight: int = 8, parse_retries: int = 2):
        self.backend = backend
        self.role_settings = dict(DEFAULT_ROLE_SETTINGS)
        if role_settings:
            self.role_settings.update(role_settings)
        self.parse_retries = parse_retries
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))

    def make_request(self, role: str, messages: Sequence[ChatMessage]) -> AgentRequest:
        s = self.role_settings[role]
        return AgentRequest(role, tuple(messages), s.temperature, s.top_p, s.max_tokens, s.effort_tag)

    def complete(self, request: AgentRequest, usage: Usage | None = None) -> AgentResponse:
        with self._slots:
            resp = self.backend.complete(request)
        if usage is not None:
            usage.record(request.role_tag, resp)
        if resp.truncated:
            logger.info("%s reply truncated at %d tokens; retrying with %d",
                        request.role_tag, request.max_tokens, request.max_tokens * 2)
            bigger = replace(request, max_tokens=request.max_tokens * 2)
            with self._slots:
                resp = self.backend.complete(bigger)
            if usage is not None:
                usage.record(request.role_tag, resp)
        return resp

    def ask(self, role: str, messages: Sequence[ChatMessage], usage: Usage | None = None) -> AgentResponse:
        return self.complete(self.make_request(role, messages), usage)

    def ask_json(self, role: str, messages: Sequence[ChatMessage], usage: Usage | None = None,
                 validate: Callable[[dict[str, Any]], Any] | None = None) -> Any:
        """Ask for a JSON object; returns ``validate(obj)`` (or ``obj``), or None when every attempt failed.

        ``validate`` may raise ``ValueError``/``KeyError``/``TypeError`` to reject
        a syntactically valid but unusable object, which also triggers a re-ask.
        """
        for attempt in range(self.parse_retries + 1):
            msgs = list(messages)
            if attempt:
                msgs.append(ChatMessage("user", JSON_REMINDER))
            resp = self.ask(role, msgs, usage)
            try:
                obj = parse_json_object(resp.text)
                return validate(obj) if validate else obj
            except (JSONExtractionError, ValueError, KeyError, TypeError) as exc:
                logger.debug("%s reply unusable (attempt %d): %s", role, attempt + 1, exc)
        return None
