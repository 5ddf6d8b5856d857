"""Agent gateway: one contract for every LLM role, with live and scripted bindings."""

from .backends import (ChatCompletionBackend, RuleBackend, ScriptedBackend, ScriptedExchange,
                       load_script)
from .core import (DEFAULT_ROLE_SETTINGS, JSON_REMINDER, ROLE_TAGS, AgentBackend, AgentGateway,
                   AgentRequest, AgentResponse, RoleSettings, Usage)
from .jsonparse import parse_json_object
from .prompts import ChatMessage, load_template, render_prompt, template_placeholders

__all__ = [
    "ChatCompletionBackend", "RuleBackend", "ScriptedBackend", "ScriptedExchange", "load_script",
    "DEFAULT_ROLE_SETTINGS", "JSON_REMINDER", "ROLE_TAGS", "AgentBackend", "AgentGateway",
    "AgentRequest", "AgentResponse", "RoleSettings", "Usage",
    "parse_json_object", "ChatMessage", "load_template", "render_prompt", "template_placeholders",
]
