"""Pull one JSON object out of free-form model output."""

from __future__ import annotations

import json
import re
from typing import Any, Iterator

from ..errors import JSONExtractionError

_MAX_RESTARTS = 64
_FENCED_RE = re.compile(r"\s*```[\w-]*[ \t]*\n?(.*?)\n?[ \t]*```\s*", re.DOTALL)


def _balanced_objects(text: str) -> Iterator[str]:
    """Yield every top-level ``{...}`` span in order, skipping braces inside strings."""
    i, n = 0, len(text)
    restarts = 0
    while i < n:
        start = text.find("{", i)
        if start < 0:
            return
        depth = 0
        in_str = False
        esc = False
        j = start
        while j < n:
            ch = text[j]
            if in_str:
                if esc:
                    esc = False
                elif ch == "\\":
                    esc = True
                elif ch == '"':
                    in_str = False
            elif ch == '"':
                in_str = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield text[start:j + 1]
                    break
            j += 1
        else:
            # unbalanced from here; a later "{" may still open a complete object
            restarts += 1
            if restarts > _MAX_RESTARTS:
                return
            i = start + 1
            continue
        i = j + 1


def parse_json_object(text: Any) -> dict[str, Any]:
    """Return the first balanced top-level JSON object found in ``text``.

    A fully fenced reply (```json ... ```) is unwrapped first; string
    contents are never rewritten. If the first balanced span is not valid
    JSON the scan moves on to the next one.
    """
    if not isinstance(text, str):
        raise JSONExtractionError(f"expected text, got {type(text).__name__}")
    fenced = _FENCED_RE.fullmatch(text)
    cleaned = fenced.group(1) if fenced else text
    for candidate in _balanced_objects(cleaned):
        try:
            value = json.loads(candidate)
        except (json.JSONDecodeError, RecursionError):
            continue
        if isinstance(value, dict):
            return value
    raise JSONExtractionError("no balanced JSON object found in agent output")
