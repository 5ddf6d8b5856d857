"""The closed pool of corpus languages."""

from __future__ import annotations

from typing import Iterable

from .errors import UnknownLanguageError

# Order matches the list handed to the planner.
LANGUAGE_POOL: tuple[str, ...] = (
    "id", "am", "su", "ar", "ha", "en", "zh", "ko", "as", "el", "fa", "es", "az",
)

LANGUAGE_NAMES: dict[str, str] = {
    "id": "Indonesian",
    "am": "Amharic",
    "su": "Sundanese",
    "ar": "Arabic",
    "ha": "Hausa",
    "en": "English",
    "zh": "Chinese",
    "ko": "Korean",
    "as": "Assamese",
    "el": "Greek",
    "fa": "Persian",
    "es": "Spanish",
    "az": "Azerbaijani",
}

_POOL = frozenset(LANGUAGE_POOL)


def is_pool_language(code: object) -> bool:
    return isinstance(code, str) and code.strip().lower() in _POOL


def parse_lang(code: object) -> str:
    """Return the canonical lowercase code, or raise for anything outside the pool."""
    if not isinstance(code, str):
        raise UnknownLanguageError(f"language code must be a string, got {code!r}")
    norm = code.strip().lower()
    if norm not in _POOL:
        raise UnknownLanguageError(f"unknown language code {code!r}; pool is {list(LANGUAGE_POOL)}")
    return norm


def parse_langs(codes: Iterable[object]) -> list[str]:
    return [parse_lang(c) for c in codes]
