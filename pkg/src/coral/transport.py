"""POST-JSON with bounded retries, shared by the chat and embedding clients."""

from __future__ import annotations

import logging
import time
from typing import Any

import httpx

from .errors import TransportError

logger = logging.getLogger(__name__)

RETRYABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})


def post_json(
    client: httpx.Client,
    url: str,
    payload: dict[str, Any],
    *,
    headers: dict[str, str] | None = None,
    retries: int = 3,
    backoff_s: float = 0.5,
    sleep=time.sleep,
) -> dict[str, Any]:
    """POST ``payload`` and return the decoded JSON body.

    Transport failures and retryable status codes are retried ``retries``
    times with exponential backoff (``backoff_s * 2**attempt``).
    Non-retryable HTTP errors fail immediately.
    """
    last: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            sleep(backoff_s * 2 ** (attempt - 1))
        try:
            resp = client.post(url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            last = exc
            logger.warning("POST %s failed (attempt %d): %s", url, attempt + 1, exc)
            continue
        if resp.status_code in RETRYABLE_STATUS:
            last = TransportError(f"HTTP {resp.status_code} from {url}")
            logger.warning("POST %s returned %d (attempt %d)", url, resp.status_code, attempt + 1)
            continue
        if resp.status_code >= 400:
            raise TransportError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
        try:
            body = resp.json()
        except ValueError as exc:
            raise TransportError(f"non-JSON response from {url}") from exc
        if not isinstance(body, dict):
            raise TransportError(f"expected a JSON object from {url}")
        return body
    raise TransportError(f"POST {url} failed after {retries + 1} attempts: {last}")
