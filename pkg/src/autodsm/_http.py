"""JSON-over-HTTPS POST with bounded exponential backoff."""

from __future__ import annotations

import logging
import time
from typing import Any, Callable

import httpx

log = logging.getLogger(__name__)

RETRY_STATUSES = frozenset({429, 500, 502, 503, 504})


class BackendError(Exception):
    """A provider call failed. ``retriable`` says whether trying again could help."""

    def __init__(self, message: str, status: int | None = None, retriable: bool = False):
        super().__init__(message)
        self.status = status
        self.retriable = retriable


def post_json(
    client: httpx.Client,
    url: str,
    payload: dict[str, Any],
    headers: dict[str, str],
    retries: int = 3,
    backoff: float = 1.0,
    sleep: Callable[[float], None] = time.sleep,
) -> Any:
    attempt = 0
    while True:
        try:
            resp = client.post(url, json=payload, headers=headers)
        except httpx.TransportError as exc:
            err = BackendError(f"transport error calling {url}: {exc}", retriable=True)
        else:
            if resp.status_code < 400:
                try:
                    return resp.json()
                except ValueError:
                    raise BackendError(
                        f"{url} returned non-JSON body", status=resp.status_code
                    ) from None
            retriable = resp.status_code in RETRY_STATUSES
            err = BackendError(
                f"{url} returned HTTP {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
                retriable=retriable,
            )
        if not err.retriable or attempt >= retries:
            raise err
        delay = backoff * (2**attempt)
        log.warning("%s; retrying in %.1fs (%d/%d)", err, delay, attempt + 1, retries)
        sleep(delay)
        attempt += 1


def auth_headers(api_key: str | None) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if api_key:
        headers["Authorization"] = f"Bearer {api_key}"
    return headers
