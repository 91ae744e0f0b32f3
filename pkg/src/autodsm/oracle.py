"""Chat-completion backends: remote endpoint, scripted replay and an on-disk cache.

Script files for :class:`ScriptedBackend` are plain text made of blocks.  A
block opens with a directive line and its answer is every following line up
to the next directive (trailing newlines dropped)::

    # lines before the first directive are comments
    @@ contains: Are Piston and Crankshaft linked?
    Yes
    @@ key: 3f2a...e9
    No

``contains:`` matches any request whose prompt text contains the pattern;
when several patterns match, the longest wins.  ``key:`` matches a request
fingerprint exactly (see :func:`prompt_fingerprint`) and takes precedence.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence

import httpx

from autodsm._http import BackendError, auth_headers, post_json

log = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo"
DIRECTIVE = "@@ "


class ScriptMissError(Exception):
    """A scripted backend was asked something its script does not cover."""


@dataclass(frozen=True)
class CompletionRequest:
    system_text: str
    user_text: str
    temperature: float = 0.0
    model_id: str = DEFAULT_MODEL


@dataclass(frozen=True)
class CompletionAnswer:
    text: str
    backend_id: str
    cached: bool = False


class ChatBackend(Protocol):
    backend_id: str

    def complete(self, req: CompletionRequest) -> CompletionAnswer: ...


def _digest(parts: Sequence[object]) -> str:
    blob = json.dumps(list(parts), ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def cache_key(req: CompletionRequest) -> str:
    return _digest([req.model_id, float(req.temperature), req.system_text, req.user_text])


def prompt_fingerprint(system_text: str, user_text: str) -> str:
    return _digest([system_text, user_text])


def complete(backend: ChatBackend, req: CompletionRequest) -> CompletionAnswer:
    return backend.complete(req)


@dataclass(frozen=True)
class ScriptRule:
    kind: str  # "key" or "contains"
    pattern: str
    answer: str


def parse_script(text: str) -> list[ScriptRule]:
    rules: list[ScriptRule] = []
    current: tuple[str, str] | None = None
    body: list[str] = []

    def flush() -> None:
        if current is not None:
            rules.append(ScriptRule(current[0], current[1], "\n".join(body).rstrip("\n")))

    for lineno, line in enumerate(text.splitlines(), start=1):
        if line.startswith(DIRECTIVE):
            flush()
            kind, sep, pattern = line[len(DIRECTIVE) :].partition(":")
            kind = kind.strip()
            pattern = pattern.strip()
            if not sep or kind not in ("key", "contains") or not pattern:
                raise ValueError(f"script line {lineno}: expected '@@ key: <hex>' or '@@ contains: <text>'")
            current = (kind, pattern)
            body = []
        elif current is not None:
            body.append(line)
    flush()
    return rules


class ScriptedBackend:
    """Replays canned answers; an unmatched request is an error, never a guess."""

    backend_id = "scripted"

    def __init__(self, script: Mapping[str, str] | None = None, rules: Iterable[ScriptRule] = ()):
        self._by_key: dict[str, str] = dict(script or {})
        self._contains: dict[str, str] = {}
        for rule in rules:
            table = self._by_key if rule.kind == "key" else self._contains
            if rule.pattern in table:
                raise ValueError(f"duplicate script entry for {rule.kind} {rule.pattern!r}")
            table[rule.pattern] = rule.answer

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        return cls(rules=parse_script(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def from_prompts(cls, answers: Mapping[str, str], system_text: str = "") -> "ScriptedBackend":
        """Script keyed by exact user prompts."""
        return cls({prompt_fingerprint(system_text, p): a for p, a in answers.items()})

    def __len__(self) -> int:
        return len(self._by_key) + len(self._contains)

    def complete(self, req: CompletionRequest) -> CompletionAnswer:
        fp = prompt_fingerprint(req.system_text, req.user_text)
        if fp in self._by_key:
            return CompletionAnswer(self._by_key[fp], self.backend_id)
        haystack = f"{req.system_text}\n{req.user_text}" if req.system_text else req.user_text
        hits = [p for p in self._contains if p in haystack]
        if hits:
            longest = max(len(p) for p in hits)
            best = {self._contains[p] for p in hits if len(p) == longest}
            if len(best) > 1:
                raise ScriptMissError(f"ambiguous script match for prompt:\n{req.user_text}")
            return CompletionAnswer(best.pop(), self.backend_id)
        raise ScriptMissError(f"no scripted answer (fingerprint {fp}) for prompt:\n{req.user_text}")


class ResponseCache:
    """Append-only JSON-lines store of ``{"key", "text"}`` records."""

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path is not None else None
        self._data: dict[str, str] = {}
        self._write_lock = threading.Lock()
        if self.path is not None and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    if not line.strip():
                        continue
                    try:
                        rec = json.loads(line)
                        self._data[rec["key"]] = rec["text"]
                    except (ValueError, KeyError):
                        # a torn final line from an interrupted run
                        log.warning("%s:%d: skipping unreadable cache record", self.path, lineno)

    def __len__(self) -> int:
        return len(self._data)

    def __contains__(self, key: str) -> bool:
        return key in self._data

    def get(self, key: str) -> str | None:
        return self._data.get(key)

    def put(self, key: str, text: str) -> None:
        with self._write_lock:
            self._data[key] = text
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps({"key": key, "text": text}, ensure_ascii=False) + "\n")
                    fh.flush()


class CachedBackend:
    def __init__(self, inner: ChatBackend, cache: ResponseCache | str | Path | None = None):
        self.inner = inner
        self.cache = cache if isinstance(cache, ResponseCache) else ResponseCache(cache)
        self.backend_id = f"cached:{inner.backend_id}"
        self._key_locks: defaultdict[str, threading.Lock] = defaultdict(threading.Lock)
        self._locks_guard = threading.Lock()

    def complete(self, req: CompletionRequest) -> CompletionAnswer:
        key = cache_key(req)
        hit = self.cache.get(key)
        if hit is not None:
            return CompletionAnswer(hit, self.backend_id, cached=True)
        with self._locks_guard:
            lock = self._key_locks[key]
        with lock:
            hit = self.cache.get(key)
            if hit is not None:
                return CompletionAnswer(hit, self.backend_id, cached=True)
            answer = self.inner.complete(req)
            self.cache.put(key, answer.text)
        return CompletionAnswer(answer.text, self.backend_id, cached=False)


class RemoteChatBackend:
    """OpenAI-compatible ``/chat/completions`` client.

    Retries transport errors, 429 and 5xx with exponential backoff and caps the
    number of requests in flight.
    """

    def __init__(
        self,
        base_url: str = "https://api.openai.com/v1",
        api_key: str | None = None,
        retries: int = 3,
        backoff: float = 1.0,
        max_in_flight: int = 4,
        timeout: float = 120.0,
        client: httpx.Client | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self._api_key = api_key if api_key is not None else os.environ.get("DSM_API_KEY")
        self.retries = retries
        self.backoff = backoff
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max(1, max_in_flight))
        self._sleep = sleep
        self.backend_id = f"remote:{self.url}"

    def __repr__(self) -> str:
        return f"RemoteChatBackend(url={self.url!r})"

    def complete(self, req: CompletionRequest) -> CompletionAnswer:
        messages = []
        if req.system_text:
            messages.append({"role": "system", "content": req.system_text})
        messages.append({"role": "user", "content": req.user_text})
        payload = {"model": req.model_id, "temperature": req.temperature, "messages": messages}
        with self._slots:
            body = post_json(
                self._client,
                self.url,
                payload,
                auth_headers(self._api_key),
                retries=self.retries,
                backoff=self.backoff,
                sleep=self._sleep,
            )
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError):
            raise BackendError(f"malformed chat response from {self.url}") from None
        if text is None:
            text = ""
        return CompletionAnswer(text, self.backend_id)


__all__ = [
    "BackendError",
    "CachedBackend",
    "ChatBackend",
    "CompletionAnswer",
    "CompletionRequest",
    "RemoteChatBackend",
    "ResponseCache",
    "ScriptMissError",
    "ScriptRule",
    "ScriptedBackend",
    "cache_key",
    "complete",
    "parse_script",
    "prompt_fingerprint",
]
