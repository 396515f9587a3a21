"""Completion backends: live chat endpoint, strict replay, scripted mock.

All three expose ``complete(request) -> str`` and are safe to call from many
threads. The replay cache is a JSON-lines file of :class:`CompletionRecord`
objects, appended one record per completed live request.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
import warnings
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterable, Protocol, Sequence

import httpx

from .errors import CacheMiss, EndpointError, MalformedRecord, MissingFile, Timeout

log = logging.getLogger(__name__)

API_KEY_ENV = "DNP_API_KEY"
RETRY_STATUSES = frozenset({429, 503})


@dataclass(frozen=True)
class CompletionRequest:
    model_name: str
    prompt: str
    temperature: float = 0.3
    top_p: float = 1.0
    max_tokens: int = 1024
    trial_index: int = 0

    def __post_init__(self):
        if not 0 <= self.temperature <= 2:
            raise ValueError(f"temperature {self.temperature} outside [0, 2]")
        if not 0 < self.top_p <= 1:
            raise ValueError(f"top_p {self.top_p} outside (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be positive")


_KEYED_FIELDS = ("model_name", "temperature", "top_p", "max_tokens", "trial_index", "prompt")


def cache_key(req: CompletionRequest) -> str:
    """SHA-256 over a canonical JSON rendering of the keyed request fields."""
    payload = {name: getattr(req, name) for name in _KEYED_FIELDS}
    payload["temperature"] = float(payload["temperature"])
    payload["top_p"] = float(payload["top_p"])
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionRecord:
    key: str
    model_name: str
    temperature: float
    top_p: float
    max_tokens: int
    trial_index: int
    prompt: str
    response: str
    created_at: str
    token_usage: dict | None = None

    @classmethod
    def create(cls, req: CompletionRequest, response: str, token_usage: dict | None = None) -> CompletionRecord:
        return cls(
            key=cache_key(req),
            model_name=req.model_name,
            temperature=req.temperature,
            top_p=req.top_p,
            max_tokens=req.max_tokens,
            trial_index=req.trial_index,
            prompt=req.prompt,
            response=response,
            created_at=datetime.now(timezone.utc).isoformat(timespec="seconds"),
            token_usage=token_usage,
        )

    @property
    def request(self) -> CompletionRequest:
        return CompletionRequest(self.model_name, self.prompt, self.temperature, self.top_p, self.max_tokens, self.trial_index)

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> CompletionRecord:
        rec = cls(**json.loads(line))
        if cache_key(rec.request) != rec.key:
            raise ValueError("stored key does not match the record's fields")
        return rec


class Backend(Protocol):
    def complete(self, req: CompletionRequest) -> str: ...


def complete(client: Backend, req: CompletionRequest) -> str:
    return client.complete(req)


# -- replay -------------------------------------------------------------------------


def read_records(path: str | Path) -> list[CompletionRecord]:
    path = Path(path)
    if not path.is_file():
        raise MissingFile(path)
    records = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(CompletionRecord.from_json(line))
            except (ValueError, TypeError) as exc:
                raise MalformedRecord(f"line {lineno}", str(exc), str(path)) from None
    return records


class ReplayBackend:
    """Serves recorded completions; any request not on record is a CacheMiss."""

    def __init__(self, records: Iterable[CompletionRecord] = ()):
        self.records: dict[str, CompletionRecord] = {}
        for rec in records:
            if rec.key in self.records:
                warnings.warn(f"duplicate cache key {rec.key[:12]}; keeping the later record", stacklevel=2)
            self.records[rec.key] = rec

    def __len__(self) -> int:
        return len(self.records)

    def __contains__(self, req: CompletionRequest) -> bool:
        return cache_key(req) in self.records

    def complete(self, req: CompletionRequest) -> str:
        key = cache_key(req)
        rec = self.records.get(key)
        if rec is None:
            raise CacheMiss(key, f"model={req.model_name} trial={req.trial_index}")
        return rec.response


def load_replay(path: str | Path) -> ReplayBackend:
    return ReplayBackend(read_records(path))


class CacheWriter:
    """Appends records to a JSON-lines cache, one whole line per write."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def append(self, rec: CompletionRecord) -> None:
        line = rec.to_json() + "\n"
        with self._lock, self.path.open("a", encoding="utf-8") as fh:
            fh.write(line)
            fh.flush()


def merge_caches(paths: Sequence[str | Path], out: str | Path) -> int:
    """Concatenate caches into ``out``, later files winning on duplicate keys."""
    merged: dict[str, CompletionRecord] = {}
    for p in paths:
        for rec in read_records(p):
            merged[rec.key] = rec
    with Path(out).open("w", encoding="utf-8") as fh:
        for rec in merged.values():
            fh.write(rec.to_json() + "\n")
    return len(merged)


# -- live -----------------------------------------------------------------------------


class LiveBackend:
    """Single-turn chat-completions client with retries and an in-flight cap.

    Transport errors and throttling statuses are retried with doubling backoff
    up to ``max_attempts``; other error statuses fail at once. Completed
    requests are appended to ``record_to`` when given. Requests already present
    in ``cache`` are answered from it without a network call.
    """

    def __init__(
        self,
        base_url: str,
        api_key: str | None = None,
        *,
        record_to: str | Path | None = None,
        cache: ReplayBackend | None = None,
        max_attempts: int = 5,
        initial_backoff: float = 1.0,
        concurrency: int = 4,
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.url = base_url.rstrip("/") + "/chat/completions"
        key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        self._http = httpx.Client(headers=headers, timeout=timeout, transport=transport)
        self.writer = CacheWriter(record_to) if record_to else None
        self.cache = cache
        self.max_attempts = max_attempts
        self.initial_backoff = initial_backoff
        self._slots = threading.BoundedSemaphore(concurrency)
        self._sleep = sleep

    def close(self) -> None:
        self._http.close()

    def _post(self, req: CompletionRequest) -> httpx.Response:
        body = {
            "model": req.model_name,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "top_p": req.top_p,
            "max_tokens": req.max_tokens,
        }
        delay = self.initial_backoff
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._slots:
                    resp = self._http.post(self.url, json=body)
            except httpx.TimeoutException as exc:
                if attempt == self.max_attempts:
                    raise Timeout(f"no response after {attempt} attempts: {exc}") from None
            except httpx.TransportError as exc:
                if attempt == self.max_attempts:
                    raise EndpointError(None, f"transport error: {exc}") from None
            else:
                if resp.status_code < 400:
                    return resp
                if resp.status_code not in RETRY_STATUSES or attempt == self.max_attempts:
                    raise EndpointError(resp.status_code, resp.text)
            log.warning("completion attempt %d failed; retrying in %.1fs", attempt, delay)
            self._sleep(delay)
            delay *= 2
        raise AssertionError("unreachable")

    def complete(self, req: CompletionRequest) -> str:
        if self.cache is not None and req in self.cache:
            return self.cache.complete(req)
        resp = self._post(req)
        try:
            data = resp.json()
            text = data["choices"][0]["message"]["content"] or ""
        except (ValueError, KeyError, IndexError, TypeError):
            raise EndpointError(resp.status_code, f"unexpected response body: {resp.text}") from None
        if self.writer is not None:
            self.writer.append(CompletionRecord.create(req, text, data.get("usage")))
        return text


# -- mock -----------------------------------------------------------------------------

Responder = Callable[[re.Match, CompletionRequest], str]


@dataclass
class MockBackend:
    """Answers from (pattern, response) rules; the first pattern found in the prompt wins.

    A response may be a callable taking the match and the request.
    """

    rules: list[tuple[str, str | Responder]] = field(default_factory=list)
    default: str | None = None

    def __post_init__(self):
        self._compiled = [(re.compile(p, re.DOTALL), r) for p, r in self.rules]

    def complete(self, req: CompletionRequest) -> str:
        for pattern, response in self._compiled:
            m = pattern.search(req.prompt)
            if m:
                return response(m, req) if callable(response) else response
        if self.default is not None:
            return self.default
        raise CacheMiss(cache_key(req), "no mock rule matches the prompt")

    @classmethod
    def from_file(cls, path: str | Path) -> MockBackend:
        """Load rules from a JSON document ``{"rules": [[pattern, response], ...], "default": ...}``."""
        path = Path(path)
        if not path.is_file():
            raise MissingFile(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        return cls([tuple(r) for r in doc.get("rules", [])], doc.get("default"))
