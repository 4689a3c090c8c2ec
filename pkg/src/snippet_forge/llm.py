"""Chat-completion backends: a live HTTP client and a scripted mock.

Both implement ``complete(request) -> CompletionResponse`` and are safe to
call from several threads.
"""
from __future__ import annotations

import csv
import enum
import json
import logging
import math
import os
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Protocol

import httpx

from .errors import BudgetExceeded, ConfigError, TranscriptExhausted, TransportError

logger = logging.getLogger(__name__)

DEFAULT_MODEL = "gpt-3.5-turbo-0125"
API_KEY_ENV = "SNIPPET_FORGE_API_KEY"
MAX_ATTEMPTS = 5

# USD per 1M tokens (input, output); override through configuration
DEFAULT_PRICES: dict[str, tuple[float, float]] = {
    "gpt-3.5-turbo-0125": (0.50, 1.50),
    "gpt-4o": (5.00, 15.00),
}


def estimate_tokens(text: str) -> int:
    """Rough token count: four characters per token."""
    return math.ceil(len(text) / 4)


class Role(str, enum.Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


@dataclass(frozen=True)
class ChatMessage:
    role: Role
    content: str

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("chat message content must be non-empty")
        object.__setattr__(self, "role", Role(self.role))

    def to_dict(self) -> dict:
        return {"role": self.role.value, "content": self.content}


@dataclass(frozen=True)
class RequestTag:
    """What a request is for; the mock matches on these fields."""

    kind: str
    snippet_id: str = ""
    attempt: int = 1


@dataclass(frozen=True)
class CompletionRequest:
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.5
    max_output_tokens: int = 256
    model_id: str = DEFAULT_MODEL
    tag: RequestTag = RequestTag("generic")

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("request needs at least one message")
        if not 0.0 <= self.temperature <= 1.0:
            raise ValueError(f"temperature {self.temperature} outside [0, 1]")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")

    @property
    def prompt_text(self) -> str:
        return "\n".join(m.content for m in self.messages)


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    prompt_tokens: int = 0
    output_tokens: int = 0
    latency: float = 0.0


class Backend(Protocol):
    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


class UsageLedger:
    """Running token/cost totals with optional ceilings and a CSV sink."""

    FIELDS = ("timestamp", "model", "prompt_tokens", "output_tokens", "cost")

    def __init__(
        self,
        prices: Optional[dict[str, tuple[float, float]]] = None,
        max_tokens: Optional[int] = None,
        max_cost: Optional[float] = None,
        path: Optional[Path] = None,
    ) -> None:
        self.prices = dict(DEFAULT_PRICES if prices is None else prices)
        self.max_tokens = max_tokens
        self.max_cost = max_cost
        self.path = Path(path) if path else None
        self.rows: list[dict] = []
        self._lock = threading.Lock()

    def cost(self, model: str, prompt_tokens: int, output_tokens: int) -> float:
        p_in, p_out = self.prices.get(model, (0.0, 0.0))
        return (prompt_tokens * p_in + output_tokens * p_out) / 1_000_000

    @property
    def prompt_tokens(self) -> int:
        return sum(r["prompt_tokens"] for r in self.rows)

    @property
    def output_tokens(self) -> int:
        return sum(r["output_tokens"] for r in self.rows)

    @property
    def total_cost(self) -> float:
        return sum(r["cost"] for r in self.rows)

    def check(self, request: CompletionRequest) -> None:
        """Raise BudgetExceeded if this request could cross a ceiling."""
        projected_in = estimate_tokens(request.prompt_text)
        projected_out = request.max_output_tokens
        with self._lock:
            if self.max_tokens is not None:
                used = self.prompt_tokens + self.output_tokens
                if self.max_tokens <= 0 or used + projected_in + projected_out > self.max_tokens:
                    raise BudgetExceeded(f"token ceiling {self.max_tokens} would be crossed")
            if self.max_cost is not None:
                projected = self.cost(request.model_id, projected_in, projected_out)
                if self.max_cost <= 0 or self.total_cost + projected > self.max_cost:
                    raise BudgetExceeded(f"cost ceiling ${self.max_cost} would be crossed")

    def record(self, model: str, response: CompletionResponse) -> dict:
        row = {
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "model": model,
            "prompt_tokens": response.prompt_tokens,
            "output_tokens": response.output_tokens,
            "cost": self.cost(model, response.prompt_tokens, response.output_tokens),
        }
        with self._lock:
            self.rows.append(row)
            if self.path is not None:
                new = not self.path.exists()
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", newline="", encoding="utf-8") as fh:
                    writer = csv.DictWriter(fh, fieldnames=self.FIELDS)
                    if new:
                        writer.writeheader()
                    writer.writerow(row)
        return row

    def summary(self) -> dict:
        return {
            "calls": len(self.rows),
            "prompt_tokens": self.prompt_tokens,
            "output_tokens": self.output_tokens,
            "cost_usd": round(self.total_cost, 6),
        }


@dataclass(frozen=True)
class MockEntry:
    response: str
    kind: Optional[str] = None
    snippet_id: Optional[str] = None
    attempt: Optional[int] = None

    def matches(self, tag: RequestTag) -> bool:
        return (
            (self.kind is None or self.kind == tag.kind)
            and (self.snippet_id is None or self.snippet_id == tag.snippet_id)
            and (self.attempt is None or self.attempt == tag.attempt)
        )


class MockBackend:
    """Replays scripted responses.

    Each request consumes the first unused entry whose non-null matcher
    fields equal the request tag (kind, snippet id, attempt number).
    """

    def __init__(self, entries, ledger: Optional[UsageLedger] = None, model_id: str = "mock"):
        self.entries = [e if isinstance(e, MockEntry) else MockEntry(**e) for e in entries]
        self.ledger = ledger
        self.model_id = model_id
        self.requests: list[CompletionRequest] = []
        self._used = [False] * len(self.entries)
        self._lock = threading.Lock()

    @classmethod
    def from_jsonl(cls, path: Path | str, **kwargs) -> "MockBackend":
        entries = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                    entries.append(MockEntry(**obj))
                except (json.JSONDecodeError, TypeError) as exc:
                    raise ConfigError(f"{path}:{lineno}: bad transcript record: {exc}") from exc
        return cls(entries, **kwargs)

    @property
    def calls(self) -> int:
        return len(self.requests)

    def remaining(self) -> int:
        return self._used.count(False)

    def reset(self) -> None:
        with self._lock:
            self._used = [False] * len(self.entries)
            self.requests.clear()

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if self.ledger is not None:
            self.ledger.check(request)
        with self._lock:
            for idx, entry in enumerate(self.entries):
                if not self._used[idx] and entry.matches(request.tag):
                    self._used[idx] = True
                    self.requests.append(request)
                    break
            else:
                raise TranscriptExhausted(f"no scripted response left for {request.tag}")
        response = CompletionResponse(
            text=entry.response,
            prompt_tokens=estimate_tokens(request.prompt_text),
            output_tokens=estimate_tokens(entry.response),
        )
        if self.ledger is not None:
            self.ledger.record(request.model_id, response)
        return response


class TokenBucket:
    """Request-rate limiter plus a cap on requests in flight."""

    def __init__(self, rate: float = 1.0, capacity: int = 1, in_flight: int = 1,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        self.rate = rate
        self.capacity = capacity
        self._tokens = float(capacity)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()
        self.slots = threading.BoundedSemaphore(in_flight)

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1:
                    self._tokens -= 1
                    return
                wait = (1 - self._tokens) / self.rate
            self._sleep(wait)


@dataclass
class LiveConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model_id: str = DEFAULT_MODEL
    api_key: Optional[str] = None
    timeout: float = 60.0
    requests_per_second: float = 1.0
    max_in_flight: int = 1
    top_p: float = 1.0
    extra_headers: dict = field(default_factory=dict)

    def resolved_key(self) -> str:
        key = os.environ.get(API_KEY_ENV) or self.api_key
        if not key:
            raise ConfigError(f"no API key: set {API_KEY_ENV}")
        return key


_RETRY_STATUS = {408, 409, 429, 500, 502, 503, 504}


class LiveBackend:
    """OpenAI-compatible chat-completions client."""

    def __init__(self, config: LiveConfig, ledger: Optional[UsageLedger] = None,
                 client: Optional[httpx.Client] = None, sleep: Callable[[float], None] = time.sleep,
                 backoff: float = 1.0):
        self.config = config
        self.ledger = ledger
        self.client = client or httpx.Client(timeout=config.timeout)
        self.limiter = TokenBucket(config.requests_per_second, 1, config.max_in_flight, sleep=sleep)
        self._sleep = sleep
        self.backoff = backoff
        self.attempts = 0

    def _payload(self, request: CompletionRequest) -> dict:
        return {
            "model": request.model_id or self.config.model_id,
            "messages": [m.to_dict() for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
            "top_p": self.config.top_p,
            "frequency_penalty": 0,
            "presence_penalty": 0,
        }

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        if self.ledger is not None:
            self.ledger.check(request)
        headers = {"Authorization": f"Bearer {self.config.resolved_key()}", **self.config.extra_headers}
        payload = self._payload(request)
        last_error: Exception | None = None
        for attempt in range(MAX_ATTEMPTS):
            if attempt:
                self._sleep(self.backoff * 2 ** (attempt - 1))
            self.attempts += 1
            self.limiter.acquire()
            start = time.monotonic()
            try:
                with self.limiter.slots:
                    resp = self.client.post(self.config.endpoint, json=payload, headers=headers)
            except httpx.TransportError as exc:
                last_error = exc
                logger.warning("transport failure (attempt %d/%d): %s", attempt + 1, MAX_ATTEMPTS, exc)
                continue
            if resp.status_code in _RETRY_STATUS:
                last_error = TransportError(f"HTTP {resp.status_code}")
                logger.warning("HTTP %d (attempt %d/%d)", resp.status_code, attempt + 1, MAX_ATTEMPTS)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            body = resp.json()
            usage = body.get("usage") or {}
            text = body["choices"][0]["message"].get("content") or ""
            response = CompletionResponse(
                text=text,
                prompt_tokens=int(usage.get("prompt_tokens", estimate_tokens(request.prompt_text))),
                output_tokens=int(usage.get("completion_tokens", estimate_tokens(text))),
                latency=time.monotonic() - start,
            )
            if self.ledger is not None:
                self.ledger.record(payload["model"], response)
            return response
        raise TransportError(f"gave up after {MAX_ATTEMPTS} attempts: {last_error}")
