"""Uniform chat-completion interface over remote providers and a scripted backend.

One Gateway instance serves a whole run: it routes by model_id, enforces a
per-provider rate limit, retries transient failures, and (optionally)
persists responses in an append-only cache keyed by a request digest so
interrupted runs resume without re-spending provider calls.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .sandbox import estimate_tokens

logger = logging.getLogger(__name__)

DEFAULT_RETRY_LIMIT = 3
DEFAULT_REQUESTS_PER_MINUTE = 60.0


class GatewayConfigurationError(Exception):
    """Unregistered model, ambiguous fixtures, or other setup mistakes."""


class FixtureMissError(GatewayConfigurationError):
    """No scripted fixture matched; names the request digest for debugging."""


class TransportError(Exception):
    """Provider kept failing; carries the attempt count."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class ProviderError(Exception):
    """One failed provider attempt (retryable)."""


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ("system", "user", "assistant"):
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[ChatMessage, ...]
    temperature: float = 0.0
    max_output_tokens: int = 1024
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "messages", tuple(self.messages))
        if not self.messages:
            raise ValueError("messages must be non-empty")
        if self.messages[0].role not in ("system", "user"):
            raise ValueError("first message role must be system or user")

    def rendered_text(self) -> str:
        """Role-prefixed concatenation, the surface scripted matchers see."""
        return "\n".join(f"{m.role}: {m.content}" for m in self.messages)


@dataclass(frozen=True)
class ChatResponse:
    content: str
    finish_reason: str = "stop"
    prompt_tokens: int = 0
    completion_tokens: int = 0

    def __post_init__(self) -> None:
        if self.finish_reason not in ("stop", "length", "error"):
            raise ValueError(f"unknown finish_reason {self.finish_reason!r}")
        if self.finish_reason == "error" and self.content:
            raise ValueError("error responses carry no content")


def cache_key(req: ChatRequest) -> str:
    """Stable digest over every request field; any change flips the key."""
    payload = {
        "model_id": req.model_id,
        "messages": [[m.role, m.content] for m in req.messages],
        "temperature": req.temperature,
        "max_output_tokens": req.max_output_tokens,
        "seed": req.seed,
    }
    blob = json.dumps(payload, ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def derive_seed(*parts: object) -> int:
    """Deterministic 32-bit seed from structured parts (run seed, role, ids)."""
    blob = "\x1f".join(str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(blob.encode("utf-8")).digest()[:4], "big")


class Provider(Protocol):
    def complete(self, req: ChatRequest) -> ChatResponse: ...


@dataclass(frozen=True)
class ScriptedFixture:
    """Deterministic playback rule for the scripted provider.

    Matches when every ``contains`` substring occurs in the rendered
    request, none of ``not_contains`` does, and ``seed`` (when set)
    equals the request seed.
    """

    response: str
    contains: tuple[str, ...] = ()
    not_contains: tuple[str, ...] = ()
    seed: int | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "contains", tuple(self.contains))
        object.__setattr__(self, "not_contains", tuple(self.not_contains))

    def matches(self, req: ChatRequest) -> bool:
        if self.seed is not None and req.seed != self.seed:
            return False
        text = req.rendered_text()
        if any(sub not in text for sub in self.contains):
            return False
        return all(sub not in text for sub in self.not_contains)

    def _key(self) -> tuple:
        return (self.contains, self.not_contains, self.seed)


class ScriptedProvider:
    """Replays fixture text deterministically regardless of temperature."""

    def __init__(self, fixtures: list[ScriptedFixture], default: str | None = None):
        keys = [f._key() for f in fixtures]
        if len(set(keys)) != len(keys):
            raise GatewayConfigurationError("duplicate scripted matchers")
        self.fixtures = list(fixtures)
        self.default = default
        self.call_count = 0

    def complete(self, req: ChatRequest) -> ChatResponse:
        self.call_count += 1
        hits = [f for f in self.fixtures if f.matches(req)]
        if len(hits) > 1:
            raise GatewayConfigurationError(
                f"ambiguous scripted matchers: {len(hits)} fixtures match request {cache_key(req)[:12]}"
            )
        if not hits:
            if self.default is None:
                raise FixtureMissError(f"no fixture matches request {cache_key(req)}")
            content = self.default
        else:
            content = hits[0].response
        return ChatResponse(
            content=content,
            finish_reason="stop",
            prompt_tokens=estimate_tokens(req.rendered_text()),
            completion_tokens=estimate_tokens(content),
        )


def register_scripted_provider(
    fixtures: dict[str | tuple[str, ...], str] | list[ScriptedFixture],
    default: str | None = None,
) -> ScriptedProvider:
    """Build a scripted provider from substring matchers or full fixtures."""
    if isinstance(fixtures, dict):
        built = [
            ScriptedFixture(
                response=response,
                contains=(matcher,) if isinstance(matcher, str) else tuple(matcher),
            )
            for matcher, response in fixtures.items()
        ]
    else:
        built = list(fixtures)
    return ScriptedProvider(built, default=default)


class HttpChatProvider:
    """Speaks the message-array/choice-array chat-completions wire format."""

    def __init__(
        self,
        base_url: str,
        model_name: str,
        api_key: str = "",
        timeout_s: float = 60.0,
        client: httpx.Client | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.model_name = model_name
        self._api_key = api_key
        self._client = client or httpx.Client(timeout=timeout_s)

    def complete(self, req: ChatRequest) -> ChatResponse:
        body: dict = {
            "model": self.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in req.messages],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        if req.seed is not None:
            body["seed"] = req.seed
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        try:
            response = self._client.post(f"{self.base_url}/chat/completions", json=body, headers=headers)
            response.raise_for_status()
            data = response.json()
            choice = data["choices"][0]
            usage = data.get("usage", {})
            finish = choice.get("finish_reason", "stop")
            return ChatResponse(
                content=choice["message"]["content"] or "",
                finish_reason="length" if finish == "length" else "stop",
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
            )
        except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
            raise ProviderError(f"chat completion failed: {exc}") from exc


class RateLimiter:
    """Token bucket; acquire() blocks until a request slot is available."""

    def __init__(
        self,
        requests_per_minute: float = DEFAULT_REQUESTS_PER_MINUTE,
        clock: Callable[[], float] = time.monotonic,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self.rate = requests_per_minute / 60.0
        self.capacity = max(1.0, requests_per_minute / 60.0)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleeper
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class ResponseCache:
    """Append-only file of (key, response) records; writes are serialized."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._entries: dict[str, ChatResponse] = {}
        self._lock = threading.Lock()
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    record = json.loads(line)
                    self._entries[record["key"]] = ChatResponse(
                        content=record["content"],
                        finish_reason=record["finish_reason"],
                        prompt_tokens=record["prompt_tokens"],
                        completion_tokens=record["completion_tokens"],
                    )

    def get(self, key: str) -> ChatResponse | None:
        return self._entries.get(key)

    def put(self, key: str, response: ChatResponse) -> None:
        with self._lock:
            if key in self._entries:
                return
            self._entries[key] = response
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "key": key,
                            "content": response.content,
                            "finish_reason": response.finish_reason,
                            "prompt_tokens": response.prompt_tokens,
                            "completion_tokens": response.completion_tokens,
                        },
                        ensure_ascii=False,
                    )
                    + "\n"
                )


@dataclass
class _Route:
    provider: Provider
    limiter: RateLimiter | None = None


class Gateway:
    """Routes requests by model_id with caching, retry, and rate limiting."""

    def __init__(
        self,
        cache: ResponseCache | None = None,
        retry_limit: int = DEFAULT_RETRY_LIMIT,
        backoff_s: float = 0.5,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        self._routes: dict[str, _Route] = {}
        self.cache = cache
        self.retry_limit = retry_limit
        self.backoff_s = backoff_s
        self._sleep = sleeper
        self.call_count = 0
        self._lock = threading.Lock()

    def register(self, model_id: str, provider: Provider, limiter: RateLimiter | None = None) -> None:
        self._routes[model_id] = _Route(provider=provider, limiter=limiter)

    def complete(self, req: ChatRequest) -> ChatResponse:
        route = self._routes.get(req.model_id)
        if route is None:
            raise GatewayConfigurationError(f"no provider registered for model {req.model_id!r}")

        key = cache_key(req)
        if self.cache is not None:
            cached = self.cache.get(key)
            if cached is not None:
                return cached

        last_error: Exception | None = None
        for attempt in range(1, self.retry_limit + 1):
            if route.limiter is not None:
                route.limiter.acquire()
            with self._lock:
                self.call_count += 1
            try:
                response = route.provider.complete(req)
                if self.cache is not None:
                    self.cache.put(key, response)
                return response
            except ProviderError as exc:
                last_error = exc
                logger.warning("provider attempt %d/%d failed: %s", attempt, self.retry_limit, exc)
                if attempt < self.retry_limit:
                    self._sleep(self.backoff_s * (2 ** (attempt - 1)))
        raise TransportError(
            f"provider for {req.model_id!r} failed after {self.retry_limit} attempts: {last_error}",
            attempts=self.retry_limit,
        )


def load_provider_config(path: str | Path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def gateway_from_config(config: dict, cache_path: str | Path | None = None) -> Gateway:
    """Build a gateway from a config mapping.

    Expected shape: {"providers": {model_id: {"base_url", "model",
    "api_key_env", "rpm"}}}. API keys come from the named environment
    variable and are never stored in run artifacts.
    """
    cache = ResponseCache(cache_path) if cache_path else None
    gateway = Gateway(cache=cache)
    for model_id, entry in config.get("providers", {}).items():
        api_key = os.environ.get(entry.get("api_key_env", ""), "")
        provider = HttpChatProvider(
            base_url=entry["base_url"],
            model_name=entry.get("model", model_id),
            api_key=api_key,
        )
        limiter = RateLimiter(requests_per_minute=float(entry.get("rpm", DEFAULT_REQUESTS_PER_MINUTE)))
        gateway.register(model_id, provider, limiter=limiter)
    return gateway
