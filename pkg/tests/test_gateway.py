from __future__ import annotations

import pytest

from dbqa_bench.gateway import (
    ChatMessage,
    ChatRequest,
    ChatResponse,
    FixtureMissError,
    Gateway,
    GatewayConfigurationError,
    ProviderError,
    RateLimiter,
    ResponseCache,
    ScriptedFixture,
    TransportError,
    cache_key,
    derive_seed,
    register_scripted_provider,
)


def _req(content: str = "hello", **kwargs) -> ChatRequest:
    return ChatRequest(
        model_id=kwargs.pop("model_id", "m1"),
        messages=(ChatMessage(role="user", content=content),),
        **kwargs,
    )


def test_request_requires_messages() -> None:
    with pytest.raises(ValueError):
        ChatRequest(model_id="m", messages=())


def test_request_first_role_must_not_be_assistant() -> None:
    with pytest.raises(ValueError):
        ChatRequest(model_id="m", messages=(ChatMessage(role="assistant", content="x"),))


def test_error_response_has_no_content() -> None:
    with pytest.raises(ValueError):
        ChatResponse(content="oops", finish_reason="error")


def test_cache_key_deterministic_and_field_sensitive() -> None:
    assert cache_key(_req()) == cache_key(_req())
    assert cache_key(_req(temperature=0.0)) != cache_key(_req(temperature=0.7))
    assert cache_key(_req(seed=1)) != cache_key(_req(seed=2))
    assert cache_key(_req(max_output_tokens=10)) != cache_key(_req(max_output_tokens=20))
    two_a = ChatRequest(
        model_id="m1",
        messages=(ChatMessage("user", "a"), ChatMessage("assistant", "b"), ChatMessage("user", "c")),
    )
    two_b = ChatRequest(
        model_id="m1",
        messages=(ChatMessage("user", "c"), ChatMessage("assistant", "b"), ChatMessage("user", "a")),
    )
    assert cache_key(two_a) != cache_key(two_b)


def test_derive_seed_is_stable_and_distinct() -> None:
    assert derive_seed(0, "agent", "q1") == derive_seed(0, "agent", "q1")
    assert derive_seed(0, "agent", "q1") != derive_seed(0, "agent", "q2")
    assert derive_seed(0, "agent", "q1") != derive_seed(1, "agent", "q1")


def test_scripted_playback_by_substring() -> None:
    provider = register_scripted_provider({"Proposed Plan": "Score: 4"})
    gateway = Gateway()
    gateway.register("m1", provider)
    response = gateway.complete(_req("please review the Proposed Plan now"))
    assert response.content == "Score: 4"


def test_scripted_fixture_miss_names_digest() -> None:
    provider = register_scripted_provider({"never-present": "x"})
    gateway = Gateway()
    gateway.register("m1", provider)
    request = _req()
    with pytest.raises(FixtureMissError, match=cache_key(request)[:16]):
        gateway.complete(request)


def test_scripted_default_catches_everything() -> None:
    provider = register_scripted_provider({}, default="fallback")
    gateway = Gateway()
    gateway.register("m1", provider)
    assert gateway.complete(_req("anything")).content == "fallback"


def test_overlapping_matchers_are_configuration_error() -> None:
    provider = register_scripted_provider({"plan": "a", "review the plan": "b"})
    gateway = Gateway()
    gateway.register("m1", provider)
    with pytest.raises(GatewayConfigurationError, match="ambiguous"):
        gateway.complete(_req("review the plan carefully"))


def test_duplicate_matchers_rejected_at_registration() -> None:
    with pytest.raises(GatewayConfigurationError, match="duplicate"):
        register_scripted_provider([ScriptedFixture(response="a", contains=("x",)),
                                    ScriptedFixture(response="b", contains=("x",))])


def test_seed_keyed_fixtures_disambiguate() -> None:
    provider = register_scripted_provider(
        [
            ScriptedFixture(response="first", contains=("judge",), seed=1),
            ScriptedFixture(response="second", contains=("judge",), seed=2),
        ]
    )
    gateway = Gateway()
    gateway.register("m1", provider)
    assert gateway.complete(_req("judge this", seed=1)).content == "first"
    assert gateway.complete(_req("judge this", seed=2)).content == "second"


def test_unregistered_model_is_configuration_error() -> None:
    gateway = Gateway()
    with pytest.raises(GatewayConfigurationError, match="unknown"):
        gateway.complete(_req(model_id="unknown"))


class _FlakyProvider:
    def __init__(self, failures: int, content: str = "finally"):
        self.failures = failures
        self.calls = 0
        self.content = content

    def complete(self, req: ChatRequest) -> ChatResponse:
        self.calls += 1
        if self.calls <= self.failures:
            raise ProviderError(f"boom {self.calls}")
        return ChatResponse(content=self.content)


def test_retry_recovers_then_gives_up() -> None:
    provider = _FlakyProvider(failures=2)
    gateway = Gateway(retry_limit=3, sleeper=lambda s: None)
    gateway.register("m1", provider)
    assert gateway.complete(_req()).content == "finally"
    assert provider.calls == 3

    hopeless = _FlakyProvider(failures=99)
    gateway.register("m2", hopeless)
    with pytest.raises(TransportError) as excinfo:
        gateway.complete(_req(model_id="m2"))
    assert excinfo.value.attempts == 3
    assert hopeless.calls == 3


def test_cache_serves_second_call_without_provider(tmp_path) -> None:
    provider = register_scripted_provider({}, default="cached content")
    cache = ResponseCache(tmp_path / "cache.jsonl")
    gateway = Gateway(cache=cache)
    gateway.register("m1", provider)
    first = gateway.complete(_req("same request"))
    assert provider.call_count == 1
    second = gateway.complete(_req("same request"))
    assert provider.call_count == 1
    assert first == second


def test_cache_persists_across_instances(tmp_path) -> None:
    path = tmp_path / "cache.jsonl"
    provider = register_scripted_provider({}, default="persisted")
    gateway = Gateway(cache=ResponseCache(path))
    gateway.register("m1", provider)
    gateway.complete(_req("r"))

    fresh_provider = register_scripted_provider({}, default="should not be called")
    resumed = Gateway(cache=ResponseCache(path))
    resumed.register("m1", fresh_provider)
    assert resumed.complete(_req("r")).content == "persisted"
    assert fresh_provider.call_count == 0


def test_cache_transparency_same_outputs_as_uncached(tmp_path) -> None:
    requests = [_req(f"request {i}") for i in range(4)] + [_req("request 0")]

    plain = Gateway()
    plain.register("m1", register_scripted_provider({}, default="deterministic"))
    cached = Gateway(cache=ResponseCache(tmp_path / "c.jsonl"))
    cached.register("m1", register_scripted_provider({}, default="deterministic"))

    assert [plain.complete(r) for r in requests] == [cached.complete(r) for r in requests]


def test_rate_limiter_spaces_requests() -> None:
    clock_value = [0.0]
    sleeps: list[float] = []

    def clock() -> float:
        return clock_value[0]

    def sleeper(duration: float) -> None:
        sleeps.append(duration)
        clock_value[0] += duration

    limiter = RateLimiter(requests_per_minute=60, clock=clock, sleeper=sleeper)
    limiter.acquire()
    limiter.acquire()
    limiter.acquire()
    # 60 rpm = 1 token/s: two follow-up requests each waited ~1 s
    assert len(sleeps) == 2
    assert all(abs(s - 1.0) < 1e-6 for s in sleeps)
