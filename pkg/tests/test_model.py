from __future__ import annotations

import json
import logging
import math

import httpx
import pytest

from memetron.core import Budget, Candidate, Origin, Prompt, SamplingParams
from memetron.errors import AuthError, BudgetExceeded, EmptyCompletionError, GeneratorError, RateLimitError, TemplateError
from memetron.model import GeneratorRequest, HttpGenerator, SimulatedGenerator
from memetron.prompts import DEFAULT_SENTINELS, render_fusion, render_refine
from memetron.rng import SplitMix64

P = Prompt("q", "question")


def req(text, n=1, seed=1, **kw):
    return GeneratorRequest(text, SamplingParams(seed=seed, **kw), n)


def test_request_validation():
    with pytest.raises(ValueError):
        GeneratorRequest("x", SamplingParams(), 0)
    with pytest.raises(ValueError):
        GeneratorRequest("", SamplingParams(), 1)


def test_plain_samples_follow_documented_stream():
    gen = SimulatedGenerator("ACGT", 10)
    out = gen.generate(req("question", n=3, seed=9))
    for i, text in enumerate(out.texts):
        rng = SplitMix64.from_key(9, "sample", i)
        assert text == "".join("ACGT"[rng.randbelow(4)] for _ in range(10))
    assert out.logprobs == tuple([-10 * math.log(4)] * 3)


def test_refinement_changes_exactly_one_position():
    gen = SimulatedGenerator("ACGT", 10)
    y = "AAAAAAAAAA"
    prompt = render_refine(P, Candidate(y, 0.0, Origin.initial(0), id=0), sentinels=DEFAULT_SENTINELS)
    for text in gen.generate(req(prompt, n=20)).texts:
        assert len(text) == len(y)
        assert sum(a != b for a, b in zip(text, y)) == 1


def test_fusion_without_edits_is_a_crossover():
    gen = SimulatedGenerator("01", 8, edit_rate=0.0)
    a, b = "00000000", "11111111"
    prompt = render_fusion(
        P, Candidate(a, 0.0, Origin.initial(0), id=0), Candidate(b, 0.0, Origin.initial(1), id=1),
        sentinels=DEFAULT_SENTINELS,
    )
    for text in gen.generate(req(prompt, n=30, min_p=0.0)).texts:
        cut = next((i for i in range(9) if text[:i] + (a if text[0] == "1" else b)[i:] == text), None)
        assert cut is not None


def test_edit_probability_monotone_in_temperature():
    gen = SimulatedGenerator(edit_rate=0.2)
    probs = [gen.edit_probability(SamplingParams(temperature=t, min_p=0.0)) for t in (0.0, 0.5, 1.5, 10.0)]
    assert probs == sorted(probs) and probs[-1] == 1.0
    assert gen.edit_probability(SamplingParams(temperature=0.0, min_p=0.1)) == 0.1


def test_same_seed_same_output():
    gen = SimulatedGenerator("ACGT", 12)
    assert gen.generate(req("x", 4, seed=5)).texts == gen.generate(req("x", 4, seed=5)).texts
    assert gen.generate(req("x", 4, seed=5)).texts != gen.generate(req("x", 4, seed=6)).texts


def test_simulated_charges_budget_before_generating():
    budget = Budget(2, 10)
    gen = SimulatedGenerator()
    gen.generate(req("x", 2), budget)
    with pytest.raises(BudgetExceeded):
        gen.generate(req("x", 1), budget)
    assert budget.used_model_calls == 2


def test_simulated_rejects_unwrapped_operator_prompt():
    prompt = render_refine(P, Candidate("abc", 0.0, Origin.initial(0), id=0))
    with pytest.raises(TemplateError):
        SimulatedGenerator().generate(req(prompt))


def test_simulated_alphabet_validation():
    with pytest.raises(ValueError):
        SimulatedGenerator("a")
    with pytest.raises(ValueError):
        SimulatedGenerator("aab")


# -- HTTP client -------------------------------------------------------------


def completion(*texts, logprobs=None):
    choices = []
    for i, t in enumerate(texts):
        c = {"index": i, "message": {"role": "assistant", "content": t}}
        if logprobs is not None:
            c["logprobs"] = {"content": [{"token": "x", "logprob": lp} for lp in logprobs[i]]}
        choices.append(c)
    return {"choices": choices}


def http_gen(handler, **kw):
    client = httpx.Client(transport=httpx.MockTransport(handler))
    return HttpGenerator("http://llm/", "m", api_key="k", client=client, sleep=lambda s: None, **kw)


def test_http_payload_and_response():
    seen = {}

    def handler(request):
        seen["url"] = str(request.url)
        seen["body"] = json.loads(request.content)
        seen["auth"] = request.headers["authorization"]
        return httpx.Response(200, json=completion("a", "b", logprobs=[[-1.0, -0.5], [-2.0]]))

    gen = http_gen(handler, supports_min_p=True, supports_top_k=True)
    out = gen.generate(req("hello", n=2, seed=77))
    assert out.texts == ("a", "b")
    assert out.logprobs == (-1.5, -2.0)
    assert seen["url"] == "http://llm/v1/chat/completions"
    assert seen["auth"] == "Bearer k"
    body = seen["body"]
    assert body["messages"] == [{"role": "user", "content": "hello"}]
    assert (body["temperature"], body["top_k"], body["min_p"], body["max_tokens"], body["n"], body["seed"]) == (
        1.5, 50, 0.1, 4098, 2, 77,
    )


def test_http_drops_unsupported_knobs_with_one_warning(caplog):
    bodies = []

    def handler(request):
        bodies.append(json.loads(request.content))
        return httpx.Response(200, json=completion("a"))

    gen = http_gen(handler)
    with caplog.at_level(logging.WARNING):
        gen.generate(req("x"))
        gen.generate(req("x"))
    assert all("min_p" not in b and "top_k" not in b for b in bodies)
    assert len([r for r in caplog.records if "min_p" in r.getMessage()]) == 1


def test_http_api_key_from_env(monkeypatch):
    monkeypatch.setenv("MEMETRON_API_KEY", "secret")
    assert HttpGenerator("http://x", "m").api_key == "secret"


def test_http_retries_with_backoff():
    statuses = iter([429, 503, 200])
    sleeps = []

    def handler(request):
        s = next(statuses)
        return httpx.Response(s, json=completion("ok") if s == 200 else {})

    gen = HttpGenerator("http://llm", "m", client=httpx.Client(transport=httpx.MockTransport(handler)),
                        sleep=sleeps.append, backoff_base=0.5)
    assert gen.generate(req("x")).texts == ("ok",)
    assert sleeps == [0.5, 1.0]


def test_http_rate_limit_exhausted():
    with pytest.raises(RateLimitError):
        http_gen(lambda r: httpx.Response(429), max_retries=1).generate(req("x"))


@pytest.mark.parametrize("status", [401, 403])
def test_http_auth_failure_not_retried(status):
    calls = []

    def handler(request):
        calls.append(1)
        return httpx.Response(status)

    with pytest.raises(AuthError):
        http_gen(handler).generate(req("x"))
    assert len(calls) == 1


def test_http_transport_error():
    def handler(request):
        raise httpx.ConnectError("down")

    with pytest.raises(GeneratorError):
        http_gen(handler, max_retries=1).generate(req("x"))


def test_http_empty_completion_redrawn_once():
    replies = iter([completion("a", ""), completion("redrawn")])
    budget = Budget(10, 10)
    out = http_gen(lambda r: httpx.Response(200, json=next(replies))).generate(req("x", n=2), budget)
    assert out.texts == ("a", "redrawn")
    assert out.model_calls_consumed == 3 == budget.used_model_calls


def test_http_empty_completion_twice_fails():
    replies = iter([completion("a", "  "), completion("")])
    with pytest.raises(EmptyCompletionError) as info:
        http_gen(lambda r: httpx.Response(200, json=next(replies))).generate(req("x", n=2))
    assert info.value.index == 1


def test_http_wrong_choice_count():
    with pytest.raises(GeneratorError):
        http_gen(lambda r: httpx.Response(200, json=completion("a"))).generate(req("x", n=2))
