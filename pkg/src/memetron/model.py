"""Text generators: an OpenAI-compatible HTTP client and a seeded simulator.

The simulated backend works on short strings over a fixed alphabet so search
behaviour can be tested offline. Given ``request.params.seed = s`` (``0`` when
unset), sample ``i`` draws from ``SplitMix64.from_key(s, "sample", i)`` and
the prompt is classified by its sentinel markers:

* plain: ``length`` characters, each ``alphabet[rng.randbelow(len(alphabet))]``.
* fusion: with ``(a, b)`` the embedded parents, ``rng.random() < 0.5`` swaps
  them; a cut ``c = rng.randbelow(min(len(a), len(b)) + 1)`` gives
  ``a[:c] + b[c:]``; then ``max_fusion_edits`` times, with probability
  ``p_edit`` a uniformly chosen position is replaced by a different character
  drawn from the characters present in the two parents.
* refinement: exactly one position (``rng.randbelow(len(y))``) is replaced by a
  different character from ``alphabet`` united with the characters of ``y``.

``p_edit = min(1, max(min_p, edit_rate * temperature))``: monotone in the
sampling temperature, with ``min_p`` acting as a floor.
"""

from __future__ import annotations

import logging
import math
import os
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Callable, Optional

import httpx

from . import prompts
from .core import Budget, SamplingParams
from .errors import (
    AuthError,
    EmptyCompletionError,
    GeneratorError,
    RateLimitError,
    TemplateError,
    ValidationError,
)
from .rng import SplitMix64

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GeneratorRequest:
    prompt_text: str
    params: SamplingParams
    n: int = 1

    def __post_init__(self) -> None:
        if isinstance(self.n, bool) or not isinstance(self.n, int) or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n}")
        if not self.prompt_text:
            raise ValidationError("prompt_text must be non-empty")


@dataclass(frozen=True)
class GeneratorResponse:
    texts: tuple[str, ...]
    logprobs: Optional[tuple[float, ...]] = None
    model_calls_consumed: int = 1


class Generator(ABC):
    @abstractmethod
    def generate(self, request: GeneratorRequest, budget: Optional[Budget] = None) -> GeneratorResponse:
        """Return exactly ``request.n`` completions, charging ``budget`` before each call."""


class SimulatedGenerator(Generator):
    def __init__(
        self,
        alphabet: str = "01",
        length: int = 8,
        edit_rate: float = 0.2,
        max_fusion_edits: int = 1,
        sentinels: prompts.Sentinels = prompts.DEFAULT_SENTINELS,
    ) -> None:
        if len(set(alphabet)) < 2 or len(set(alphabet)) != len(alphabet):
            raise ValidationError("alphabet needs at least two distinct characters and no repeats")
        if length < 1:
            raise ValidationError("length must be >= 1")
        if edit_rate < 0 or max_fusion_edits < 0:
            raise ValidationError("edit_rate and max_fusion_edits must be non-negative")
        self.alphabet = alphabet
        self.length = length
        self.edit_rate = edit_rate
        self.max_fusion_edits = max_fusion_edits
        self.sentinels = sentinels

    def edit_probability(self, params: SamplingParams) -> float:
        return min(1.0, max(params.min_p, self.edit_rate * params.temperature))

    def generate(self, request: GeneratorRequest, budget: Optional[Budget] = None) -> GeneratorResponse:
        kind = prompts.classify(request.prompt_text, self.sentinels)
        if kind == prompts.FUSION:
            parents = prompts.parse_fusion(request.prompt_text, self.sentinels)
        elif kind == prompts.REFINEMENT:
            parents = (prompts.parse_refine(request.prompt_text, self.sentinels),)
            if not parents[0]:
                raise TemplateError("refinement prompt embeds an empty response")
        if budget is not None:
            budget.charge_model_calls(request.n)
        seed = request.params.seed or 0
        p_edit = self.edit_probability(request.params)
        texts = []
        for i in range(request.n):
            rng = SplitMix64.from_key(seed, "sample", i)
            if kind == prompts.PLAIN:
                texts.append(self._plain(rng))
            elif kind == prompts.FUSION:
                texts.append(self._fuse(rng, *parents, p_edit))
            else:
                texts.append(self._refine(rng, parents[0]))
        per_char = -math.log(len(self.alphabet))
        logprobs = tuple(per_char * len(t) for t in texts)
        return GeneratorResponse(tuple(texts), logprobs, request.n)

    def _plain(self, rng: SplitMix64) -> str:
        k = len(self.alphabet)
        return "".join(self.alphabet[rng.randbelow(k)] for _ in range(self.length))

    def _fuse(self, rng: SplitMix64, a: str, b: str, p_edit: float) -> str:
        if rng.random() < 0.5:
            a, b = b, a
        cut = rng.randbelow(min(len(a), len(b)) + 1)
        child = list(a[:cut] + b[cut:])
        pool = sorted(set(a) | set(b))
        for _ in range(self.max_fusion_edits):
            if rng.random() < p_edit and child and len(pool) > 1:
                pos = rng.randbelow(len(child))
                others = [c for c in pool if c != child[pos]]
                child[pos] = others[rng.randbelow(len(others))]
        return "".join(child)

    def _refine(self, rng: SplitMix64, y: str) -> str:
        pos = rng.randbelow(len(y))
        pool = sorted(set(self.alphabet) | set(y))
        others = [c for c in pool if c != y[pos]]
        return y[:pos] + others[rng.randbelow(len(others))] + y[pos + 1 :]


_RETRY_STATUS = {429, 500, 502, 503, 504}


class HttpGenerator(Generator):
    """Client for ``POST {base_url}/v1/chat/completions``.

    ``min_p`` and ``top_k`` are only sent when the endpoint is declared to
    support them; otherwise they are dropped with a one-time warning.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: Optional[str] = None,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        max_in_flight: int = 8,
        supports_min_p: bool = False,
        supports_top_k: bool = False,
        client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.url = base_url.rstrip("/") + "/v1/chat/completions"
        self.model = model
        self.api_key = api_key if api_key is not None else os.environ.get("MEMETRON_API_KEY")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.supports_min_p = supports_min_p
        self.supports_top_k = supports_top_k
        self._client = client or httpx.Client(timeout=timeout)
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._sleep = sleep
        self._warned: set[str] = set()

    def _warn_once(self, knob: str) -> None:
        if knob not in self._warned:
            self._warned.add(knob)
            logger.warning("endpoint does not advertise %s support; dropping it", knob)

    def payload(self, prompt_text: str, params: SamplingParams, n: int) -> dict[str, Any]:
        body: dict[str, Any] = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt_text}],
            "temperature": params.temperature,
            "top_p": params.top_p,
            "max_tokens": params.max_tokens,
            "n": n,
        }
        if params.top_k:
            if self.supports_top_k:
                body["top_k"] = params.top_k
            else:
                self._warn_once("top_k")
        if params.min_p:
            if self.supports_min_p:
                body["min_p"] = params.min_p
            else:
                self._warn_once("min_p")
        if params.seed is not None:
            body["seed"] = params.seed
        return body

    def _post(self, body: dict[str, Any]) -> dict[str, Any]:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: Optional[str] = None
        rate_limited = False
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                with self._slots:
                    resp = self._client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                last, rate_limited = f"transport error: {exc}", False
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
            if resp.status_code in _RETRY_STATUS:
                last, rate_limited = f"HTTP {resp.status_code}", resp.status_code == 429
                continue
            if resp.status_code >= 400:
                raise GeneratorError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()
            except ValueError as exc:
                raise GeneratorError(f"malformed JSON response: {exc}") from exc
        if rate_limited:
            raise RateLimitError(f"rate limited after {self.max_retries + 1} attempts")
        raise GeneratorError(f"request failed after {self.max_retries + 1} attempts ({last})")

    @staticmethod
    def _parse(data: dict[str, Any]) -> tuple[list[str], list[Optional[float]]]:
        try:
            choices = sorted(data["choices"], key=lambda c: c.get("index", 0))
            texts = [c["message"]["content"] or "" for c in choices]
        except (KeyError, TypeError) as exc:
            raise GeneratorError(f"unexpected completion payload: {exc}") from exc
        logprobs: list[Optional[float]] = []
        for c in choices:
            lp = c.get("logprobs") or {}
            content = lp.get("content") if isinstance(lp, dict) else None
            logprobs.append(sum(tok["logprob"] for tok in content) if content else None)
        return texts, logprobs

    def generate(self, request: GeneratorRequest, budget: Optional[Budget] = None) -> GeneratorResponse:
        if budget is not None:
            budget.charge_model_calls(request.n)
        texts, logprobs = self._parse(self._post(self.payload(request.prompt_text, request.params, request.n)))
        if len(texts) != request.n:
            raise GeneratorError(f"asked for {request.n} completions, got {len(texts)}")
        consumed = request.n
        for i, text in enumerate(texts):
            if text.strip():
                continue
            if budget is not None:
                budget.charge_model_calls(1)
            consumed += 1
            redraw, redraw_lp = self._parse(self._post(self.payload(request.prompt_text, request.params, 1)))
            if not redraw or not redraw[0].strip():
                raise EmptyCompletionError(i)
            texts[i], logprobs[i] = redraw[0], redraw_lp[0]
        lp = tuple(logprobs) if all(v is not None for v in logprobs) else None
        return GeneratorResponse(tuple(texts), lp, consumed)

    def close(self) -> None:
        self._client.close()
