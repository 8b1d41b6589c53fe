"""Reward functions and the caching, budgeted evaluator used by the searches.

Three reward kinds are supported:

* ``scalar``: a function ``r(prompt, text) -> float``.
* ``composite``: ``alpha * r_task + (1 - alpha) * logprob``.
* ``anchored_pairwise``: a comparator ``c(prompt, text, anchor) -> float``
  that only makes sense relative to a fixed anchor response.

All values are normalised so that larger is better.
"""

from __future__ import annotations

import math
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Protocol, Sequence

import httpx

from .core import Budget, Prompt
from .errors import NonFiniteRewardError, RewardError, ValidationError
from .kernels import levenshtein
from .rng import SplitMix64

SCALAR = "scalar"
COMPOSITE = "composite"
ANCHORED = "anchored_pairwise"


class RewardFunction(Protocol):
    def __call__(self, prompt: Prompt, text: str) -> float: ...


class PairwiseComparator(Protocol):
    def __call__(self, prompt: Prompt, text: str, anchor: str) -> float: ...


@dataclass(frozen=True)
class RewardSpec:
    kind: str = SCALAR
    alpha: Optional[float] = None
    anchor_policy: str = "none"
    higher_is_better: bool = True

    def __post_init__(self) -> None:
        if self.kind not in (SCALAR, COMPOSITE, ANCHORED):
            raise ValidationError(f"unknown reward kind {self.kind!r}")
        if (self.alpha is not None) != (self.kind == COMPOSITE):
            raise ValidationError("alpha must be given exactly when kind is composite")
        if self.alpha is not None and not 0 <= self.alpha <= 1:
            raise ValidationError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.anchor_policy not in ("fixed_initial", "none"):
            raise ValidationError(f"unknown anchor policy {self.anchor_policy!r}")
        if (self.anchor_policy == "fixed_initial") != (self.kind == ANCHORED):
            raise ValidationError("anchor_policy must be fixed_initial exactly when kind is anchored_pairwise")


def _finite(value: float, what: str) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise NonFiniteRewardError(f"{what} is not finite: {value}")
    return value


def composite(task_reward: float, logprob: float, alpha: float) -> float:
    if not 0 <= alpha <= 1:
        raise ValidationError(f"alpha must be in [0, 1], got {alpha}")
    task_reward = _finite(task_reward, "task reward")
    logprob = _finite(logprob, "log probability")
    return alpha * task_reward + (1 - alpha) * logprob


def anchored_score(comparator: PairwiseComparator, prompt: Prompt, text: str, anchor_text: str) -> float:
    """Preference of ``text`` over the fixed ``anchor_text``; larger is better."""
    return _finite(comparator(prompt, text, anchor_text), "anchored score")


# -- backends: uniform batch interface -------------------------------------


class RewardBackend(Protocol):
    def score_batch(self, prompt: Prompt, texts: Sequence[str], anchor: Optional[str]) -> list[float]: ...


class FunctionBackend:
    def __init__(self, fn: RewardFunction) -> None:
        self.fn = fn

    def score_batch(self, prompt, texts, anchor):
        return [self.fn(prompt, t) for t in texts]


class ComparatorBackend:
    def __init__(self, comparator: PairwiseComparator) -> None:
        self.comparator = comparator

    def score_batch(self, prompt, texts, anchor):
        if anchor is None:
            raise ValidationError("a pairwise reward needs an anchor response")
        return [self.comparator(prompt, t, anchor) for t in texts]


class HttpRewardBackend:
    """Remote scorer: ``POST url {"prompt","candidates","anchor"} -> {"scores"}``.

    The bearer token is read from ``MEMETRON_REWARD_TOKEN`` unless given.
    """

    def __init__(
        self,
        url: str,
        token: Optional[str] = None,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        client: Optional[httpx.Client] = None,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.url = url
        self.token = token if token is not None else os.environ.get("MEMETRON_REWARD_TOKEN")
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self._client = client or httpx.Client(timeout=timeout)
        self._sleep = sleep

    def score_batch(self, prompt, texts, anchor):
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        body = {"prompt": prompt.text, "candidates": list(texts), "anchor": anchor}
        problem = "no attempt made"
        for attempt in range(self.max_retries + 1):
            if attempt:
                self._sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                resp = self._client.post(self.url, json=body, headers=headers)
            except httpx.TransportError as exc:
                problem = f"transport error: {exc}"
                continue
            if resp.status_code == 429 or resp.status_code >= 500:
                problem = f"HTTP {resp.status_code}"
                continue
            if resp.status_code >= 400:
                raise RewardError(f"reward endpoint returned HTTP {resp.status_code}")
            try:
                scores = resp.json()["scores"]
            except (ValueError, KeyError, TypeError) as exc:
                raise RewardError(f"malformed reward response: {exc}") from exc
            if len(scores) != len(texts):
                raise RewardError(f"sent {len(texts)} candidates, got {len(scores)} scores")
            return [float(s) for s in scores]
        raise RewardError(f"reward endpoint failed after {self.max_retries + 1} attempts ({problem})")


# -- evaluator -------------------------------------------------------------


class Evaluator:
    """Caches rewards per ``(prompt id, anchor, text)`` and charges the budget
    once per cache miss, before the backend is called."""

    def __init__(
        self,
        spec: RewardSpec,
        backend: RewardBackend,
        budget: Optional[Budget] = None,
    ) -> None:
        self.spec = spec
        self.backend = backend
        self.budget = budget
        self._cache: dict[tuple[str, Optional[str], str], float] = {}
        self._lock = threading.Lock()

    @classmethod
    def scalar(cls, fn: RewardFunction, budget: Optional[Budget] = None, **spec_kw) -> "Evaluator":
        return cls(RewardSpec(SCALAR, **spec_kw), FunctionBackend(fn), budget)

    @classmethod
    def pairwise(cls, comparator: PairwiseComparator, budget: Optional[Budget] = None) -> "Evaluator":
        return cls(RewardSpec(ANCHORED, anchor_policy="fixed_initial"), ComparatorBackend(comparator), budget)

    @property
    def needs_anchor(self) -> bool:
        return self.spec.kind == ANCHORED

    def evaluate(
        self,
        prompt: Prompt,
        text: str,
        anchor: Optional[str] = None,
        logprob: Optional[float] = None,
        budget: Optional[Budget] = None,
    ) -> float:
        lps = None if logprob is None else [logprob]
        return self.evaluate_many(prompt, [text], anchor, lps, budget)[0]

    def evaluate_many(
        self,
        prompt: Prompt,
        texts: Sequence[str],
        anchor: Optional[str] = None,
        logprobs: Optional[Sequence[Optional[float]]] = None,
        budget: Optional[Budget] = None,
    ) -> list[float]:
        if any(not t for t in texts):
            raise ValidationError("cannot score an empty response")
        if self.needs_anchor and anchor is None:
            raise ValidationError("anchored_pairwise reward needs an anchor")
        if not self.needs_anchor:
            anchor = None
        budget = budget if budget is not None else self.budget
        with self._lock:
            misses: dict[str, Optional[float]] = {}
            for i, t in enumerate(texts):
                if (prompt.id, anchor, t) not in self._cache and t not in misses:
                    misses[t] = logprobs[i] if logprobs is not None else None
            if misses:
                if self.spec.kind == COMPOSITE and any(lp is None for lp in misses.values()):
                    raise ValidationError("composite reward needs a log probability for every response")
                if budget is not None:
                    budget.charge_reward_evals(len(misses))
                raw = self.backend.score_batch(prompt, list(misses), anchor)
                for (t, lp), value in zip(misses.items(), raw):
                    value = _finite(value, f"reward for {t[:40]!r}")
                    if not self.spec.higher_is_better:
                        value = -value
                    if self.spec.kind == COMPOSITE:
                        value = composite(value, lp, self.spec.alpha)
                    self._cache[(prompt.id, anchor, t)] = value
            return [self._cache[(prompt.id, anchor, t)] for t in texts]


# -- synthetic rewards for offline testing ---------------------------------


class TargetMatchReward:
    """Negative edit distance to a hidden per-prompt target string.

    Targets come from ``targets`` when given, otherwise they are drawn from
    ``SplitMix64.from_key(seed, "target", prompt.id)`` over ``alphabet``.
    """

    def __init__(
        self,
        targets: Optional[Mapping[str, str]] = None,
        alphabet: str = "01",
        length: int = 8,
        seed: int = 0,
    ) -> None:
        self.targets = dict(targets or {})
        self.alphabet = alphabet
        self.length = length
        self.seed = seed

    def target_for(self, prompt: Prompt) -> str:
        if prompt.id not in self.targets:
            rng = SplitMix64.from_key(self.seed, "target", prompt.id)
            k = len(self.alphabet)
            self.targets[prompt.id] = "".join(self.alphabet[rng.randbelow(k)] for _ in range(self.length))
        return self.targets[prompt.id]

    def __call__(self, prompt: Prompt, text: str) -> float:
        return float(-levenshtein(text, self.target_for(prompt)))


class TokenBandReward:
    """0 inside ``[low, high]`` whitespace tokens, minus the distance to the band outside."""

    def __init__(self, low: int, high: int) -> None:
        if not 0 <= low <= high:
            raise ValidationError("need 0 <= low <= high")
        self.low, self.high = low, high

    def __call__(self, prompt: Prompt, text: str) -> float:
        n = len(text.split())
        if n < self.low:
            return float(n - self.low)
        if n > self.high:
            return float(self.high - n)
        return 0.0


class RuggedReward:
    """Multi-modal landscape: the best of several weighted similarity peaks plus
    a small hash-derived ripple, so neighbouring strings can differ sharply."""

    def __init__(self, alphabet: str = "01", length: int = 8, peaks: int = 4, seed: int = 0, ripple: float = 0.05) -> None:
        rng = SplitMix64.from_key(seed, "rugged")
        k = len(alphabet)
        self.peaks = [
            ("".join(alphabet[rng.randbelow(k)] for _ in range(length)), 0.5 + 0.5 * rng.random())
            for _ in range(peaks)
        ]
        self.length = length
        self.seed = seed
        self.ripple = ripple

    def __call__(self, prompt: Prompt, text: str) -> float:
        scale = max(self.length, len(text), 1)
        peak = max(h * (1 - levenshtein(text, p) / scale) for p, h in self.peaks)
        noise = SplitMix64.from_key(self.seed, "ripple", prompt.id, text).random()
        return peak + self.ripple * noise


def length_comparator(prompt: Prompt, text: str, anchor: str) -> float:
    """Synthetic pairwise comparator preferring longer responses."""
    return float(len(text) - len(anchor))
