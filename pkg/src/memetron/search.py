"""Per-prompt search state shared by GENETRON, ANNETRON and MEMETRON."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

from .core import Budget, Candidate, HistoryBuffer, Prompt, SamplingParams, best_of
from .model import Generator, GeneratorRequest, GeneratorResponse
from .prompts import PromptTemplate, Sentinels, load_template, FUSION, REFINEMENT
from .reward import Evaluator
from .rng import SplitMix64, stream_seed


@dataclass
class SearchContext:
    """Everything one prompt's search needs.

    Random streams and generator seeds are keyed by
    ``(seed, prompt id, *key)``, never by call order.
    """

    prompt: Prompt
    generator: Generator
    evaluator: Evaluator
    budget: Budget
    seed: int = 0
    sampling: SamplingParams = field(default_factory=SamplingParams)
    algorithm: str = "genetron"
    sentinels: Optional[Sentinels] = None
    fusion_template: Optional[PromptTemplate] = None
    refine_template: Optional[PromptTemplate] = None
    anchor: Optional[str] = None
    history: HistoryBuffer = field(init=False)
    log: list[dict[str, Any]] = field(init=False, default_factory=list)

    def __post_init__(self) -> None:
        self.history = HistoryBuffer(self.prompt.id, self.budget)
        self.fusion_template = self.fusion_template or load_template(FUSION)
        self.refine_template = self.refine_template or load_template(REFINEMENT)

    def rng(self, *key: object) -> SplitMix64:
        return SplitMix64.from_key(self.seed, self.prompt.id, *key)

    def emit(self, event: str, phase: str, **fields: Any) -> None:
        self.log.append({"event": event, "algorithm": self.algorithm, "phase": phase, **fields})

    def generate(
        self,
        prompt_text: str,
        n: int,
        key: Sequence[object],
        phase: str,
        temperature: Optional[float] = None,
        budget: Optional[Budget] = None,
    ) -> GeneratorResponse:
        budget = budget if budget is not None else self.budget
        params = self.sampling.with_seed(stream_seed(self.seed, self.prompt.id, *key))
        if temperature is not None:
            params = replace(params, temperature=temperature)
        budget.require(model_calls=n)
        before = self.budget.used_model_calls
        try:
            response = self.generator.generate(GeneratorRequest(prompt_text, params, n), budget)
        except Exception:
            # calls charged before the failure still belong in the transcript
            spent = self.budget.used_model_calls - before
            if spent:
                self.emit("generate", phase, n=n, consumed=spent, model_calls=self.budget.used_model_calls, failed=True)
            raise
        self.emit(
            "generate",
            phase,
            n=n,
            consumed=response.model_calls_consumed,
            model_calls=self.budget.used_model_calls,
        )
        return response

    def score(
        self,
        texts: Sequence[str],
        anchor: Optional[str] = None,
        logprobs: Optional[Sequence[float]] = None,
        budget: Optional[Budget] = None,
    ) -> list[float]:
        budget = budget if budget is not None else self.budget
        return self.evaluator.evaluate_many(self.prompt, texts, anchor, logprobs, budget)


@dataclass
class SearchResult:
    history: HistoryBuffer
    best: Candidate
    trace: list[float]
    stop_reason: str
    log: list[dict[str, Any]] = field(default_factory=list)
    best_score: Optional[float] = None

    @property
    def exhausted(self) -> bool:
        return self.stop_reason == "budget"


def argmax_index(scores: Sequence[float]) -> int:
    """Index of the largest score; ties go to the lowest index."""
    best = 0
    for i in range(1, len(scores)):
        if scores[i] > scores[best]:
            best = i
    return best


def run_best_of_n(ctx: SearchContext, n: int) -> SearchResult:
    """Baseline: draw ``n`` responses to the plain prompt and keep the best."""
    from .genetron import init_population

    population = init_population(ctx, n)
    best = best_of(ctx.history)
    trace = [max(c.reward for c in population)]
    ctx.emit("done", "init", stop_reason="complete", best_id=best.id, best=best.reward)
    return SearchResult(ctx.history, best, trace, "complete", ctx.log)
