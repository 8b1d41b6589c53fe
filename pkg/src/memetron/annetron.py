"""Simulated-annealing local search with an LLM refinement operator."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

from .core import Budget, Candidate, Origin, TemperatureSchedule
from .errors import BudgetExceeded, UnscoredCandidateError, ValidationError
from .genetron import converged
from .prompts import render_refine
from .rng import SplitMix64
from .search import SearchContext, SearchResult, argmax_index

DIRECT = "direct_reward"
ANCHORED = "anchored"


@dataclass(frozen=True)
class AnnetronConfig:
    """``steps=0`` disables refinement (used for the degenerate hybrid).

    With ``couple_temperature`` the generator's sampling temperature at step
    ``t`` is ``temperature_offset + temperature_scale * T_t``.
    """

    steps: int = 7
    patience: int = 3
    best_of_n: int = 3
    schedule: TemperatureSchedule = field(default_factory=TemperatureSchedule)
    scoring: str = DIRECT
    delta: float = 1e-6
    couple_temperature: bool = True
    temperature_scale: float = 1.0
    temperature_offset: float = 0.0

    def __post_init__(self) -> None:
        if self.steps < 0:
            raise ValidationError("steps must be >= 0")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if self.steps > 0 and self.patience > self.steps:
            raise ValidationError("patience must not exceed steps")
        if self.best_of_n < 1:
            raise ValidationError("best_of_n must be >= 1")
        if self.scoring not in (DIRECT, ANCHORED):
            raise ValidationError(f"unknown scoring mode {self.scoring!r}")
        if self.delta < 0:
            raise ValidationError("delta must be >= 0")

    def sampling_temperature(self, T: float) -> Optional[float]:
        if not self.couple_temperature:
            return None
        return max(0.0, self.temperature_offset + self.temperature_scale * T)


def metropolis_accept(delta_r: float, T: float, rng: SplitMix64) -> bool:
    """Always accept ``delta_r >= 0``; otherwise accept with probability ``exp(delta_r / T)``."""
    if not T > 0:
        raise ValidationError(f"temperature must be positive, got {T}")
    if not math.isfinite(delta_r):
        raise ValidationError(f"reward difference must be finite, got {delta_r}")
    if delta_r >= 0:
        return True
    return rng.random() < math.exp(delta_r / T)


def cool(T: float, schedule: TemperatureSchedule) -> float:
    return max(schedule.alpha * T, schedule.t_floor)


def propose(
    ctx: SearchContext,
    current: Candidate,
    n: int,
    *,
    step: int,
    generation: int = 0,
    slot: int = 0,
    anchor: Optional[str] = None,
    temperature: Optional[float] = None,
    budget: Optional[Budget] = None,
) -> Candidate:
    """Best of ``n`` refinements of ``current``, scored but not yet recorded."""
    budget = budget if budget is not None else ctx.budget
    budget.require(model_calls=n, reward_evals=n)
    prompt_text = render_refine(ctx.prompt, current, ctx.refine_template, ctx.sentinels)
    response = ctx.generate(
        prompt_text, n, key=(generation, "anneal", slot, step), phase="anneal",
        temperature=temperature, budget=budget,
    )
    scores = ctx.score(response.texts, anchor, response.logprobs, budget)
    k = argmax_index(scores)
    return Candidate(
        response.texts[k],
        scores[k],
        Origin.refinement(current.id, step, k),
        generation,
        ctx.budget.used_model_calls,
    )


def run_annetron(
    ctx: SearchContext,
    y0: Candidate,
    config: AnnetronConfig,
    generation: int = 0,
    slot: int = 0,
    budget: Optional[Budget] = None,
) -> SearchResult:
    """Anneal from the recorded candidate ``y0``.

    Every proposal is recorded; rejected ones carry ``accepted=False`` and are
    never selected. The result's ``best`` is the argmax over ``y0`` and the
    accepted proposals.
    """
    if y0.id is None:
        raise ValidationError("y0 must already be recorded in the history")
    budget = budget if budget is not None else ctx.budget
    anchor = None
    if config.scoring == ANCHORED:
        anchor = y0.text
        current_score = ctx.score([y0.text], anchor, None, budget)[0]
    elif ctx.evaluator.needs_anchor:
        raise ValidationError("a pairwise reward requires anchored scoring")
    else:
        if y0.reward is None:
            raise UnscoredCandidateError(f"candidate {y0.id} has no reward")
        current_score = y0.reward
    current = best = y0
    best_score = current_score
    trace = [best_score]
    T = config.schedule.t0
    stop_reason = "steps"
    for step in range(1, config.steps + 1):
        try:
            proposal = propose(
                ctx, current, config.best_of_n, step=step, generation=generation, slot=slot,
                anchor=anchor, temperature=config.sampling_temperature(T), budget=budget,
            )
        except BudgetExceeded:
            stop_reason = "budget"
            break
        delta_r = proposal.reward - current_score
        accepted = metropolis_accept(delta_r, T, ctx.rng(generation, "accept", slot, step))
        stored = ctx.history.add(replace(proposal, origin=replace(proposal.origin, accepted=accepted)))
        ctx.emit(
            "step", "anneal", generation=generation, slot=slot, step=step, T=T,
            proposal_reward=proposal.reward, delta=delta_r, accepted=accepted, candidate=stored.id,
        )
        if accepted:
            current, current_score = stored, proposal.reward
            if current_score > best_score:
                best, best_score = stored, current_score
        T = cool(T, config.schedule)
        trace.append(best_score)
        if converged(trace, config.patience, config.delta):
            stop_reason = "patience"
            break
    ctx.emit(
        "anneal_done", "anneal", generation=generation, slot=slot, root=y0.id,
        best_id=best.id, best=best_score, stop_reason=stop_reason,
    )
    return SearchResult(ctx.history, best, trace, stop_reason, ctx.log, best_score)


def run_annetron_from_scratch(ctx: SearchContext, config: AnnetronConfig) -> SearchResult:
    """Sample one response to the plain prompt and anneal from it."""
    from .genetron import init_population

    (y0,) = init_population(ctx, 1)
    result = run_annetron(ctx, y0, config)
    ctx.emit("done", "final", stop_reason=result.stop_reason, best_id=result.best.id, best=result.best_score)
    return result
