"""Population search with tournament selection, LLM-driven crossover,
best-of-n mutation and elitism over the cumulative history."""

from __future__ import annotations

import logging
import statistics
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Optional, Sequence

from .core import Candidate, HistoryBuffer, Origin, best_of
from .errors import (
    BudgetExceeded,
    InsufficientHistoryError,
    UnscoredCandidateError,
    ValidationError,
)
from .prompts import render_fusion
from .rng import SplitMix64
from .search import SearchContext, SearchResult, argmax_index

logger = logging.getLogger(__name__)

PER_OFFSPRING = "per_offspring"
POOL = "pool"


@dataclass(frozen=True)
class GenetronConfig:
    population_size: int = 16
    best_of_n: int = 3
    max_generations: int = 3
    patience: int = 3
    delta: float = 1e-6
    parent_pairing: str = "random_with_dedup"
    parent_selection: str = PER_OFFSPRING
    offspring_per_generation: Optional[int] = None

    def __post_init__(self) -> None:
        if self.population_size < 1:
            raise ValidationError("population_size must be >= 1")
        if self.population_size < 2 and self.max_generations > 0:
            raise ValidationError("population_size must be >= 2 when any generation is evolved")
        if self.best_of_n < 1:
            raise ValidationError("best_of_n must be >= 1")
        if self.max_generations < 0:
            raise ValidationError("max_generations must be >= 0")
        if self.patience < 1:
            raise ValidationError("patience must be >= 1")
        if self.max_generations > 0 and self.patience > self.max_generations:
            raise ValidationError("patience must not exceed max_generations")
        if self.delta < 0:
            raise ValidationError("delta must be >= 0")
        if self.parent_pairing != "random_with_dedup":
            raise ValidationError(f"unknown parent_pairing {self.parent_pairing!r}")
        if self.parent_selection not in (PER_OFFSPRING, POOL):
            raise ValidationError(f"unknown parent_selection {self.parent_selection!r}")
        if self.offspring_per_generation is not None and self.offspring_per_generation < 1:
            raise ValidationError("offspring_per_generation must be >= 1")

    @property
    def offspring_count(self) -> int:
        return self.offspring_per_generation or self.population_size


def init_population(ctx: SearchContext, size: int) -> list[Candidate]:
    """Sample, score and record ``size`` initial responses to the plain prompt."""
    ctx.budget.require(model_calls=size, reward_evals=size)
    response = ctx.generate(ctx.prompt.text, size, key=(0, "init"), phase="init")
    if ctx.evaluator.needs_anchor and ctx.anchor is None:
        ctx.anchor = response.texts[0]
    rewards = ctx.score(response.texts, ctx.anchor, response.logprobs)
    return [
        ctx.history.add(
            Candidate(text, reward, Origin.initial(i), 0, ctx.budget.used_model_calls)
        )
        for i, (text, reward) in enumerate(zip(response.texts, rewards))
    ]


def _beats(a: Candidate, b: Candidate) -> bool:
    return a.reward > b.reward or (a.reward == b.reward and a.id < b.id)


def tournament_select(
    population: Sequence[Candidate], rng: SplitMix64, exclude: Optional[int] = None
) -> Candidate:
    """Binary tournament: two distinct entrants, the higher reward wins (ties to lower id)."""
    pool = [c for c in population if c.id != exclude] if exclude is not None else list(population)
    if not pool:
        raise ValidationError("tournament needs a non-empty population")
    for c in pool:
        if c.reward is None:
            raise UnscoredCandidateError(f"candidate {c.id} has no reward")
    if len(pool) == 1:
        return pool[0]
    i, j = rng.sample2(len(pool))
    return pool[i] if _beats(pool[i], pool[j]) else pool[j]


def select_parent_pairs(
    population: Sequence[Candidate], count: int, rng: SplitMix64, mode: str = PER_OFFSPRING
) -> list[tuple[Candidate, Candidate]]:
    """Parent pairs for one generation, avoiding repeated unordered pairs.

    ``per_offspring`` runs two fresh tournaments per slot (the second excludes
    the first winner). ``pool`` runs one tournament per population slot over
    distinct entrant pairs and pairs up the winners. Once every unique pair
    has been used, repeats are allowed.
    """
    if len(population) < 2:
        raise ValidationError("parent pairing needs at least two candidates")
    if mode == POOL:
        pairs = _pool_pairs(population, count, rng)
        if pairs is not None:
            return pairs
    max_unique = len(population) * (len(population) - 1) // 2
    used: set[frozenset[int]] = set()
    pairs = []
    for _ in range(count):
        for _attempt in range(100):
            a = tournament_select(population, rng)
            b = tournament_select(population, rng, exclude=a.id)
            key = frozenset((a.id, b.id))
            if key not in used or len(used) >= max_unique:
                break
        if key in used:
            logger.info("reusing parent pair %s", sorted(key))
        used.add(key)
        pairs.append((a, b))
    return pairs


def _pool_pairs(
    population: Sequence[Candidate], count: int, rng: SplitMix64
) -> Optional[list[tuple[Candidate, Candidate]]]:
    entrants = list(combinations(range(len(population)), 2))
    rng.shuffle(entrants)
    winners = []
    for k in range(len(population)):
        i, j = entrants[k % len(entrants)]
        a, b = population[i], population[j]
        winners.append(a if _beats(a, b) else b)
    distinct = sorted({w.id: w for w in winners}.values(), key=lambda c: c.id)
    if len(distinct) < 2:
        return None
    candidates = list(combinations(distinct, 2))
    rng.shuffle(candidates)
    if count > len(candidates):
        logger.info("pool offers %d unique pairs for %d offspring; repeating", len(candidates), count)
    return [candidates[k % len(candidates)] for k in range(count)]


def crossover_mutate(
    ctx: SearchContext,
    parent_a: Candidate,
    parent_b: Candidate,
    n: int,
    generation: int,
    slot: int,
) -> Candidate:
    """Fuse two parents, draw ``n`` samples and record the best one."""
    for p in (parent_a, parent_b):
        if p.reward is None:
            raise UnscoredCandidateError(f"parent {p.id} has no reward")
    ctx.budget.require(model_calls=n, reward_evals=n)
    prompt_text = render_fusion(ctx.prompt, parent_a, parent_b, ctx.fusion_template, ctx.sentinels)
    response = ctx.generate(prompt_text, n, key=(generation, "crossover", slot), phase="crossover")
    rewards = ctx.score(response.texts, ctx.anchor, response.logprobs)
    k = argmax_index(rewards)
    return ctx.history.add(
        Candidate(
            response.texts[k],
            rewards[k],
            Origin.crossover(parent_a.id, parent_b.id, k),
            generation,
            ctx.budget.used_model_calls,
        )
    )


def elitism(history: HistoryBuffer, size: int) -> list[Candidate]:
    """Top ``size`` eligible candidates by reward, ties to the lower id.

    Maximising the reward sum over all subsets of this size selects exactly
    these candidates.
    """
    pool = history.eligible()
    if len(pool) < size:
        raise InsufficientHistoryError(f"need {size} scored candidates, history has {len(pool)}")
    return sorted(pool, key=lambda c: (-c.reward, c.id))[:size]


def converged(best_reward_trace: Sequence[float], patience: int, delta: float) -> bool:
    if len(best_reward_trace) <= patience:
        return False
    return best_reward_trace[-1] - best_reward_trace[-1 - patience] < delta


# refine(ctx, offspring, generation) -> offspring after local search
Refiner = Callable[[SearchContext, list[Candidate], int], list[Candidate]]


def evolve(ctx: SearchContext, config: GenetronConfig, refine: Optional[Refiner] = None) -> SearchResult:
    """Generation loop shared by GENETRON and MEMETRON."""
    population = init_population(ctx, config.population_size)
    trace = [max(c.reward for c in population)]
    ctx.emit(
        "generation", "init", generation=0, best=trace[0],
        mean=statistics.fmean(c.reward for c in population), model_calls=ctx.budget.used_model_calls,
    )
    stop_reason = "max_generations"
    for g in range(1, config.max_generations + 1):
        pairs = select_parent_pairs(population, config.offspring_count, ctx.rng(g, "select"), config.parent_selection)
        offspring = []
        try:
            for slot, (a, b) in enumerate(pairs):
                offspring.append(crossover_mutate(ctx, a, b, config.best_of_n, g, slot))
        except BudgetExceeded:
            stop_reason = "budget"
        if refine is not None and offspring:
            offspring = refine(ctx, offspring, g)
        if stop_reason == "budget":
            break
        population = elitism(ctx.history, config.population_size)
        trace.append(population[0].reward)
        ctx.emit(
            "generation", "crossover", generation=g, best=trace[-1],
            mean=statistics.fmean(c.reward for c in population), model_calls=ctx.budget.used_model_calls,
        )
        if converged(trace, config.patience, config.delta):
            stop_reason = "converged"
            break
    best = best_of(ctx.history)
    ctx.emit("done", "final", stop_reason=stop_reason, best_id=best.id, best=best.reward)
    return SearchResult(ctx.history, best, trace, stop_reason, ctx.log)


def run_genetron(ctx: SearchContext, config: GenetronConfig) -> SearchResult:
    return evolve(ctx, config)
