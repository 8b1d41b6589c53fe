"""Memetic hybrid: every crossover offspring is refined by annealing before
the history update and elitism."""

from __future__ import annotations

from dataclasses import dataclass, field

from .annetron import AnnetronConfig, run_annetron
from .core import Candidate, best_of
from .genetron import GenetronConfig, evolve, init_population
from .search import SearchContext, SearchResult


@dataclass(frozen=True)
class MemetronConfig:
    genetron: GenetronConfig = field(default_factory=GenetronConfig)
    annetron: AnnetronConfig = field(default_factory=AnnetronConfig)


def refine_all(ctx: SearchContext, config: AnnetronConfig, offspring: list[Candidate], generation: int) -> list[Candidate]:
    """Anneal each offspring on a fair share of the remaining budget and
    return the refined population (same order, same slots)."""
    if config.steps == 0:
        return offspring
    refined = []
    for slot, child in enumerate(offspring):
        left = len(offspring) - slot
        share = ctx.budget.child(
            ctx.budget.remaining_model_calls // left,
            ctx.budget.remaining_reward_evals // left,
        )
        refined.append(run_annetron(ctx, child, config, generation, slot, share).best)
    return refined


def run_memetron(ctx: SearchContext, config: MemetronConfig) -> SearchResult:
    gcfg, acfg = config.genetron, config.annetron
    if gcfg.max_generations > 0:
        return evolve(ctx, gcfg, refine=lambda c, off, g: refine_all(c, acfg, off, g))
    # no global phase: local search on each initial response
    population = init_population(ctx, gcfg.population_size)
    trace = [max(c.reward for c in population)]
    refine_all(ctx, acfg, population, 0)
    best = best_of(ctx.history)
    ctx.emit("done", "final", stop_reason="max_generations", best_id=best.id, best=best.reward)
    return SearchResult(ctx.history, best, trace, "max_generations", ctx.log)
