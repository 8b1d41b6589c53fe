"""Shared builders for the test suite."""

from __future__ import annotations

import hashlib
from typing import Optional

from memetron.core import Budget, Prompt
from memetron.model import SimulatedGenerator
from memetron.prompts import DEFAULT_SENTINELS
from memetron.reward import Evaluator, TargetMatchReward, length_comparator
from memetron.search import SearchContext


def make_ctx(
    seed: int = 0,
    prompt_id: str = "q0",
    alphabet: str = "ACGT",
    length: int = 16,
    edit_rate: float = 0.2,
    max_calls: int = 1_000_000,
    max_evals: Optional[int] = None,
    algorithm: str = "genetron",
    reward=None,
    pairwise: bool = False,
) -> SearchContext:
    budget = Budget(max_calls, max_evals if max_evals is not None else max_calls)
    if pairwise:
        evaluator = Evaluator.pairwise(length_comparator, budget)
    else:
        reward = reward or TargetMatchReward(alphabet=alphabet, length=length, seed=seed)
        evaluator = Evaluator.scalar(reward, budget)
    return SearchContext(
        prompt=Prompt(prompt_id, f"question {prompt_id}"),
        generator=SimulatedGenerator(alphabet, length, edit_rate),
        evaluator=evaluator,
        budget=budget,
        seed=seed,
        algorithm=algorithm,
        sentinels=DEFAULT_SENTINELS,
    )


def checksum(history) -> str:
    return hashlib.sha256(history.to_jsonl().encode("utf-8")).hexdigest()


def generate_calls(log) -> int:
    return sum(rec["consumed"] for rec in log if rec["event"] == "generate")
