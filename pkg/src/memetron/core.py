"""Domain types shared by all search algorithms: prompts, candidates, the
history buffer and budget accounting."""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Iterator, Optional

from .errors import (
    BudgetExceeded,
    DanglingParentError,
    EmptyHistoryError,
    NonFiniteRewardError,
    ValidationError,
)

INITIAL = "initial"
CROSSOVER = "crossover"
REFINEMENT = "refinement"
_KINDS = (INITIAL, CROSSOVER, REFINEMENT)


@dataclass(frozen=True)
class Prompt:
    id: str
    text: str

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("prompt id must be non-empty")
        if not self.text:
            raise ValidationError(f"prompt {self.id!r}: text must be non-empty")


@dataclass(frozen=True)
class SamplingParams:
    """Decoding knobs forwarded to a generator. ``top_k=0`` disables top-k."""

    temperature: float = 1.5
    top_k: int = 50
    top_p: float = 1.0
    min_p: float = 0.1
    max_tokens: int = 4098
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.temperature) and self.temperature >= 0):
            raise ValidationError(f"temperature must be >= 0, got {self.temperature}")
        if isinstance(self.top_k, bool) or not isinstance(self.top_k, int) or self.top_k < 0:
            raise ValidationError(f"top_k must be a non-negative integer, got {self.top_k}")
        if not (0 < self.top_p <= 1):
            raise ValidationError(f"top_p must be in (0, 1], got {self.top_p}")
        if not (0 <= self.min_p <= 1):
            raise ValidationError(f"min_p must be in [0, 1], got {self.min_p}")
        if isinstance(self.max_tokens, bool) or not isinstance(self.max_tokens, int) or self.max_tokens < 1:
            raise ValidationError(f"max_tokens must be a positive integer, got {self.max_tokens}")
        if self.seed is not None and not (0 <= self.seed < 2**64):
            raise ValidationError(f"seed must be an unsigned 64-bit integer, got {self.seed}")

    def with_seed(self, seed: Optional[int]) -> "SamplingParams":
        return replace(self, seed=seed)


@dataclass(frozen=True)
class Origin:
    """Lineage of a candidate.

    ``accepted`` is only meaningful for refinements: ``False`` marks an
    annealing proposal that was generated and scored but rejected.
    """

    kind: str
    parents: tuple[int, ...] = ()
    sample_index: Optional[int] = None
    step: Optional[int] = None
    accepted: Optional[bool] = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ValidationError(f"unknown origin kind {self.kind!r}")
        expected = {INITIAL: 0, CROSSOVER: 2, REFINEMENT: 1}[self.kind]
        if len(self.parents) != expected:
            raise ValidationError(f"{self.kind} origin needs {expected} parents, got {len(self.parents)}")

    @classmethod
    def initial(cls, sample_index: Optional[int] = None) -> "Origin":
        return cls(INITIAL, (), sample_index)

    @classmethod
    def crossover(cls, parent_a: int, parent_b: int, sample_index: int) -> "Origin":
        return cls(CROSSOVER, (parent_a, parent_b), sample_index)

    @classmethod
    def refinement(cls, parent: int, step: int, sample_index: int, accepted: Optional[bool] = None) -> "Origin":
        return cls(REFINEMENT, (parent,), sample_index, step, accepted)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "parents": list(self.parents),
            "sample_index": self.sample_index,
            "step": self.step,
            "accepted": self.accepted,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Origin":
        return cls(
            kind=d["kind"],
            parents=tuple(int(p) for p in d.get("parents", ())),
            sample_index=d.get("sample_index"),
            step=d.get("step"),
            accepted=d.get("accepted"),
        )


@dataclass(frozen=True)
class Candidate:
    text: str
    reward: Optional[float]
    origin: Origin
    generation: int = 0
    created_at_call: int = 0
    id: Optional[int] = None

    def __post_init__(self) -> None:
        if self.reward is not None and not math.isfinite(self.reward):
            raise NonFiniteRewardError(f"candidate reward must be finite, got {self.reward}")
        if self.generation < 0 or self.created_at_call < 0:
            raise ValidationError("generation and created_at_call must be non-negative")

    @property
    def scored(self) -> bool:
        return self.reward is not None

    @property
    def rejected(self) -> bool:
        return self.origin.accepted is False

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "text": self.text,
            "reward": self.reward,
            "origin": self.origin.to_dict(),
            "generation": self.generation,
            "created_at_call": self.created_at_call,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Candidate":
        reward = d.get("reward")
        return cls(
            id=int(d["id"]),
            text=d["text"],
            reward=None if reward is None else float(reward),
            origin=Origin.from_dict(d["origin"]),
            generation=int(d["generation"]),
            created_at_call=int(d["created_at_call"]),
        )


class Budget:
    """Model-call and reward-evaluation counters with refuse-before-call semantics.

    A child budget (see :meth:`child`) charges itself and every ancestor in one
    atomic step, so carving a share out of a run budget never lets the run
    overspend.
    """

    def __init__(self, max_model_calls: int, max_reward_evals: int, parent: Optional["Budget"] = None) -> None:
        if max_model_calls < 0 or max_reward_evals < 0:
            raise ValidationError("budget limits must be non-negative")
        self.max_model_calls = max_model_calls
        self.max_reward_evals = max_reward_evals
        self.used_model_calls = 0
        self.used_reward_evals = 0
        self.parent = parent
        self._lock: threading.RLock = parent._lock if parent is not None else threading.RLock()

    def _chain(self) -> list["Budget"]:
        chain, node = [], self
        while node is not None:
            chain.append(node)
            node = node.parent
        return chain

    @property
    def remaining_model_calls(self) -> int:
        with self._lock:
            return min(b.max_model_calls - b.used_model_calls for b in self._chain())

    @property
    def remaining_reward_evals(self) -> int:
        with self._lock:
            return min(b.max_reward_evals - b.used_reward_evals for b in self._chain())

    def require(self, model_calls: int = 0, reward_evals: int = 0) -> None:
        """Raise :class:`BudgetExceeded` unless both amounts are still available."""
        with self._lock:
            if model_calls > self.remaining_model_calls:
                raise BudgetExceeded(f"need {model_calls} model calls, {self.remaining_model_calls} left")
            if reward_evals > self.remaining_reward_evals:
                raise BudgetExceeded(f"need {reward_evals} reward evals, {self.remaining_reward_evals} left")

    def charge_model_calls(self, k: int) -> None:
        with self._lock:
            self.require(model_calls=k)
            for b in self._chain():
                b.used_model_calls += k

    def charge_reward_evals(self, k: int) -> None:
        with self._lock:
            self.require(reward_evals=k)
            for b in self._chain():
                b.used_reward_evals += k

    def child(self, max_model_calls: int, max_reward_evals: int) -> "Budget":
        return Budget(max_model_calls, max_reward_evals, parent=self)

    def __repr__(self) -> str:
        return (
            f"Budget(model_calls={self.used_model_calls}/{self.max_model_calls}, "
            f"reward_evals={self.used_reward_evals}/{self.max_reward_evals})"
        )


@dataclass(frozen=True)
class TemperatureSchedule:
    """Geometric cooling ``T_t = max(t0 * alpha**t, t_floor)``."""

    t0: float = 1.5
    alpha: float = 0.8
    t_floor: float = 1e-6

    def __post_init__(self) -> None:
        if not self.t0 > 0:
            raise ValidationError(f"t0 must be > 0, got {self.t0}")
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must be in (0, 1), got {self.alpha}")
        if not self.t_floor >= 0:
            raise ValidationError(f"t_floor must be >= 0, got {self.t_floor}")

    def at(self, t: int) -> float:
        return max(self.t0 * self.alpha**t, self.t_floor)


@dataclass
class HistoryBuffer:
    """Append-only record of every scored candidate of one prompt's run."""

    prompt_id: str
    budget: Optional[Budget] = None
    _items: list[Candidate] = field(default_factory=list, repr=False)

    def record(self, candidate: Candidate) -> int:
        """Append ``candidate`` and return its assigned id."""
        for parent in candidate.origin.parents:
            if not 0 <= parent < len(self._items):
                raise DanglingParentError(f"parent id {parent} is not in the history")
        if self.budget is not None and candidate.created_at_call > self.budget.used_model_calls:
            raise BudgetExceeded(
                f"candidate claims call {candidate.created_at_call} but only "
                f"{self.budget.used_model_calls} model calls were charged"
            )
        new_id = len(self._items)
        self._items.append(replace(candidate, id=new_id))
        return new_id

    def add(self, candidate: Candidate) -> Candidate:
        """Like :meth:`record` but returns the stored candidate."""
        return self._items[self.record(candidate)]

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Candidate]:
        return iter(self._items)

    def __getitem__(self, cid: int) -> Candidate:
        return self._items[cid]

    @property
    def candidates(self) -> tuple[Candidate, ...]:
        return tuple(self._items)

    def eligible(self) -> list[Candidate]:
        """Scored candidates that may be selected (rejected proposals excluded)."""
        return [c for c in self._items if c.scored and not c.rejected]

    def to_jsonl(self) -> str:
        return "".join(dumps_line(c.to_dict()) for c in self._items)

    def write(self, path: Path) -> None:
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    @classmethod
    def from_candidates(cls, prompt_id: str, candidates: Iterable[Candidate]) -> "HistoryBuffer":
        buf = cls(prompt_id)
        for c in candidates:
            if c.id != len(buf):
                raise ValidationError(f"candidate ids must be 0..n-1 in order, got {c.id} at {len(buf)}")
            buf.record(c)
        return buf

    @classmethod
    def read(cls, path: Path, prompt_id: Optional[str] = None) -> "HistoryBuffer":
        path = Path(path)
        if prompt_id is None:
            prompt_id = path.stem.removeprefix("history_")
        cands = []
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    cands.append(Candidate.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as exc:
                    raise ValidationError(f"{path}:{lineno}: malformed history line ({exc})") from exc
        return cls.from_candidates(prompt_id, cands)


def dumps_line(obj: Any) -> str:
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":")) + "\n"


def argmax_reward(candidates: Iterable[Candidate]) -> Optional[Candidate]:
    """Highest-reward scored candidate; ties go to the lowest id."""
    best = None
    for c in candidates:
        if c.reward is None:
            continue
        if best is None or c.reward > best.reward or (c.reward == best.reward and c.id < best.id):
            best = c
    return best


def best_of(history: HistoryBuffer) -> Candidate:
    best = argmax_reward(history.eligible())
    if best is None:
        raise EmptyHistoryError(f"history for {history.prompt_id!r} has no scored candidate")
    return best
