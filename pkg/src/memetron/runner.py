"""Corpus execution and run-directory artifacts.

A run directory holds, per prompt, ``history_<id>.jsonl`` and
``log_<id>.jsonl`` (search events, closed by a ``summary`` record), plus
``prompts.jsonl`` and ``manifest.json``. Nothing in it depends on wall-clock
time or worker scheduling, so repeated simulated runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .annetron import run_annetron_from_scratch
from .config import RunConfig
from .core import Budget, Candidate, HistoryBuffer, Prompt, dumps_line
from .errors import AuthError, BudgetExceeded, GeneratorError, RewardError, ValidationError
from .genetron import run_genetron
from .memetron import MemetronConfig, run_memetron
from .model import Generator, HttpGenerator, SimulatedGenerator
from .prompts import DEFAULT_SENTINELS, FUSION, REFINEMENT, load_template
from .reward import (
    ComparatorBackend,
    Evaluator,
    FunctionBackend,
    HttpRewardBackend,
    RewardBackend,
    RuggedReward,
    TargetMatchReward,
    TokenBandReward,
    length_comparator,
)
from .search import SearchContext, SearchResult, run_best_of_n

logger = logging.getLogger(__name__)

MANIFEST_SCHEMA = "memetron.manifest/1"
EXPORT_COLUMNS = ("prompt_id", "id", "text", "reward", "origin", "generation", "created_at_call")
PROMPT_ID = re.compile(r"[A-Za-z0-9._-]+")

COMPLETE = "complete"
PARTIAL = "partial"
FAILED = "failed"


def version_string() -> str:
    return f"memetron v{__version__}"


# -- prompts ---------------------------------------------------------------


def parse_prompts(lines: Sequence[str], source: str = "<prompts>") -> list[Prompt]:
    prompts: list[Prompt] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            pid, text = obj["id"], obj["text"]
        except (ValueError, KeyError, TypeError) as exc:
            raise ValidationError(f"{source}:{lineno}: expected {{\"id\": str, \"text\": str}} ({exc})") from exc
        if not isinstance(pid, str) or not isinstance(text, str):
            raise ValidationError(f"{source}:{lineno}: id and text must be strings")
        if not PROMPT_ID.fullmatch(pid):
            raise ValidationError(f"{source}:{lineno}: prompt id {pid!r} must match [A-Za-z0-9._-]+")
        if pid in seen:
            raise ValidationError(f"{source}:{lineno}: duplicate prompt id {pid!r}")
        try:
            prompts.append(Prompt(pid, text))
        except ValidationError as exc:
            raise ValidationError(f"{source}:{lineno}: {exc}") from exc
        seen.add(pid)
    if not prompts:
        raise ValidationError(f"{source}: no prompts")
    return prompts


def load_prompts(path: Path) -> list[Prompt]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ValidationError(f"cannot read prompts file: {exc}") from exc
    return parse_prompts(lines, str(path))


# -- component factories ---------------------------------------------------


def build_generator(config: RunConfig) -> Generator:
    if config.backend == "simulated":
        s = config.simulated
        return SimulatedGenerator(s.alphabet, s.length, s.edit_rate, s.max_fusion_edits)
    h = config.http
    return HttpGenerator(
        h.base_url, h.model, timeout=h.timeout, max_retries=h.max_retries, backoff_base=h.backoff_base,
        max_in_flight=h.max_in_flight, supports_min_p=h.supports_min_p, supports_top_k=h.supports_top_k,
    )


def build_reward_backend(config: RunConfig) -> RewardBackend:
    r = config.reward
    if r.endpoint is not None:
        return HttpRewardBackend(**r.endpoint)
    params = dict(r.params)
    if r.builtin == "length":
        return ComparatorBackend(length_comparator)
    if r.builtin == "token_band":
        return FunctionBackend(TokenBandReward(**params))
    # synthetic landscapes default to the simulated generator's output space
    params.setdefault("alphabet", config.simulated.alphabet)
    params.setdefault("length", config.simulated.length)
    params.setdefault("seed", config.seed or 0)
    if r.builtin == "rugged":
        return FunctionBackend(RuggedReward(**params))
    return FunctionBackend(TargetMatchReward(**params))


def build_context(config: RunConfig, prompt: Prompt, generator: Optional[Generator] = None) -> SearchContext:
    budget = Budget(config.budget.max_model_calls, config.budget.max_reward_evals)
    try:
        backend = build_reward_backend(config)
    except TypeError as exc:
        raise ValidationError(f"reward.params: {exc}") from exc
    evaluator = Evaluator(config.reward.spec(), backend, budget)
    return SearchContext(
        prompt=prompt,
        generator=generator or build_generator(config),
        evaluator=evaluator,
        budget=budget,
        seed=config.seed or 0,
        sampling=config.sampling,
        algorithm=config.algorithm,
        sentinels=DEFAULT_SENTINELS if config.use_sentinels else None,
        fusion_template=load_template(FUSION, config.templates.get("fusion")),
        refine_template=load_template(REFINEMENT, config.templates.get("refine")),
    )


def run_search(ctx: SearchContext, config: RunConfig) -> SearchResult:
    if config.algorithm == "genetron":
        return run_genetron(ctx, config.genetron)
    if config.algorithm == "annetron":
        return run_annetron_from_scratch(ctx, config.annetron)
    if config.algorithm == "memetron":
        return run_memetron(ctx, MemetronConfig(config.genetron, config.annetron))
    return run_best_of_n(ctx, config.genetron.population_size)


# -- per-prompt execution --------------------------------------------------


@dataclass
class PromptOutcome:
    prompt_id: str
    status: str
    stop_reason: Optional[str]
    history: HistoryBuffer
    log: list[dict]
    model_calls: int
    reward_evals: int
    error: Optional[str] = None
    fatal: bool = False

    def summary(self) -> dict:
        best = None
        if self.history.eligible():
            b = max(self.history.eligible(), key=lambda c: (c.reward, -c.id))
            best = {"id": b.id, "reward": b.reward}
        return {
            "event": "summary",
            "prompt_id": self.prompt_id,
            "status": self.status,
            "stop_reason": self.stop_reason,
            "candidates": len(self.history),
            "model_calls": self.model_calls,
            "reward_evals": self.reward_evals,
            "best": best,
            "error": self.error,
        }


def run_prompt(config: RunConfig, prompt: Prompt, generator: Optional[Generator] = None) -> PromptOutcome:
    """Run one prompt; backend failures are captured rather than raised."""
    ctx = build_context(config, prompt, generator)
    try:
        result = run_search(ctx, config)
    except BudgetExceeded as exc:
        # the budget cannot even cover the initial population
        ctx.emit("done", "init", stop_reason="budget", message=str(exc))
        return PromptOutcome(
            prompt.id, PARTIAL, "budget", ctx.history, ctx.log,
            ctx.budget.used_model_calls, ctx.budget.used_reward_evals,
        )
    except (GeneratorError, RewardError) as exc:
        logger.error("prompt %s failed: %s", prompt.id, exc)
        ctx.emit("error", "final", error=type(exc).__name__, message=str(exc))
        return PromptOutcome(
            prompt.id, FAILED, None, ctx.history, ctx.log,
            ctx.budget.used_model_calls, ctx.budget.used_reward_evals,
            error=f"{type(exc).__name__}: {exc}", fatal=isinstance(exc, AuthError),
        )
    status = PARTIAL if result.exhausted else COMPLETE
    return PromptOutcome(
        prompt.id, status, result.stop_reason, ctx.history, ctx.log,
        ctx.budget.used_model_calls, ctx.budget.used_reward_evals,
    )


def write_outcome(run_dir: Path, outcome: PromptOutcome) -> None:
    outcome.history.write(run_dir / f"history_{outcome.prompt_id}.jsonl")
    lines = [dumps_line(rec) for rec in outcome.log]
    lines.append(dumps_line(outcome.summary()))
    (run_dir / f"log_{outcome.prompt_id}.jsonl").write_text("".join(lines), encoding="utf-8")


def read_summary(run_dir: Path, prompt_id: str) -> Optional[dict]:
    """The closing summary record of a prompt's log, if the prompt finished."""
    path = Path(run_dir) / f"log_{prompt_id}.jsonl"
    if not path.exists() or not (Path(run_dir) / f"history_{prompt_id}.jsonl").exists():
        return None
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        return None
    try:
        last = json.loads(lines[-1])
    except ValueError:
        return None
    return last if last.get("event") == "summary" else None


# -- corpus execution ------------------------------------------------------


@dataclass
class RunReport:
    run_dir: Path
    summaries: list[dict]
    fatal: Optional[str] = None

    @property
    def exit_code(self) -> int:
        if self.fatal:
            return 2
        if any(s["status"] != COMPLETE for s in self.summaries):
            return 3
        return 0


def build_manifest(config: RunConfig, prompts: Sequence[Prompt], summaries: Sequence[dict]) -> dict:
    return {
        "schema": MANIFEST_SCHEMA,
        "version": version_string(),
        "config": config.to_dict(include_output_dir=False),
        "prompts": [p.id for p in prompts],
        "results": {s["prompt_id"]: {k: v for k, v in s.items() if k not in ("event", "prompt_id")} for s in summaries},
        "partial": [s["prompt_id"] for s in summaries if s["status"] != COMPLETE],
        "totals": {
            "prompts": len(prompts),
            "completed": sum(s["status"] == COMPLETE for s in summaries),
            "candidates": sum(s["candidates"] for s in summaries),
            "model_calls": sum(s["model_calls"] for s in summaries),
            "reward_evals": sum(s["reward_evals"] for s in summaries),
        },
    }


def write_json(path: Path, obj: object) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def run_corpus(
    config: RunConfig,
    prompts: Sequence[Prompt],
    run_dir: Path,
    workers: int = 1,
    resume: bool = False,
    generator: Optional[Generator] = None,
) -> RunReport:
    """Run every prompt and write the run directory.

    With ``resume``, prompts whose log already ends in a ``complete`` summary
    are kept as they are. One generator is shared by all workers.
    """
    if workers < 1:
        raise ValidationError("workers must be >= 1")
    if not prompts:
        raise ValidationError("no prompts to run")
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "prompts.jsonl").write_text(
        "".join(dumps_line({"id": p.id, "text": p.text}) for p in prompts), encoding="utf-8"
    )
    summaries: dict[str, dict] = {}
    todo = []
    for p in prompts:
        previous = read_summary(run_dir, p.id) if resume else None
        if previous is not None and previous["status"] == COMPLETE:
            summaries[p.id] = previous
        else:
            todo.append(p)

    generator = generator or build_generator(config)
    fatal = None
    if workers == 1:
        outcomes = map(lambda p: run_prompt(config, p, generator), todo)
        executor = None
    else:
        executor = ThreadPoolExecutor(max_workers=workers)
        outcomes = executor.map(lambda p: run_prompt(config, p, generator), todo)
    try:
        for outcome in outcomes:
            write_outcome(run_dir, outcome)
            summaries[outcome.prompt_id] = outcome.summary()
            if outcome.fatal and fatal is None:
                fatal = outcome.error
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    ordered = [summaries[p.id] for p in prompts]
    write_json(run_dir / "manifest.json", build_manifest(config, prompts, ordered))
    return RunReport(run_dir, ordered, fatal)


# -- export ----------------------------------------------------------------


def export_records(run_dir: Path) -> list[dict]:
    from .analysis import load_histories

    records = []
    for pid, history in load_histories(run_dir).items():
        for c in history:
            d = c.to_dict()
            records.append({"prompt_id": pid, **{k: d[k] for k in EXPORT_COLUMNS[1:]}})
    return records


def export_run(run_dir: Path, fmt: str, out: Optional[Path] = None) -> Path:
    if fmt not in ("csv", "jsonl"):
        raise ValidationError(f"unknown export format {fmt!r}")
    records = export_records(run_dir)
    out = Path(out) if out is not None else Path(run_dir) / f"export.{fmt}"
    if fmt == "jsonl":
        out.write_text("".join(dumps_line(r) for r in records), encoding="utf-8")
        return out
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EXPORT_COLUMNS)
        for r in records:
            writer.writerow([
                r["prompt_id"], r["id"], r["text"],
                "" if r["reward"] is None else repr(r["reward"]),
                json.dumps(r["origin"], separators=(",", ":")),
                r["generation"], r["created_at_call"],
            ])
    return out


def load_export(path: Path) -> dict[str, HistoryBuffer]:
    """Re-import an export (format chosen by suffix) into per-prompt histories."""
    path = Path(path)
    rows: list[dict] = []
    if path.suffix == ".jsonl":
        with path.open(encoding="utf-8") as fh:
            rows = [json.loads(line) for line in fh if line.strip()]
    elif path.suffix == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            for r in csv.DictReader(fh):
                rows.append({
                    "prompt_id": r["prompt_id"],
                    "id": int(r["id"]),
                    "text": r["text"],
                    "reward": float(r["reward"]) if r["reward"] else None,
                    "origin": json.loads(r["origin"]),
                    "generation": int(r["generation"]),
                    "created_at_call": int(r["created_at_call"]),
                })
    else:
        raise ValidationError(f"unknown export format for {path}")
    grouped: dict[str, list[Candidate]] = {}
    for r in rows:
        grouped.setdefault(r["prompt_id"], []).append(Candidate.from_dict(r))
    return {pid: HistoryBuffer.from_candidates(pid, cands) for pid, cands in grouped.items()}

