"""Generation-versus-generation comparison over persisted run histories.

Generations are labelled from 1: label ``k`` holds the lineage
representatives of candidates with ``generation == k - 1``. A lineage root
is any non-refinement candidate (initial response or crossover offspring);
its representative is the best of the root and its accepted refinements,
which is what replaced the offspring in the population.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

from .core import REFINEMENT, Candidate, HistoryBuffer, Prompt, argmax_reward
from .errors import DegenerateSampleError, MissingGenerationError, StatsError, ValidationError
from .reward import RewardBackend
from .stats import TWO_SIDED, bh_fdr, cliffs_delta, cohens_d, mann_whitney_u, shapiro_wilk, welch_t

SUMMARY_SCHEMA = "memetron.summary/1"
WELCH = "welch"
MANN_WHITNEY = "mann_whitney"
NORMALITY_ALPHA = 0.05

REPORT_COLUMNS = (
    "question_id", "gen_a", "gen_b", "test_used", "statistic", "p_raw", "p_adjusted",
    "mean_diff", "cohens_d", "cliffs_delta", "significant_raw", "significant_fdr",
)


@dataclass
class ComparisonResult:
    """One question's comparison. ``mean_diff`` is ``mean(gen_b) - mean(gen_a)``
    while the effect sizes are oriented ``a`` versus ``b``, so a later, better
    ``gen_b`` gives a positive difference and negative effect sizes.
    ``cohens_d`` is ``None`` when both samples are constant."""

    question_id: str
    gen_a: int
    gen_b: int
    test_used: str
    statistic: float
    p_raw: float
    p_adjusted: float
    mean_diff: float
    cohens_d: Optional[float]
    cliffs_delta: float
    significant_raw: bool
    significant_fdr: bool


def lineage_representatives(history: HistoryBuffer) -> list[Candidate]:
    """One candidate per lineage root, in root order."""
    root_of: dict[int, int] = {}
    members: dict[int, list[Candidate]] = {}
    for c in history:
        if c.origin.kind != REFINEMENT:
            root_of[c.id] = c.id
            members[c.id] = [c]
            continue
        root = root_of[c.origin.parents[0]]
        root_of[c.id] = root
        if not c.rejected:
            members[root].append(c)
    return [argmax_reward(group) or group[0] for group in members.values()]


def generation_groups(history: HistoryBuffer) -> dict[int, list[Candidate]]:
    groups: dict[int, list[Candidate]] = {}
    for rep in lineage_representatives(history):
        groups.setdefault(rep.generation + 1, []).append(rep)
    return groups


def rerank_scores(prompt: Prompt, texts: Sequence[str], backend: RewardBackend) -> list[float]:
    """Set-relative scores: mean preference of each response over every other."""
    n = len(texts)
    if n < 2:
        return [0.0] * n
    totals = [0.0] * n
    for j, anchor in enumerate(texts):
        others = [i for i in range(n) if i != j]
        scores = backend.score_batch(prompt, [texts[i] for i in others], anchor)
        for i, s in zip(others, scores):
            totals[i] += float(s)
    return [t / (n - 1) for t in totals]


def _looks_normal(sample: Sequence[float]) -> bool:
    try:
        return shapiro_wilk(sample)[1] > NORMALITY_ALPHA
    except DegenerateSampleError:
        return False


def compare_question(
    question_id: str, a: Sequence[float], b: Sequence[float], gen_a: int, gen_b: int, alternative: str = TWO_SIDED
) -> ComparisonResult:
    """Unadjusted comparison; ``p_adjusted`` and ``significant_*`` are filled in later."""
    if len(a) < 3 or len(b) < 3:
        raise StatsError(f"question {question_id}: need at least 3 scores per generation")
    if _looks_normal(a) and _looks_normal(b):
        test = WELCH
        statistic, _df, p = welch_t(a, b, alternative)
    else:
        test = MANN_WHITNEY
        statistic, p = mann_whitney_u(a, b, alternative)
    try:
        d: Optional[float] = cohens_d(a, b)
    except StatsError:
        d = None
    return ComparisonResult(
        question_id, gen_a, gen_b, test, statistic, p, p,
        statistics.fmean(b) - statistics.fmean(a), d, cliffs_delta(a, b), False, False,
    )


def compare_samples(
    samples: Mapping[str, tuple[Sequence[float], Sequence[float]]],
    gen_a: int,
    gen_b: int,
    q: float = 0.05,
    alpha: float = 0.05,
    alternative: str = TWO_SIDED,
) -> tuple[list[ComparisonResult], dict]:
    results = [
        compare_question(qid, a, b, gen_a, gen_b, alternative) for qid, (a, b) in samples.items()
    ]
    adjusted, reject = bh_fdr([r.p_raw for r in results], q) if results else ([], [])
    for r, p_adj, rej in zip(results, adjusted, reject):
        r.p_adjusted = p_adj
        r.significant_raw = r.p_raw <= alpha
        r.significant_fdr = rej
    all_a = [v for a, _ in samples.values() for v in a]
    all_b = [v for _, b in samples.values() for v in b]
    return results, summarize(results, gen_a, gen_b, all_a, all_b)


def summarize(
    results: Sequence[ComparisonResult], gen_a: int, gen_b: int, all_a: Sequence[float], all_b: Sequence[float]
) -> dict:
    diffs = [r.mean_diff for r in results]
    ds = [r.cohens_d for r in results if r.cohens_d is not None]
    try:
        pooled_d: Optional[float] = cohens_d(all_a, all_b)
    except StatsError:
        pooled_d = None
    return {
        "comparison": f"Gen {gen_a} vs {gen_b}",
        "gen_a": gen_a,
        "gen_b": gen_b,
        "questions": len(results),
        "mean_diff": statistics.fmean(diffs) if diffs else None,
        "mean_diff_sd": statistics.stdev(diffs) if len(diffs) > 1 else None,
        "welch": sum(r.test_used == WELCH for r in results),
        "mann_whitney": sum(r.test_used == MANN_WHITNEY for r in results),
        "significant_raw": sum(r.significant_raw for r in results),
        "significant_fdr": sum(r.significant_fdr for r in results),
        "cohens_d_mean": statistics.fmean(ds) if ds else None,
        "cohens_d_undefined": len(results) - len(ds),
        "cliffs_delta_mean": statistics.fmean(r.cliffs_delta for r in results) if results else None,
        "cohens_d_pooled": pooled_d,
        "cliffs_delta_pooled": cliffs_delta(all_a, all_b) if all_a and all_b else None,
    }


# -- run directories -----------------------------------------------------------


def load_histories(run_dir: Path) -> dict[str, HistoryBuffer]:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        ids = json.loads(manifest_path.read_text(encoding="utf-8"))["prompts"]
        paths = [(pid, run_dir / f"history_{pid}.jsonl") for pid in ids]
    else:
        paths = [(p.stem.removeprefix("history_"), p) for p in sorted(run_dir.glob("history_*.jsonl"))]
    histories = {}
    for pid, path in paths:
        if path.exists():
            histories[pid] = HistoryBuffer.read(path, pid)
    if not histories:
        raise ValidationError(f"{run_dir} holds no history files")
    return histories


def generation_scores(
    histories: Mapping[str, HistoryBuffer],
    prompts: Optional[Mapping[str, Prompt]] = None,
    rerank_backend: Optional[RewardBackend] = None,
) -> dict[str, dict[int, list[float]]]:
    """Per question and generation label, the scores used for comparison.

    Raw rewards by default; with ``rerank_backend`` the representatives of a
    question are rescored jointly with :func:`rerank_scores`.
    """
    out: dict[str, dict[int, list[float]]] = {}
    for pid, history in histories.items():
        groups = generation_groups(history)
        if rerank_backend is None:
            out[pid] = {g: [c.reward for c in reps] for g, reps in groups.items()}
            continue
        prompt = (prompts or {}).get(pid) or Prompt(pid, pid)
        flat = [(g, c) for g, reps in sorted(groups.items()) for c in reps]
        scores = rerank_scores(prompt, [c.text for _, c in flat], rerank_backend)
        grouped: dict[int, list[float]] = {}
        for (g, _), s in zip(flat, scores):
            grouped.setdefault(g, []).append(s)
        out[pid] = grouped
    return out


def default_comparisons(scores: Mapping[str, Mapping[int, Sequence[float]]]) -> list[tuple[int, int]]:
    """Final generation against each earlier one."""
    labels = sorted({g for per_q in scores.values() for g in per_q})
    if len(labels) < 2:
        raise MissingGenerationError("need at least two generations to compare")
    final = labels[-1]
    return [(g, final) for g in labels[:-1]]


def compare_generations(
    scores: Mapping[str, Mapping[int, Sequence[float]]],
    gen_a: int,
    gen_b: int,
    q: float = 0.05,
    alpha: float = 0.05,
    alternative: str = TWO_SIDED,
) -> tuple[list[ComparisonResult], dict]:
    samples = {}
    for qid, per_gen in scores.items():
        for g in (gen_a, gen_b):
            if g not in per_gen:
                raise MissingGenerationError(f"question {qid} has no generation {g}")
        samples[qid] = (per_gen[gen_a], per_gen[gen_b])
    return compare_samples(samples, gen_a, gen_b, q, alpha, alternative)


def _csv_value(v: object) -> object:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def write_report(out_dir: Path, comparisons: Sequence[tuple[list[ComparisonResult], dict]], q: float, alpha: float) -> None:
    out_dir = Path(out_dir)
    with (out_dir / "report.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for results, _ in comparisons:
            for r in results:
                row = asdict(r)
                writer.writerow([_csv_value(row[c]) for c in REPORT_COLUMNS])
    summary = {
        "schema": SUMMARY_SCHEMA,
        "fdr_q": q,
        "alpha": alpha,
        "normality_alpha": NORMALITY_ALPHA,
        "comparisons": [s for _, s in comparisons],
    }
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_report(path: Path) -> list[dict]:
    rows = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            rows.append(row)
    return rows

