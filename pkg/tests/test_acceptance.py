"""Acceptance criteria, one group per criterion.

Each test carries a ``criterion`` marker; ``conftest.py`` prints one
PASS/FAIL line per criterion at the end of the run.
"""

from __future__ import annotations

import copy
import json
import math
import random
import time
from collections import Counter
from itertools import combinations
from pathlib import Path

import pytest

from memetron import cli
from memetron.annetron import AnnetronConfig, metropolis_accept, run_annetron_from_scratch
from memetron.config import parse_config
from memetron.core import Candidate, HistoryBuffer, Origin, Prompt
from memetron.genetron import GenetronConfig, elitism, run_genetron, tournament_select
from memetron.memetron import MemetronConfig, run_memetron
from memetron.prompts import render_fusion, render_refine
from memetron.rng import SplitMix64
from memetron.runner import run_corpus
from memetron.stats import GREATER, LESS, TWO_SIDED, bh_fdr, cliffs_delta, mann_whitney_u, shapiro_wilk

from support import checksum, generate_calls, make_ctx

GOLDEN = Path(__file__).parent / "golden"


def criterion(number: int, title: str):
    return pytest.mark.criterion(number, title)


# -- 1. elitism ------------------------------------------------------------


def _random_history(rng: random.Random) -> tuple[HistoryBuffer, int]:
    size = rng.randint(1, 20)
    h = HistoryBuffer("q")
    for i in range(size):
        reward = float(rng.randint(-5, 5))  # small range forces ties
        if i > 0 and rng.random() < 0.25:
            origin = Origin.refinement(rng.randrange(i), 1, 0, accepted=rng.random() < 0.5)
        else:
            origin = Origin.initial(i)
        h.record(Candidate(f"t{i}", reward, origin))
    eligible = len(h.eligible())
    n = rng.randint(1, min(8, eligible)) if eligible else 1
    return h, n


def _brute_force_elite(history: HistoryBuffer, n: int) -> list[int]:
    pool = [c for c in history if c.origin.accepted is not False]
    best_sum, best_ids = -math.inf, None
    for subset in combinations(pool, n):
        s = sum(c.reward for c in subset)
        ids = tuple(sorted(c.id for c in subset))
        if s > best_sum or (s == best_sum and ids < best_ids):
            best_sum, best_ids = s, ids
    return list(best_ids)


@criterion(1, "elitism equals brute-force subset enumeration")
def test_elitism_matches_brute_force():
    rng = random.Random(20240601)
    start = time.perf_counter()
    checked = 0
    while checked < 200:
        history, n = _random_history(rng)
        if len(history.eligible()) < n:
            continue
        got = sorted(c.id for c in elitism(history, n))
        assert got == _brute_force_elite(history, n)
        checked += 1
    assert time.perf_counter() - start < 10


# -- 2. Metropolis ---------------------------------------------------------


@criterion(2, "Metropolis acceptance calibrated to exp(dr/T)")
@pytest.mark.parametrize("delta_r,T", [(-0.5, 1.0), (-1.0, 1.0), (-2.0, 0.5), (-0.1, 0.05)])
def test_metropolis_calibration(delta_r, T):
    trials = 100_000
    rng = SplitMix64.from_key(7, "metropolis", delta_r, T)
    start = time.perf_counter()
    accepted = sum(metropolis_accept(delta_r, T, rng) for _ in range(trials))
    assert time.perf_counter() - start < 5
    p = math.exp(delta_r / T)
    sigma = math.sqrt(p * (1 - p) / trials)
    assert abs(accepted / trials - p) <= 3 * sigma


@criterion(2, "Metropolis acceptance calibrated to exp(dr/T)")
@pytest.mark.parametrize("delta_r", [0.0, 1e-12, 0.3, 5.0])
def test_metropolis_improvement_always_accepted(delta_r):
    rng = SplitMix64(3)
    assert all(metropolis_accept(delta_r, T, rng) for T in (1e-6, 0.05, 1.0, 100.0) for _ in range(1000))


# -- 3. tournaments --------------------------------------------------------


@criterion(3, "binary tournament correctness and selection frequencies")
def test_tournament_winner_never_worse():
    rng = random.Random(11)
    for trial in range(100_000):
        size = rng.randint(2, 6)
        population = [Candidate("x", float(rng.randint(0, 4)), Origin.initial(i), id=i) for i in range(size)]
        stream = SplitMix64(trial)
        i, j = copy.copy(stream).sample2(size)
        winner = tournament_select(population, stream)
        assert winner.id in (i, j)
        loser = population[j] if winner.id == i else population[i]
        assert winner.reward >= loser.reward


def _exact_frequencies(rewards: list[float]) -> list[float]:
    """Enumerate every ordered entrant pair; ties go to the lower id."""
    n = len(rewards)
    wins = [0] * n
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    for i, j in pairs:
        w = i if (rewards[i], -i) > (rewards[j], -j) else j
        wins[w] += 1
    return [w / len(pairs) for w in wins]


@criterion(3, "binary tournament correctness and selection frequencies")
@pytest.mark.parametrize("rewards", [[3.0, 2.0, 1.0], [1.0, 1.0, 0.0], [0.0, 5.0, 2.0], [2.0, 2.0, 2.0]])
def test_tournament_frequencies_match_enumeration(rewards):
    population = [Candidate("x", r, Origin.initial(i), id=i) for i, r in enumerate(rewards)]
    trials = 60_000
    rng = SplitMix64.from_key("tournament-frequencies", *rewards)
    counts = Counter(tournament_select(population, rng).id for _ in range(trials))
    for cid, p in enumerate(_exact_frequencies(rewards)):
        if p == 0:
            assert counts[cid] == 0
            continue
        sigma = math.sqrt(p * (1 - p) / trials)
        assert abs(counts[cid] / trials - p) <= 3 * sigma


# -- 4. monotone best-so-far -----------------------------------------------


SMALL_G = GenetronConfig(population_size=8, best_of_n=3, max_generations=3, patience=3)
SMALL_A = AnnetronConfig(steps=7, patience=3, best_of_n=3)


def _run(algorithm: str, seed: int):
    ctx = make_ctx(seed=seed, algorithm=algorithm)
    if algorithm == "genetron":
        return run_genetron(ctx, SMALL_G)
    if algorithm == "annetron":
        return run_annetron_from_scratch(ctx, SMALL_A)
    return run_memetron(ctx, MemetronConfig(SMALL_G, SMALL_A))


@criterion(4, "monotone best-so-far over history")
@pytest.mark.parametrize("algorithm", ["genetron", "annetron", "memetron"])
def test_best_so_far_is_monotone(algorithm):
    start = time.perf_counter()
    for seed in range(50):
        result = _run(algorithm, seed)
        running = -math.inf
        for c in result.history:
            if c.rejected:
                continue
            new = max(running, c.reward)
            assert new >= running
            running = new
        assert result.best.reward == running
        assert all(b >= a for a, b in zip(result.trace, result.trace[1:]))
        generation_bests = [r["best"] for r in result.log if r["event"] == "generation"]
        assert all(b >= a for a, b in zip(generation_bests, generation_bests[1:]))
    assert time.perf_counter() - start < 20


# -- 5. degenerate reductions ----------------------------------------------


@criterion(5, "degenerate hybrids reduce to GENETRON and ANNETRON")
@pytest.mark.parametrize("seed", range(10))
def test_memetron_without_annealing_is_genetron(seed):
    g = GenetronConfig()
    genetron = run_genetron(make_ctx(seed=seed), g)
    memetron = run_memetron(make_ctx(seed=seed), MemetronConfig(g, AnnetronConfig(steps=0)))
    assert checksum(memetron.history) == checksum(genetron.history)
    assert memetron.trace == genetron.trace


@criterion(5, "degenerate hybrids reduce to GENETRON and ANNETRON")
@pytest.mark.parametrize("seed", range(10))
def test_memetron_without_generations_is_annetron(seed):
    a = AnnetronConfig(steps=12, patience=4)
    annetron = run_annetron_from_scratch(make_ctx(seed=seed), a)
    memetron = run_memetron(
        make_ctx(seed=seed), MemetronConfig(GenetronConfig(population_size=1, max_generations=0), a)
    )
    assert checksum(memetron.history) == checksum(annetron.history)
    assert memetron.best.id == annetron.best.id


# -- 6. desk-scale reproduction --------------------------------------------


REPRO_CONFIG = {
    "schema": "memetron.run/1",
    "algorithm": "memetron",
    "backend": "simulated",
    "simulated": {"alphabet": "ACGT", "length": 24},
    "reward": {"kind": "scalar", "builtin": "target_match"},
    "genetron": {"population_size": 16, "best_of_n": 3, "max_generations": 3, "patience": 3},
    "annetron": {"steps": 7, "patience": 3, "best_of_n": 3},
    "seed": 2024,
}


@criterion(6, "qualitative generation comparison at desk scale")
def test_desk_scale_generation_comparison(tmp_path):
    start = time.perf_counter()
    prompts = [Prompt(f"q{i:03d}", f"synthetic question {i}") for i in range(100)]
    run_dir = tmp_path / "run"
    report = run_corpus(parse_config(REPRO_CONFIG), prompts, run_dir, workers=4)
    assert report.exit_code == 0
    assert cli.main(["analyze", str(run_dir)]) == 0
    summary = json.loads((run_dir / "summary.json").read_text())
    rows = {(s["gen_a"], s["gen_b"]): s for s in summary["comparisons"]}
    first, last = rows[(1, 4)], rows[(3, 4)]
    assert first["mean_diff"] > 0
    assert first["significant_fdr"] >= 80
    assert last["mean_diff"] < first["mean_diff"]
    assert time.perf_counter() - start < 300


# -- 7. statistics oracles -------------------------------------------------


def _enumerated_mw_p(a_ranks: tuple[int, ...], n_total: int, alternative: str) -> float:
    m = len(a_ranks)
    u_obs = sum(a_ranks) - m * (m + 1) / 2
    us = [sum(c) - m * (m + 1) / 2 for c in combinations(range(1, n_total + 1), m)]
    le = sum(u <= u_obs for u in us) / len(us)
    ge = sum(u >= u_obs for u in us) / len(us)
    if alternative == LESS:
        return le
    if alternative == GREATER:
        return ge
    return min(1.0, 2 * min(le, ge))


@criterion(7, "statistics oracles")
def test_mann_whitney_exact_matches_enumeration():
    checked = 0
    for n_total in range(2, 11):
        for m in range(1, n_total):
            for a_ranks in combinations(range(1, n_total + 1), m):
                a = [float(r) for r in a_ranks]
                b = [float(r) for r in range(1, n_total + 1) if r not in a_ranks]
                for alt in (TWO_SIDED, LESS, GREATER):
                    _, p = mann_whitney_u(a, b, alt)
                    assert p == pytest.approx(_enumerated_mw_p(a_ranks, n_total, alt), abs=1e-12)
                checked += 1
    assert checked == sum(math.comb(n, m) for n in range(2, 11) for m in range(1, n))


@criterion(7, "statistics oracles")
@pytest.mark.parametrize(
    "p,q,adjusted,reject",
    [
        ([0.005, 0.01, 0.03, 0.04], 0.05, [0.02, 0.02, 0.04, 0.04], [True] * 4),
        ([0.04], 0.05, [0.04], [True]),
        ([1.0, 1.0, 1.0], 0.05, [1.0, 1.0, 1.0], [False] * 3),
        ([0.01, 0.04, 0.03, 0.2], 0.05, [0.04, 0.16 / 3, 0.16 / 3, 0.2], [True, False, False, False]),
        ([0.03, 0.01, 0.02], 0.05, [0.03, 0.03, 0.03], [True] * 3),
    ],
)
def test_bh_fixtures(p, q, adjusted, reject):
    got_adj, got_rej = bh_fdr(p, q)
    assert got_adj == pytest.approx(adjusted, abs=1e-12)
    assert got_rej == reject


@criterion(7, "statistics oracles")
def test_cliffs_delta_matches_pairwise_enumeration():
    rng = random.Random(5)
    for _ in range(500):
        a = [rng.randint(0, 6) for _ in range(rng.randint(1, 12))]
        b = [rng.randint(0, 6) for _ in range(rng.randint(1, 12))]
        expected = sum((x > y) - (x < y) for x in a for y in b) / (len(a) * len(b))
        assert cliffs_delta(a, b) == pytest.approx(expected, abs=1e-15)


@criterion(7, "statistics oracles")
def test_shapiro_wilk_matches_reference():
    scipy_stats = pytest.importorskip("scipy.stats")
    rng = random.Random(99)
    samples = [[1.0, 2.0, 3.0], [2.0, 1.0, 5.0, 9.0], list(map(float, range(1, 11)))]
    while len(samples) < 20:
        n = rng.choice([5, 8, 11, 12, 20, 37, 50, 120, 500])
        kind = len(samples) % 3
        if kind == 0:
            samples.append([rng.gauss(0, 1) for _ in range(n)])
        elif kind == 1:
            samples.append([rng.expovariate(1.0) for _ in range(n)])
        else:
            samples.append([rng.uniform(-1, 1) for _ in range(n)])
    for s in samples:
        w, _ = shapiro_wilk(s)
        assert abs(w - scipy_stats.shapiro(s).statistic) < 1e-3


# -- 8. determinism and accounting ------------------------------------------


def _snapshot(run_dir: Path) -> dict[str, bytes]:
    return {p.name: p.read_bytes() for p in sorted(run_dir.iterdir())}


@criterion(8, "byte-identical runs and exact call accounting")
@pytest.mark.parametrize("algorithm", ["genetron", "annetron", "memetron", "best_of_n_baseline"])
def test_runs_are_byte_identical(tmp_path, algorithm):
    config = parse_config({**REPRO_CONFIG, "algorithm": algorithm, "genetron": {"population_size": 8}})
    prompts = [Prompt(f"p{i}", f"question {i}") for i in range(6)]
    snapshots = []
    for name, workers in (("a", 1), ("b", 1), ("c", 4)):
        run_corpus(config, prompts, tmp_path / name, workers=workers)
        snapshots.append(_snapshot(tmp_path / name))
    assert snapshots[0] == snapshots[1] == snapshots[2]


@criterion(8, "byte-identical runs and exact call accounting")
@pytest.mark.parametrize("max_calls", [40, 150, 100_000])
def test_call_accounting(tmp_path, max_calls):
    config = parse_config({**REPRO_CONFIG, "budget": {"max_model_calls": max_calls, "max_reward_evals": 100_000}})
    prompts = [Prompt(f"p{i}", f"question {i}") for i in range(3)]
    report = run_corpus(config, prompts, tmp_path / "run", workers=2)
    manifest = json.loads((tmp_path / "run" / "manifest.json").read_text())
    total = 0
    for p in prompts:
        lines = [json.loads(x) for x in (tmp_path / "run" / f"log_{p.id}.jsonl").read_text().splitlines()]
        summary = lines[-1]
        assert generate_calls(lines) == summary["model_calls"] <= max_calls
        total += summary["model_calls"]
    assert manifest["totals"]["model_calls"] == total
    assert report.exit_code == (0 if max_calls == 100_000 else 3)


# -- 9. prompt templates ---------------------------------------------------


@criterion(9, "rendered prompts match golden transcriptions")
def test_fusion_prompt_matches_golden():
    a = Candidate("A", 0.0, Origin.initial(0), id=0)
    b = Candidate("B", 0.0, Origin.initial(1), id=1)
    rendered = render_fusion(Prompt("q", "Q"), a, b)
    assert rendered + "\n" == (GOLDEN / "fusion_q_a_b.txt").read_text(encoding="utf-8")


@criterion(9, "rendered prompts match golden transcriptions")
def test_refine_prompt_matches_golden():
    rendered = render_refine(Prompt("q", "Q"), Candidate("A", 0.0, Origin.initial(0), id=0))
    assert rendered + "\n" == (GOLDEN / "refine_q_a.txt").read_text(encoding="utf-8")
