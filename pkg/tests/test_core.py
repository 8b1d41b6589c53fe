from __future__ import annotations

import json
import threading

import pytest

from memetron.core import (
    Budget,
    Candidate,
    HistoryBuffer,
    Origin,
    Prompt,
    SamplingParams,
    TemperatureSchedule,
    argmax_reward,
    best_of,
)
from memetron.errors import (
    BudgetExceeded,
    DanglingParentError,
    EmptyHistoryError,
    NonFiniteRewardError,
    ValidationError,
)


def test_prompt_requires_id_and_text():
    with pytest.raises(ValidationError):
        Prompt("", "x")
    with pytest.raises(ValidationError):
        Prompt("a", "")


def test_sampling_defaults():
    p = SamplingParams()
    assert (p.temperature, p.top_k, p.top_p, p.min_p, p.max_tokens) == (1.5, 50, 1.0, 0.1, 4098)


@pytest.mark.parametrize(
    "kw", [{"temperature": -1}, {"top_k": -1}, {"top_p": 0}, {"min_p": 1.5}, {"max_tokens": 0}, {"seed": -1}]
)
def test_sampling_validation(kw):
    with pytest.raises(ValidationError):
        SamplingParams(**kw)


def test_origin_parent_arity():
    with pytest.raises(ValidationError):
        Origin("crossover", (1,))
    with pytest.raises(ValidationError):
        Origin("mutation")


def test_candidate_rejects_non_finite_reward():
    with pytest.raises(NonFiniteRewardError):
        Candidate("x", float("nan"), Origin.initial(0))
    with pytest.raises(NonFiniteRewardError):
        Candidate("x", float("inf"), Origin.initial(0))


def test_candidate_serialisation_fields():
    c = Candidate("héllo", 1.5, Origin.crossover(0, 1, 2), generation=1, created_at_call=9, id=2)
    d = c.to_dict()
    assert set(d) == {"id", "text", "reward", "origin", "generation", "created_at_call"}
    assert set(d["origin"]) >= {"kind", "parents", "sample_index", "step"}
    assert Candidate.from_dict(json.loads(json.dumps(d))) == c


def test_history_assigns_ids_and_checks_parents():
    h = HistoryBuffer("q")
    assert h.record(Candidate("a", 1.0, Origin.initial(0))) == 0
    assert h.record(Candidate("b", 2.0, Origin.initial(1))) == 1
    assert h.add(Candidate("c", 0.0, Origin.crossover(0, 1, 0))).id == 2
    with pytest.raises(DanglingParentError):
        h.record(Candidate("d", 0.0, Origin.refinement(7, 1, 0)))
    assert len(h) == 3


def test_history_refuses_uncharged_calls():
    budget = Budget(10, 10)
    h = HistoryBuffer("q", budget)
    with pytest.raises(BudgetExceeded):
        h.record(Candidate("a", 1.0, Origin.initial(0), created_at_call=1))
    budget.charge_model_calls(1)
    h.record(Candidate("a", 1.0, Origin.initial(0), created_at_call=1))


def test_history_round_trip(tmp_path):
    h = HistoryBuffer("q")
    h.add(Candidate("a\nb", 1.0, Origin.initial(0)))
    h.add(Candidate("c", None, Origin.refinement(0, 1, 0, accepted=False), generation=1))
    path = tmp_path / "history_q.jsonl"
    h.write(path)
    back = HistoryBuffer.read(path)
    assert back.prompt_id == "q"
    assert back.candidates == h.candidates


def test_history_read_reports_line(tmp_path):
    path = tmp_path / "history_q.jsonl"
    good = json.dumps(Candidate("a", 1.0, Origin.initial(0), id=0).to_dict())
    path.write_text(good + "\n{broken\n", encoding="utf-8")
    with pytest.raises(ValidationError, match=r"history_q.jsonl:2"):
        HistoryBuffer.read(path)


def test_eligible_excludes_rejected_and_unscored():
    h = HistoryBuffer("q")
    h.add(Candidate("a", 1.0, Origin.initial(0)))
    h.add(Candidate("b", 5.0, Origin.refinement(0, 1, 0, accepted=False)))
    h.add(Candidate("c", None, Origin.initial(1)))
    h.add(Candidate("d", 2.0, Origin.refinement(0, 2, 0, accepted=True)))
    assert [c.id for c in h.eligible()] == [0, 3]
    assert best_of(h).id == 3


def test_best_of_empty():
    with pytest.raises(EmptyHistoryError):
        best_of(HistoryBuffer("q"))


def test_argmax_ties_to_lowest_id():
    cands = [Candidate(t, 1.0, Origin.initial(i), id=i) for i, t in enumerate("abc")]
    assert argmax_reward(reversed(cands)).id == 0
    assert argmax_reward([]) is None


def test_budget_refuses_before_spending():
    b = Budget(5, 3)
    b.charge_model_calls(4)
    with pytest.raises(BudgetExceeded):
        b.charge_model_calls(2)
    assert b.used_model_calls == 4
    b.require(model_calls=1, reward_evals=3)
    with pytest.raises(BudgetExceeded):
        b.require(reward_evals=4)


def test_child_budget_charges_chain():
    parent = Budget(10, 10)
    child = parent.child(4, 4)
    child.charge_model_calls(3)
    assert parent.used_model_calls == 3
    with pytest.raises(BudgetExceeded):
        child.charge_model_calls(2)
    parent.charge_model_calls(7)
    assert child.remaining_model_calls == 0  # parent is exhausted too


def test_budget_thread_safety():
    b = Budget(1000, 1000)

    def spend():
        for _ in range(400):
            try:
                b.charge_model_calls(1)
            except BudgetExceeded:
                pass

    threads = [threading.Thread(target=spend) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert b.used_model_calls == 1000


def test_temperature_schedule():
    s = TemperatureSchedule(t0=2.0, alpha=0.5, t_floor=0.1)
    assert [s.at(t) for t in range(6)] == [2.0, 1.0, 0.5, 0.25, 0.125, 0.1]
    for bad in ({"t0": 0}, {"alpha": 1.0}, {"alpha": 0}, {"t_floor": -1}):
        with pytest.raises(ValidationError):
            TemperatureSchedule(**bad)
