from __future__ import annotations

import itertools
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from coral.corpus_store import Chunk
from coral.critic import (EMPTY_POOL_TEXT, Critic, Critique, CriterionScores, EvidenceItem, Thresholds, Weights,
                          is_valid, pool_evidence, select_final, serialize_pool, total_score)
from coral.gateway import AgentGateway, RuleBackend, ScriptedBackend, ScriptedExchange

from conftest import RecordingBackend, critic_json

ALL_TUPLES = list(itertools.product(range(6), repeat=4))


def S(*v) -> CriterionScores:
    return CriterionScores(*v)


@pytest.mark.parametrize("scores,want", [((0, 0, 0, 0), 0), ((5, 4, 4, 4), 11), ((2, 2, 2, 2), 5)])
def test_total_score_examples(scores, want):
    assert total_score(S(*scores)) == want


@pytest.mark.parametrize("scores,want", [((2, 2, 2, 2), False), ((3, 2, 2, 2), True), ((5, 5, 5, 1), False)])
def test_validity_examples(scores, want):
    assert is_valid(S(*scores)) is want


def test_total_bounds_and_monotonicity():
    for t in ALL_TUPLES:
        s = total_score(S(*t))
        assert 0 <= s <= Fraction(25, 2)
        for i in range(4):
            if t[i] < 5:
                bumped = list(t)
                bumped[i] += 1
                assert total_score(S(*bumped)) >= s


def test_scores_outside_range_rejected():
    for bad in ((6, 0, 0, 0), (-1, 0, 0, 0), (1.5, 0, 0, 0), (True, 0, 0, 0)):
        with pytest.raises(ValueError):
            S(*bad)


def test_weights_must_be_non_negative():
    with pytest.raises(ValueError):
        Weights(relevance=-1)


def chunk(cid="en:d:00000", text="doc text", lang="en"):
    return Chunk(cid, "d", lang, text, (0, len(text)))


def critic_with(*replies) -> tuple[Critic, RecordingBackend]:
    rec = RecordingBackend(ScriptedBackend([ScriptedExchange("critic", r) for r in replies]))
    return Critic(AgentGateway(rec)), rec


def test_score_passthrough():
    critic, rec = critic_with(critic_json(5, 4, 3, 2, "fine"))
    c = critic.score_document("the query", chunk(), retrieval_rank=2)
    assert c.scores == S(5, 4, 3, 2) and c.text == "fine" and c.retrieval_rank == 2
    assert "the query" in rec.requests[0].user_text and "doc text" in rec.requests[0].user_text


def test_out_of_range_score_clamped_and_flagged():
    critic, _ = critic_with(critic_json(7, 4, 4, 4))
    c = critic.score_document("q", chunk())
    assert c.scores.relevance == 5 and "score_clamped" in c.flags


def test_string_and_float_scores_coerced():
    reply = json.dumps({"scores": {"relevance": "4", "usefulness": 3.6, "clarity_specificity": 2,
                                   "compatibility": -2}, "critique": "x"})
    critic, _ = critic_with(reply)
    c = critic.score_document("q", chunk())
    assert c.scores == S(4, 4, 2, 0) and "score_clamped" in c.flags


def test_garbage_three_times_scores_zero():
    critic, rec = critic_with("garbage", "more garbage", '{"scores": "nope"}')
    c = critic.score_document("q", chunk())
    assert c.scores == S(0, 0, 0, 0) and c.text == "unparsable"
    assert not is_valid(c.scores)
    assert len(rec.requests) == 3


def crit(cid, scores, text="t"):
    return Critique(S(*scores), text, cid, "q", cid.split(":")[0], 1, f"text of {cid}")


def test_pool_from_empty():
    assert len(pool_evidence([], [crit("en:a:00000", (3, 2, 2, 2))], 1)) == 1


def test_dedup_keeps_higher_total():
    pool = pool_evidence([], [crit("en:a:00000", (3, 2, 2, 2))], 1)
    pool = pool_evidence(pool, [crit("en:a:00000", (5, 2, 2, 2))], 2)
    assert len(pool) == 1 and pool[0].s_tot == 8 and pool[0].found_iteration == 2


def test_dedup_tie_keeps_earlier():
    pool = pool_evidence([], [crit("en:a:00000", (4, 2, 2, 2), "first")], 1)
    pool = pool_evidence(pool, [crit("en:a:00000", (4, 2, 2, 2), "second")], 2)
    assert pool[0].critique == "first" and pool[0].found_iteration == 1


def test_dedup_lower_total_does_not_replace():
    pool = pool_evidence([], [crit("en:a:00000", (5, 2, 2, 2))], 1)
    pool = pool_evidence(pool, [crit("en:a:00000", (3, 2, 2, 2))], 2)
    assert pool[0].s_tot == 8


def test_invalid_batch_leaves_pool_unchanged():
    pool = pool_evidence([], [crit("en:a:00000", (5, 5, 5, 5))], 1)
    assert pool_evidence(pool, [crit("en:b:00000", (2, 2, 2, 2)), crit("en:c:00000", (5, 5, 5, 1))], 2) == pool


def item(cid, scores, it=1):
    s = S(*scores)
    return EvidenceItem(cid, "en", "x", s, total_score(s), "", it, 1)


def test_select_final_small_pool():
    pool = [item(f"en:{i}:00000", (3, 2, 2, 2)) for i in range(3)]
    assert len(select_final(pool, 5)) == 3


def test_select_final_seven_items():
    pool = [item(f"en:{i}:00000", (i % 4 + 2, 2, 2, 3)) for i in range(7)]
    out = select_final(pool, 5)
    assert len(out) == 5
    assert all(a.s_tot >= b.s_tot for a, b in zip(out, out[1:]))


def test_relevance_breaks_total_ties():
    a = item("en:a:00000", (4, 2, 2, 4))  # 8.0
    b = item("en:b:00000", (5, 2, 2, 2))  # 8.0
    assert [e.chunk_id for e in select_final([a, b], 5)] == ["en:b:00000", "en:a:00000"]


def test_serialize_pool():
    assert serialize_pool([]) == EMPTY_POOL_TEXT
    text = serialize_pool([item("en:a:00000", (5, 4, 4, 4))])
    assert text.startswith("[1]\ncontent: x\n") and "s_tot=11" in text


def sufficiency_critic(reply):
    rec = RecordingBackend(RuleBackend({"sufficiency": lambda req: reply}))
    return Critic(AgentGateway(rec)), rec


def test_sufficiency_true():
    critic, _ = sufficiency_critic('{"enough_documents": true, "reason": "covers all"}')
    d = critic.judge_sufficiency("q", [])
    assert d.enough and d.reason == "covers all"


def test_sufficiency_false_reason_verbatim():
    reason = "Missing the 'regional' angle;\nneeds Sundanese sources."
    critic, rec = sufficiency_critic(json.dumps({"enough_documents": False, "reason": reason}))
    d = critic.judge_sufficiency("original q", [item("en:a:00000", (5, 4, 4, 4))])
    assert not d.enough and d.reason == reason
    assert "original q" in rec.requests[0].user_text


def test_sufficiency_empty_reason_gets_default():
    critic, _ = sufficiency_critic('{"enough_documents": false, "reason": ""}')
    d = critic.judge_sufficiency("q", [])
    assert not d.enough and d.reason.strip() and "empty_reason" in d.flags


def test_sufficiency_unparsable_stops():
    critic, _ = sufficiency_critic("I think so?")
    d = critic.judge_sufficiency("q", [])
    assert d.enough and "sufficiency_unparsable" in d.flags


def test_thresholds_are_configurable():
    assert not is_valid(S(3, 2, 2, 2), Thresholds(total_min=7))
    assert is_valid(S(3, 2, 2, 2), Thresholds())


score_tuple = st.tuples(*[st.integers(0, 5)] * 4)
critiques = st.lists(st.tuples(st.sampled_from([f"en:{c}:00000" for c in "abcdef"]), score_tuple), max_size=10)


@settings(max_examples=200, deadline=None)
@given(batches=st.lists(critiques, min_size=1, max_size=4), n=st.integers(1, 8))
def test_pool_properties(batches, n):
    pool = []
    for it, batch in enumerate(batches, start=1):
        cs = [crit(cid, s) for cid, s in batch]
        pool = pool_evidence(pool, cs, it)
        assert pool_evidence(pool, cs, it) == pool  # idempotent
    assert len({e.chunk_id for e in pool}) == len(pool)
    assert all(is_valid(e.scores) for e in pool)
    final = select_final(pool, n)
    assert final == pool[:len(final)] and len(final) <= n
    # every pooled chunk carries the best total it was ever given
    best = {}
    for batch in batches:
        for cid, s in batch:
            if is_valid(S(*s)):
                best[cid] = max(best.get(cid, 0), total_score(S(*s)))
    assert {e.chunk_id: e.s_tot for e in pool} == best
