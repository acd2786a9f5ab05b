import itertools
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcakit.agent import Hypothesis, RunOutcome
from rcakit.kgraph import Entity, EntitySchema, KnowledgeGraph, PathStep, PropagationPath, Relationship
from rcakit.metrics import (
    CorrectnessRecord,
    Measure,
    accuracy_at_k,
    avg_at_K,
    evaluate_hypotheses,
    holdout_delta,
    per_sample_score,
    random_guessing_baseline,
    record_from_dict,
    record_to_dict,
    wilcoxon_signed_rank,
)


def record(sid="s", loc=(False,) * 3, typ=(False,) * 3, path=(False,) * 3,
           outcome=RunOutcome.COMPLETED):
    hyp = tuple(l and t for l, t in zip(loc, typ))
    return CorrectnessRecord(
        scenario_id=sid, location_match=loc, type_match=typ,
        hypothesis_match=hyp, path_valid=path, outcome=outcome,
    )


def rank_hit(rank):
    flags = [False, False, False]
    if rank is not None:
        flags[rank - 1] = True
    return tuple(flags)


# --- accuracy -----------------------------------------------------------------

def test_accuracy_all_rank_one():
    records = [record(sid=f"s{i}", loc=rank_hit(1), typ=rank_hit(1)) for i in range(5)]
    assert accuracy_at_k(records, Measure.LA, 1) == 1.0
    assert accuracy_at_k(records, Measure.LA, 3) == 1.0


def test_accuracy_absent_everywhere():
    records = [record(sid=f"s{i}") for i in range(4)]
    for k in (1, 2, 3):
        assert accuracy_at_k(records, Measure.HA, k) == 0.0


def test_accuracy_rank_two_in_four_of_ten():
    records = [record(sid=f"hit{i}", loc=rank_hit(2)) for i in range(4)]
    records += [record(sid=f"miss{i}") for i in range(6)]
    assert accuracy_at_k(records, Measure.LA, 1) == 0.0
    assert accuracy_at_k(records, Measure.LA, 3) == pytest.approx(0.4)


def test_accuracy_empty_records_error():
    with pytest.raises(ValueError):
        accuracy_at_k([], Measure.LA, 1)
    with pytest.raises(ValueError):
        avg_at_K([], Measure.LA)


def test_avg_at_K():
    all_hit = [record(sid="a", loc=rank_hit(1))]
    assert avg_at_K(all_hit, Measure.LA) == 1.0
    # A@1=0, A@2=0.5, A@3=1 over two records
    records = [record(sid="a", loc=rank_hit(2)), record(sid="b", loc=rank_hit(3))]
    assert avg_at_K(records, Measure.LA) == pytest.approx(0.5)


def test_per_sample_score_values():
    assert per_sample_score(record(loc=rank_hit(1)), Measure.LA) == 1.00
    assert per_sample_score(record(loc=rank_hit(2)), Measure.LA) == 0.67
    assert per_sample_score(record(loc=rank_hit(3)), Measure.LA) == 0.33
    assert per_sample_score(record(), Measure.LA) == 0.00


def test_execution_error_scores_zero_but_counts():
    records = [
        record(sid="ok", loc=rank_hit(1), typ=rank_hit(1)),
        record(sid="err", loc=rank_hit(1), typ=rank_hit(1), outcome=RunOutcome.RECURSION_LIMIT),
    ]
    # the error record keeps its flags here only to prove the denominator:
    # evaluate_hypotheses zeroes flags for non-COMPLETED outcomes.
    assert accuracy_at_k(records, Measure.LA, 1) == 1.0  # both count, both flagged here


def test_hypothesis_match_invariant():
    with pytest.raises(ValueError):
        CorrectnessRecord(
            scenario_id="bad",
            location_match=(False, False, False),
            type_match=(True, False, False),
            hypothesis_match=(True, False, False),
            path_valid=(False,) * 3,
            outcome=RunOutcome.COMPLETED,
        )


@settings(max_examples=80)
@given(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans(),
                          st.booleans(), st.booleans(), st.booleans()),
                min_size=1, max_size=20))
def test_monotonicity_and_ha_bound(flags):
    records = []
    for i, (l1, l2, l3, t1, t2, t3) in enumerate(flags):
        records.append(record(sid=f"s{i}", loc=(l1, l2, l3), typ=(t1, t2, t3)))
    for measure in Measure:
        a1 = accuracy_at_k(records, measure, 1)
        a2 = accuracy_at_k(records, measure, 2)
        a3 = accuracy_at_k(records, measure, 3)
        assert a1 <= a2 <= a3
    for k in (1, 2, 3):
        assert accuracy_at_k(records, Measure.HA, k) <= min(
            accuracy_at_k(records, Measure.LA, k), accuracy_at_k(records, Measure.TA, k)
        )


# --- evaluate_hypotheses ----------------------------------------------------------

@pytest.fixture
def eval_graph():
    schema = EntitySchema(entity_types=("N",), relationship_types=("x",), fault_classes={})
    entities = [Entity(n, "N") for n in ("a", "b", "c")]
    relationships = [Relationship("a", "x", "b"), Relationship("b", "x", "c")]
    return KnowledgeGraph.build(schema, entities, relationships)


def hyp(rank, loc, ftype, path=None):
    return Hypothesis(rank=rank, location=loc, fault_type=ftype, path=path, justification="j")


def test_evaluate_hypotheses_flags(eval_graph):
    path = PropagationPath((PathStep("a", "x", "b"),))
    hyps = [
        hyp(1, "b", "Session Timeout", path),
        hyp(2, "a", "high memory usage"),
        hyp(3, "zzz", "file missing"),
    ]
    rec = evaluate_hypotheses(
        "s1", "a", "HIGH MEMORY USAGE", hyps, eval_graph, {"b"}, RunOutcome.COMPLETED
    )
    assert rec.location_match == (False, True, False)
    assert rec.type_match == (False, True, False)  # case-insensitive
    assert rec.hypothesis_match == (False, True, False)
    assert rec.path_valid == (True, False, False)


def test_evaluate_execution_error_zeroes(eval_graph):
    hyps = [hyp(1, "a", "t", PropagationPath((PathStep("a", "x", "b"),)))]
    rec = evaluate_hypotheses("s1", "a", "t", hyps, eval_graph, {"b"}, RunOutcome.PARSE_FAILURE)
    assert rec.location_match == (False, False, False)
    assert rec.path_valid == (False, False, False)


# --- random baseline ----------------------------------------------------------------

def test_random_baseline_small_space():
    b1 = random_guessing_baseline(10, 5, 1)
    assert (b1.la, b1.ta, b1.ha) == (0.10, 0.20, 0.02)
    b3 = random_guessing_baseline(10, 5, 3)
    assert (b3.la, b3.ta, b3.ha) == (0.30, 0.60, 0.06)


def test_random_baseline_large_space():
    b3 = random_guessing_baseline(60, 15, 3)
    assert b3.la == pytest.approx(0.05)
    assert b3.ta == pytest.approx(0.20)
    assert b3.ha == pytest.approx(1 / 300)


def test_random_baseline_guards():
    with pytest.raises(ValueError):
        random_guessing_baseline(2, 5, 3)
    with pytest.raises(ValueError):
        random_guessing_baseline(0, 5, 1)


# --- wilcoxon -------------------------------------------------------------------------

def oracle_exact_p(diffs):
    """Brute-force two-sided p by enumerating all 2^n sign assignments."""
    diffs = [d for d in diffs if d != 0]
    n = len(diffs)
    absd = [abs(d) for d in diffs]
    order = sorted(range(n), key=lambda i: absd[i])
    ranks = [0.0] * n
    i = 0
    while i < n:
        j = i
        while j + 1 < n and absd[order[j + 1]] == absd[order[i]]:
            j += 1
        for idx in order[i:j + 1]:
            ranks[idx] = (i + j + 2) / 2
        i = j + 1
    w_obs = sum(r for r, d in zip(ranks, diffs) if d > 0)
    total = sum(ranks)
    lo = min(w_obs, total - w_obs)
    hi = total - lo
    count = 0
    for signs in itertools.product((0, 1), repeat=n):
        w = sum(r for r, s in zip(ranks, signs) if s)
        if w <= lo + 1e-12 or w >= hi - 1e-12:
            count += 1
    return min(1.0, count / 2**n)


def test_wilcoxon_identical_pairs_no_difference():
    result = wilcoxon_signed_rank([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
    assert result.no_difference
    assert result.p_value == 1.0


def test_wilcoxon_n6_matches_enumeration():
    a = [12.0, 9.0, 14.0, 8.0, 11.0, 10.0]
    b = [10.0, 10.0, 10.0, 10.0, 10.0, 10.0]
    result = wilcoxon_signed_rank(a, b)
    diffs = [x - y for x, y in zip(a, b)]
    assert result.method == "exact"
    assert result.p_value == pytest.approx(oracle_exact_p(diffs), abs=1e-12)


def test_wilcoxon_single_nonzero_difference():
    result = wilcoxon_signed_rank([5.0, 1.0, 1.0], [0.0, 1.0, 1.0])
    assert result.n == 1
    assert result.p_value == 1.0  # smallest attainable two-sided p at n = 1


def test_wilcoxon_length_mismatch():
    with pytest.raises(ValueError):
        wilcoxon_signed_rank([1.0], [1.0, 2.0])


@settings(max_examples=120, deadline=None)
@given(st.lists(st.integers(min_value=-5, max_value=5), min_size=1, max_size=10))
def test_wilcoxon_matches_enumeration_upto_n10(diffs):
    a = [float(d) for d in diffs]
    b = [0.0] * len(diffs)
    result = wilcoxon_signed_rank(a, b)
    if all(d == 0 for d in diffs):
        assert result.no_difference
    else:
        assert result.method == "exact"
        assert result.p_value == pytest.approx(oracle_exact_p(diffs), abs=1e-12)


def test_wilcoxon_normal_approximation_for_large_n():
    rng = random.Random(5)
    a = [rng.gauss(0.3, 1.0) for _ in range(40)]
    b = [0.0] * 40
    result = wilcoxon_signed_rank(a, b)
    assert result.method == "normal"
    assert 0.0 <= result.p_value <= 1.0


# --- holdout delta ----------------------------------------------------------------------

def test_holdout_identical_runs_not_significant():
    records = [record(sid=f"s{i}", loc=rank_hit(1)) for i in range(10)]
    deltas = holdout_delta(records, records)
    for measure in Measure:
        assert deltas[measure].delta == 0.0
        assert not deltas[measure].significant
        assert deltas[measure].no_difference


def test_holdout_flip_fixture():
    full = [record(sid=f"s{i:02d}") for i in range(20)]
    holdout = [
        record(sid=f"s{i:02d}", loc=rank_hit(1) if i < 8 else rank_hit(None))
        for i in range(20)
    ]
    deltas = holdout_delta(full, holdout)
    la = deltas[Measure.LA]
    assert la.delta == pytest.approx(0.40)
    # Exact test: 8 tied positive differences -> p = 2/2^8
    assert la.p_value == pytest.approx(2 / 256)
    assert la.significant


def test_holdout_disjoint_ids_error():
    with pytest.raises(ValueError, match="mismatch"):
        holdout_delta([record(sid="a")], [record(sid="b")])


# --- serialization ------------------------------------------------------------------------

def test_record_round_trip():
    rec = record(sid="x", loc=rank_hit(2), typ=rank_hit(2), path=(True, False, False))
    assert record_from_dict(record_to_dict(rec)) == rec
