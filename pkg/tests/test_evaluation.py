import datetime as dt
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cohortgen.evaluation import (
    EvalConfig,
    SampleOutcome,
    SampleResult,
    aggregate_results,
    date_metrics,
    patient_metrics,
    score_sample,
    size_similarity,
)
from cohortgen.funnel import Cohort
from cohortgen.generation import Strategy

BASE = dt.date(2020, 6, 15)


def cohort(rows: dict[int, int]) -> Cohort:
    """person -> day offset from BASE."""
    return Cohort(rows={p: BASE + dt.timedelta(days=off) for p, off in rows.items()})


# -- brute-force oracles (deliberately naive) -------------------------------


def brute_patient_metrics(g: Cohort, r: Cohort):
    tp = sum(1 for p in g.rows if p in r.rows)
    precision = tp / len(g.rows) if g.rows else 0.0
    recall = tp / len(r.rows) if r.rows else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def brute_size_similarity(g: Cohort, r: Cohort):
    a, b = len(g.rows), len(r.rows)
    if a == 0 and b == 0:
        return 1.0
    if min(a, b) == 0:
        return 0.0
    return min(a, b) / max(a, b)


def brute_date_metrics(g: Cohort, r: Cohort, window: int):
    matched = [p for p in g.rows if p in r.rows]
    if not matched:
        return 0.0, 0.0
    exact = sum(1 for p in matched if g.rows[p] == r.rows[p]) / len(matched)
    within = sum(1 for p in matched if abs((g.rows[p] - r.rows[p]).days) <= window) / len(matched)
    return exact, within


def random_cohort(rng: random.Random, max_persons: int = 200) -> Cohort:
    n = rng.randint(0, max_persons)
    persons = rng.sample(range(1, max_persons * 2), n)
    return Cohort(
        rows={p: BASE + dt.timedelta(days=rng.randint(-400, 400)) for p in persons}
    )


def test_metrics_match_brute_force_on_random_cohorts():
    rng = random.Random(20250809)
    for _ in range(300):
        g, r = random_cohort(rng), random_cohort(rng)
        window = rng.choice([0, 7, 30, 365])
        assert patient_metrics(g, r) == pytest.approx(brute_patient_metrics(g, r), abs=1e-12)
        assert size_similarity(g, r) == pytest.approx(brute_size_similarity(g, r), abs=1e-12)
        assert date_metrics(g, r, window) == pytest.approx(
            brute_date_metrics(g, r, window), abs=1e-12
        )


# -- frozen hand-computed examples ------------------------------------------


def test_patient_metrics_identity():
    g = cohort({1: 0, 2: 0})
    assert patient_metrics(g, g) == (1.0, 1.0, 1.0)


def test_patient_metrics_partial_overlap():
    g, r = cohort({1: 0, 2: 0, 3: 0}), cohort({2: 0, 3: 0, 4: 0})
    p, rc, f1 = patient_metrics(g, r)
    assert (p, rc, f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3))


def test_patient_metrics_disjoint():
    assert patient_metrics(cohort({1: 0}), cohort({2: 0})) == (0.0, 0.0, 0.0)


def test_size_similarity_cases():
    assert size_similarity(cohort({1: 0, 2: 0}), cohort({3: 0, 4: 0})) == 1.0
    assert size_similarity(cohort(dict.fromkeys(range(50), 0)), cohort(dict.fromkeys(range(100), 0))) == 0.5
    assert size_similarity(Cohort(), cohort({1: 0})) == 0.0
    assert size_similarity(Cohort(), Cohort()) == 1.0


def test_date_metrics_all_exact():
    g = cohort({1: 5, 2: -3})
    assert date_metrics(g, g, 30) == (1.0, 1.0)


def test_date_metrics_half_exact_all_within():
    g = cohort({1: 0, 2: 10})
    r = cohort({1: 0, 2: 0})
    assert date_metrics(g, r, 30) == (0.5, 1.0)


def test_date_metrics_inclusive_boundary():
    g = cohort({1: 30})
    r = cohort({1: 0})
    exact, within = date_metrics(g, r, 30)
    assert exact == 0.0
    assert within == 1.0  # exactly 30 days counts (inclusive)
    assert date_metrics(g, r, 29) == (0.0, 0.0)


def test_date_metrics_no_matches():
    assert date_metrics(cohort({1: 0}), cohort({2: 0}), 30) == (0.0, 0.0)


# -- symmetry and monotonicity properties ------------------------------------


ids_and_offsets = st.dictionaries(st.integers(1, 60), st.integers(-100, 100), max_size=40)


@given(ids_and_offsets, ids_and_offsets)
def test_size_similarity_symmetric(a, b):
    g, r = cohort(a), cohort(b)
    assert size_similarity(g, r) == size_similarity(r, g)


@given(ids_and_offsets, ids_and_offsets, st.integers(0, 50), st.integers(0, 50))
def test_date_metrics_symmetric_and_window_monotone(a, b, w1, w2):
    g, r = cohort(a), cohort(b)
    assert date_metrics(g, r, w1) == date_metrics(r, g, w1)
    low, high = min(w1, w2), max(w1, w2)
    assert date_metrics(g, r, low)[1] <= date_metrics(g, r, high)[1]


# -- sample scoring ----------------------------------------------------------


def test_healing_failure_scores_zero():
    result = score_sample(SampleOutcome(valid_sql=False, cohort=None), cohort({1: 0}), EvalConfig())
    assert not result.valid_sql and not result.retrieved
    assert result.f1 == result.precision == result.recall == 0.0
    assert result.size_similarity == result.date_exact == result.date_within_window == 0.0


def test_valid_but_empty_result_not_retrieved():
    result = score_sample(SampleOutcome(valid_sql=True, cohort=Cohort()), cohort({1: 0}), EvalConfig())
    assert result.valid_sql and not result.retrieved
    assert result.f1 == 0.0


def test_perfect_generation_scores_one():
    ref = cohort({1: 0, 2: 7})
    result = score_sample(SampleOutcome(valid_sql=True, cohort=ref), ref, EvalConfig())
    assert result.retrieved
    assert (result.precision, result.recall, result.f1) == (1.0, 1.0, 1.0)
    assert result.size_similarity == result.date_exact == result.date_within_window == 1.0


# -- aggregation --------------------------------------------------------------


def perfect(sample_id: str) -> SampleResult:
    return SampleResult(sample_id, True, True, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0)


def test_all_perfect_gives_100_everywhere():
    report = aggregate_results({Strategy.ZS: [perfect("a"), perfect("b")]})
    means = report.rows[0].means
    assert all(v == 100.0 for v in means.values())


def test_zero_scoring_drags_means():
    results = [perfect("a"), SampleResult.zeros("b")]
    report = aggregate_results({Strategy.ZS: results})
    means = report.rows[0].means
    assert means["Valid SQL"] == 50.0
    assert means["F1"] == 50.0
    assert means["Within 30d"] == 50.0


def test_report_columns_match_expected_layout():
    report = aggregate_results({Strategy.RAG_AC: [perfect("a")]})
    doc = report.to_document()
    assert doc["columns"] == [
        "Valid SQL",
        "Retrieved",
        "F1",
        "Prec.",
        "Recall",
        "Size sim.",
        "Date overlap",
        "Within 30d",
    ]
    table = report.format_table()
    assert "rag_ac" in table
    assert "Within 30d" in table
