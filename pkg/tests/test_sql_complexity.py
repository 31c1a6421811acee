"""Complexity analyzer tests against hand-counted fixtures and a naive
independent token counter (valid for flat, single-statement queries)."""

import re

import pytest

from cohortgen.sql_complexity import SqlAnalysisError, analyze_sql

JOIN_SUBQ = (
    "SELECT p.person_id FROM person p "
    "JOIN condition_occurrence c ON p.person_id=c.person_id "
    "WHERE c.condition_start_date >= DATE '2020-01-01' "
    "AND c.condition_concept_id IN (SELECT concept_id FROM concept)"
)


def naive_counts(sql: str) -> dict:
    """Independent counter for flat fixtures: no CTEs, no comma joins."""
    words = re.findall(r"[A-Za-z_][A-Za-z0-9_]*", sql.upper())
    joins = words.count("JOIN")
    # logical tokens after the first WHERE (fixtures keep all predicates there)
    logical = 0
    if "WHERE" in words:
        after = words[words.index("WHERE") :]
        logical = sum(after.count(w) for w in ("AND", "OR", "NOT"))
    tables = 0
    for i, w in enumerate(words):
        if w in ("FROM", "JOIN") and i + 1 < len(words) and words[i + 1] != "SELECT":
            tables += 1
    return {"joins": joins, "logical": logical, "tables": tables}


def test_select_one_has_no_clauses():
    c = analyze_sql("SELECT 1")
    assert c.tables_referenced == 0
    assert c.join_count == 0
    assert c.logical_conditions == 0
    assert not c.has_aggregation
    assert not c.has_datetime_ops
    assert not c.has_subquery


def test_join_date_and_subquery_fixture():
    # hand count: tables person, condition_occurrence, concept; one JOIN;
    # one AND in WHERE; date literal comparison; IN (SELECT ...) subquery
    c = analyze_sql(JOIN_SUBQ)
    assert c.tables_referenced == 3
    assert c.join_count == 1
    assert c.logical_conditions == 1
    assert not c.has_aggregation
    assert c.has_datetime_ops
    assert c.has_subquery
    naive = naive_counts(JOIN_SUBQ)
    assert (c.join_count, c.tables_referenced) == (naive["joins"], naive["tables"])
    # naive WHERE scan also sees the subquery's tokens; none are logical here
    assert c.logical_conditions == naive["logical"]


def test_count_star_aggregation():
    c = analyze_sql("SELECT COUNT(*) FROM person")
    assert c.tables_referenced == 1
    assert c.join_count == 0
    assert c.logical_conditions == 0
    assert c.has_aggregation
    assert not c.has_datetime_ops
    assert not c.has_subquery


def test_comma_join_counts_once_per_extra_item():
    c = analyze_sql("SELECT a.x FROM t1 a, t2 b, t3 c WHERE a.x = b.x AND b.y = c.y")
    assert c.join_count == 2
    assert c.tables_referenced == 3
    assert c.logical_conditions == 1


def test_cte_names_are_not_tables():
    sql = (
        "WITH cte_first AS (SELECT person_id, MIN(drug_era_start_date) AS d "
        "FROM drug_era GROUP BY person_id) "
        "SELECT f.person_id FROM cte_first f JOIN person p ON p.person_id = f.person_id"
    )
    c = analyze_sql(sql)
    assert c.table_names == frozenset({"drug_era", "person"})
    assert c.tables_referenced == 2  # cte_first reference excluded
    assert c.join_count == 1
    assert c.has_subquery  # CTE body is a parenthesized SELECT
    assert c.has_aggregation


def test_repeated_table_counted_per_reference():
    sql = (
        "SELECT a.person_id FROM condition_occurrence a "
        "JOIN condition_occurrence b ON a.person_id = b.person_id"
    )
    c = analyze_sql(sql)
    assert c.tables_referenced == 2
    assert c.table_names == frozenset({"condition_occurrence"})


def test_logical_conditions_counted_in_on_and_having():
    sql = (
        "SELECT t.x FROM t1 t JOIN t2 u ON t.id = u.id AND t.k = u.k "
        "WHERE t.x > 1 OR t.y < 2 GROUP BY t.x HAVING COUNT(*) > 3 AND SUM(t.x) > 0"
    )
    c = analyze_sql(sql)
    assert c.logical_conditions == 3  # AND in ON, OR in WHERE, AND in HAVING


def test_select_list_logical_words_not_counted():
    # AND appearing inside a CASE in the select list is not a predicate position
    sql = "SELECT CASE WHEN x > 1 AND y > 2 THEN 1 ELSE 0 END FROM t WHERE z = 1"
    c = analyze_sql(sql)
    assert c.logical_conditions == 0


def test_datetime_function_detection():
    assert analyze_sql("SELECT date(visit_start_date, '-30 day') FROM visit_occurrence").has_datetime_ops
    assert analyze_sql(
        "SELECT person_id FROM visit_occurrence WHERE visit_start_date >= '2019-06-01'"
    ).has_datetime_ops
    assert not analyze_sql("SELECT person_id FROM visit_occurrence").has_datetime_ops


def test_placeholder_tokens_do_not_break_analysis():
    sql = (
        "SELECT person_id FROM condition_occurrence "
        "WHERE condition_concept_id IN ([condition@type 2 diabetes]) "
        "AND condition_start_date >= '2018-01-01'"
    )
    c = analyze_sql(sql)
    assert c.tables_referenced == 1
    assert c.logical_conditions == 1
    assert c.has_datetime_ops


def test_purity_identical_input_identical_output():
    a = analyze_sql(JOIN_SUBQ)
    b = analyze_sql(JOIN_SUBQ)
    assert a == b


@pytest.mark.parametrize(
    "bad",
    ["", "   ", "SELECT (1", "SELECT 1)", "SELECT 'unterminated FROM t"],
)
def test_unparseable_sql_raises(bad):
    with pytest.raises(SqlAnalysisError):
        analyze_sql(bad)
