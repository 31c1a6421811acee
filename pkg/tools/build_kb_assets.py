#!/usr/bin/env python3
"""Build the packaged knowledge base files (epi_ask_kb.jsonl, epi_coho_kb.jsonl).

Deterministic, seeded generator. Every entry is checked during the build:
SQL must pass the complexity analyzer, resolve against the packaged
vocabulary, and execute on a synthetic OMOP database; dataset-level
complexity means must land inside the acceptance bands (target +/- 20%);
every masked text must be unique enough to win its own retrieval.

Run from the repo root:  python3 tools/build_kb_assets.py
"""

from __future__ import annotations

import random
import sys
from collections import Counter
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from cohortgen.assets import concepts_path, synonyms_path
from cohortgen.embeddings import HashingEmbedder
from cohortgen.generation import GeneratedSQL, Strategy, parse_placeholders
from cohortgen.kb import KBEntry, KBKind, kb_stats, save_kb
from cohortgen.masking import DictionaryEntityDetector, Domain, detect_entities, mask_entities
from cohortgen.normalize import ConceptMapping, load_vocabulary, resolve_placeholders
from cohortgen.retrieval import RetrievalConfig, build_index, retrieve
from cohortgen.criteria import parse_criteria_text
from cohortgen.sql_complexity import analyze_sql
from cohortgen.synthdb import SyntheticDbSpec, generate_synthetic_omop

DATA_DIR = Path(__file__).resolve().parent.parent / "src" / "cohortgen" / "data"

# acceptance bands: published reference means +/- 20%
ASK_BANDS = {"join_count": 1.9, "tables_referenced": 2.3, "logical_conditions": 5.8}
COHO_BANDS = {"join_count": 14.6, "tables_referenced": 5.3, "logical_conditions": 32.2}

VOCAB = load_vocabulary(concepts_path(), synonyms_path())
BY_DOMAIN = {}
for record in VOCAB:
    BY_DOMAIN.setdefault(record.domain, []).append(record)
EXACT = {(r.domain, r.name): r.concept_id for r in VOCAB}

DETECTOR = DictionaryEntityDetector(
    {label: r.domain for r in VOCAB for label in (r.name, *r.synonyms)}
)


def pick(rng: random.Random, domain: Domain):
    return rng.choice(BY_DOMAIN[domain])


def pick2(rng: random.Random, domain: Domain):
    a, b = rng.sample(BY_DOMAIN[domain], 2)
    return a, b


# --------------------------------------------------------------------------
# EpiAskKB template families. Each returns (question, sql).
# Complexity signatures are enforced collectively by the band assertions.
# --------------------------------------------------------------------------


def ask_simple_count(rng):
    c = pick(rng, Domain.CONDITION)
    opener = rng.choice(
        ["How many patients have ever been diagnosed with",
         "What is the total number of patients ever diagnosed with"]
    )
    q = f"{opener} {c.name.lower()}?"
    sql = (
        "SELECT COUNT(DISTINCT co.person_id) AS patient_count "
        "FROM condition_occurrence co "
        f"WHERE co.condition_concept_id IN ([condition@{c.name}])"
    )
    return q, sql


def ask_measure_distribution(rng):
    m = pick(rng, Domain.MEASUREMENT)
    d = pick(rng, Domain.DRUG)
    n = rng.randint(2, 9)
    q = f"What is the distribution of {m.name} values among patients taking {d.name.lower()}?"
    sql = (
        "SELECT m.measurement_concept_id, COUNT(*) AS n_results, AVG(m.value_as_number) AS mean_value "
        "FROM measurement m JOIN drug_exposure de ON m.person_id = de.person_id "
        f"WHERE m.measurement_concept_id IN ([measurement@{m.name}]) "
        f"AND de.drug_concept_id IN ([drug@{d.name}]) "
        "AND m.value_as_number IS NOT NULL "
        "AND m.value_as_number > 0 "
        "AND de.quantity > 0 "
        f"GROUP BY m.measurement_concept_id HAVING COUNT(*) > {n}"
    )
    return q, sql


def ask_female_procedure(rng):
    p = pick(rng, Domain.PROCEDURE)
    q = f"What is the number of female patients with at least one {p.name.lower()} procedure?"
    sql = (
        "SELECT COUNT(DISTINCT p.person_id) AS patient_count "
        "FROM person p JOIN procedure_occurrence po ON p.person_id = po.person_id "
        "WHERE p.gender_concept_id = 8532 "
        f"AND po.procedure_concept_id IN ([procedure@{p.name}]) "
        "AND po.provider_id IS NOT NULL"
    )
    return q, sql


def ask_age_gender_condition(rng):
    c = pick(rng, Domain.CONDITION)
    age = rng.choice([18, 40, 50, 65, 75])
    word, gid = rng.choice([("male", 8507), ("female", 8532)])
    q = f"How many {word} patients older than {age} have {c.name.lower()}?"
    sql = (
        "SELECT COUNT(DISTINCT p.person_id) AS patient_count "
        "FROM person p "
        "JOIN condition_occurrence co ON p.person_id = co.person_id "
        "JOIN concept k ON k.concept_id = co.condition_concept_id "
        f"WHERE co.condition_concept_id IN ([condition@{c.name}]) "
        f"AND p.gender_concept_id = {gid} "
        f"AND (CAST(STRFTIME('%Y', co.condition_start_date) AS INTEGER) - p.year_of_birth) > {age} "
        "AND p.year_of_birth > 1900 "
        f"AND co.condition_start_date >= '2018-01-01'"
    )
    return q, sql


def ask_drug_after_condition(rng):
    d = pick(rng, Domain.DRUG)
    c = pick(rng, Domain.CONDITION)
    year = rng.choice([2018, 2019, 2020, 2021])
    opener = rng.choice(["How many patients started", "What is the count of patients who started"])
    q = (
        f"{opener} {d.name.lower()} after a diagnosis of {c.name.lower()} "
        f"since {year}?"
    )
    sql = (
        "SELECT COUNT(DISTINCT de.person_id) AS patient_count "
        "FROM drug_exposure de JOIN condition_occurrence co ON de.person_id = co.person_id "
        f"WHERE de.drug_concept_id IN ([drug@{d.name}]) "
        f"AND co.condition_concept_id IN ([condition@{c.name}]) "
        "AND de.drug_exposure_start_date >= co.condition_start_date "
        "AND de.quantity > 0 "
        "AND de.drug_exposure_end_date >= de.drug_exposure_start_date "
        f"AND co.condition_start_date >= '{year}-01-01'"
    )
    return q, sql


def ask_age_at_first(rng):
    c = pick(rng, Domain.CONDITION)
    y1 = rng.choice([2018, 2019, 2020])
    y2 = rng.choice([2021, 2022])
    q = (
        f"What is the average age at first diagnosis of {c.name.lower()} "
        f"between {y1} and {y2}?"
    )
    sql = (
        "SELECT AVG(CAST(STRFTIME('%Y', f.first_date) AS INTEGER) - p.year_of_birth) AS mean_age "
        "FROM person p JOIN "
        "(SELECT person_id, MIN(condition_start_date) AS first_date FROM condition_occurrence "
        f"WHERE condition_concept_id IN ([condition@{c.name}]) "
        f"AND condition_start_date >= '{y1}-01-01' "
        f"AND condition_start_date <= '{y2}-12-31' GROUP BY person_id) f "
        "ON p.person_id = f.person_id"
    )
    return q, sql


def ask_top_conditions(rng):
    d = pick(rng, Domain.DRUG)
    n = rng.choice([3, 5, 10, 15, 20, 25, 30])
    q = f"What are the {n} most common conditions among patients taking {d.name.lower()}?"
    sql = (
        "SELECT co.condition_concept_id, COUNT(DISTINCT co.person_id) AS patient_count "
        "FROM condition_occurrence co "
        "WHERE co.person_id IN (SELECT person_id FROM drug_exposure "
        f"WHERE drug_concept_id IN ([drug@{d.name}]) AND quantity > 0) "
        "AND co.visit_occurrence_id IS NOT NULL "
        f"GROUP BY co.condition_concept_id ORDER BY patient_count DESC LIMIT {n}"
    )
    return q, sql


def ask_top_drugs(rng):
    c = pick(rng, Domain.CONDITION)
    k = rng.choice([3, 4, 5, 8, 10, 12, 15, 20])
    q = f"Which are the top {k} drugs by patient count among patients with {c.name.lower()}?"
    sql = (
        "SELECT k.concept_name, COUNT(DISTINCT de.person_id) AS patient_count "
        "FROM drug_exposure de JOIN concept k ON k.concept_id = de.drug_concept_id "
        "WHERE de.person_id IN (SELECT person_id FROM condition_occurrence "
        f"WHERE condition_concept_id IN ([condition@{c.name}]) "
        "AND visit_occurrence_id IS NOT NULL) "
        "AND de.quantity > 0 "
        f"GROUP BY k.concept_name ORDER BY patient_count DESC LIMIT {k}"
    )
    return q, sql


def ask_combo_drugs(rng):
    d1, d2 = pick2(rng, Domain.DRUG)
    p = pick(rng, Domain.PROCEDURE)
    n = rng.choice([1, 10, 30, 60, 90])
    opener = rng.choice(["How many patients on", "What is the number of patients on"])
    q = (
        f"{opener} {d1.name.lower()} also take {d2.name.lower()} "
        f"without any {p.name.lower()}, with at least {n} units dispensed?"
    )
    sql = (
        "SELECT COUNT(DISTINCT de.person_id) AS patient_count "
        "FROM drug_exposure de "
        f"WHERE de.drug_concept_id IN ([drug@{d1.name}]) "
        f"AND de.quantity >= {n} "
        "AND de.drug_exposure_end_date >= de.drug_exposure_start_date "
        "AND de.person_id IN (SELECT person_id FROM drug_exposure "
        f"WHERE drug_concept_id IN ([drug@{d2.name}])) "
        "AND de.person_id NOT IN (SELECT person_id FROM procedure_occurrence "
        f"WHERE procedure_concept_id IN ([procedure@{p.name}]))"
    )
    return q, sql


def ask_measurement_after_dx(rng):
    c = pick(rng, Domain.CONDITION)
    m = pick(rng, Domain.MEASUREMENT)
    days = rng.choice([30, 60, 90, 180])
    q = (
        f"How many patients with {c.name.lower()} had a {m.name} test "
        f"within {days} days of first diagnosis?"
    )
    sql = (
        "WITH first_dx AS (SELECT person_id, MIN(condition_start_date) AS dx_date "
        "FROM condition_occurrence "
        f"WHERE condition_concept_id IN ([condition@{c.name}]) "
        "AND condition_start_date >= '2018-01-01' GROUP BY person_id) "
        "SELECT COUNT(DISTINCT m.person_id) AS patient_count "
        "FROM measurement m JOIN first_dx f ON m.person_id = f.person_id "
        f"WHERE m.measurement_concept_id IN ([measurement@{m.name}]) "
        "AND m.value_as_number IS NOT NULL "
        f"AND JULIANDAY(m.measurement_date) - JULIANDAY(f.dx_date) BETWEEN 0 AND {days}"
    )
    return q, sql


def ask_two_cte_sequence(rng):
    c = pick(rng, Domain.CONDITION)
    d = pick(rng, Domain.DRUG)
    days = rng.choice([60, 90, 120, 180, 365])
    year = rng.choice([1945, 1950, 1955, 1960, 1965, 1970])
    q = (
        f"How many patients born after {year} started {d.name.lower()} within "
        f"{days} days of a {c.name.lower()} diagnosis?"
    )
    sql = (
        "WITH dx AS (SELECT person_id, MIN(condition_start_date) AS dx_date "
        f"FROM condition_occurrence WHERE condition_concept_id IN ([condition@{c.name}]) "
        "AND condition_start_date >= '2018-01-01' "
        "GROUP BY person_id), "
        "rx AS (SELECT person_id, MIN(drug_exposure_start_date) AS rx_date "
        f"FROM drug_exposure WHERE drug_concept_id IN ([drug@{d.name}]) "
        "AND quantity > 0 GROUP BY person_id) "
        "SELECT COUNT(DISTINCT dx.person_id) AS patient_count "
        "FROM dx JOIN rx ON dx.person_id = rx.person_id "
        "JOIN person p ON p.person_id = dx.person_id "
        f"WHERE JULIANDAY(rx.rx_date) - JULIANDAY(dx.dx_date) BETWEEN 0 AND {days} "
        f"AND p.year_of_birth > {year} "
        f"AND p.year_of_birth <= {year + 45}"
    )
    return q, sql


def ask_repeat_diagnoses(rng):
    c = pick(rng, Domain.CONDITION)
    gap = rng.choice([14, 30, 45, 60, 90, 120])
    year = rng.choice([2018, 2019, 2020])
    q = (
        f"How many patients have at least two diagnoses of {c.name.lower()} "
        f"more than {gap} days apart since {year}?"
    )
    sql = (
        "WITH dx AS (SELECT person_id, condition_start_date FROM condition_occurrence "
        f"WHERE condition_concept_id IN ([condition@{c.name}]) "
        "AND condition_start_date <= '2022-12-31') "
        "SELECT COUNT(DISTINCT a.person_id) AS patient_count "
        "FROM dx a JOIN dx b ON a.person_id = b.person_id "
        f"WHERE JULIANDAY(b.condition_start_date) - JULIANDAY(a.condition_start_date) >= {gap} "
        f"AND a.condition_start_date >= '{year}-01-01' "
        f"AND b.condition_start_date >= '{year}-01-01' "
        f"AND b.condition_start_date <= '2022-12-31'"
    )
    return q, sql


def ask_mini_cohort(rng):
    c = pick(rng, Domain.CONDITION)
    d = pick(rng, Domain.DRUG)
    p = pick(rng, Domain.PROCEDURE)
    days = rng.choice([30, 60, 90, 120, 180, 270, 365, 450, 540, 730])
    year = rng.choice([2018, 2019, 2020, 2021])
    opener = rng.choice(
        ["How many patients with", "What is the number of patients with",
         "What is the count of patients with"]
    )
    q = (
        f"{opener} {c.name.lower()} diagnosed since {year} who started {d.name.lower()} within "
        f"{days} days of diagnosis and never underwent {p.name.lower()}?"
    )
    sql = (
        "WITH idx AS (SELECT person_id, MIN(condition_start_date) AS index_date "
        "FROM condition_occurrence "
        f"WHERE condition_concept_id IN ([condition@{c.name}]) "
        f"AND condition_start_date >= '{year}-01-01' "
        f"AND condition_start_date <= '2022-12-31' GROUP BY person_id), "
        "incl AS (SELECT DISTINCT de.person_id FROM drug_exposure de "
        "JOIN idx i ON de.person_id = i.person_id "
        f"WHERE de.drug_concept_id IN ([drug@{d.name}]) "
        "AND de.drug_exposure_start_date >= i.index_date "
        "AND de.quantity > 0 "
        f"AND JULIANDAY(de.drug_exposure_start_date) - JULIANDAY(i.index_date) <= {days}), "
        "excl AS (SELECT DISTINCT po.person_id FROM procedure_occurrence po "
        "JOIN idx i ON po.person_id = i.person_id "
        f"WHERE po.procedure_concept_id IN ([procedure@{p.name}]) "
        f"AND po.procedure_date >= '{year}-01-01') "
        "SELECT COUNT(DISTINCT i.person_id) AS patient_count "
        "FROM idx i JOIN incl n ON i.person_id = n.person_id "
        "LEFT JOIN excl e ON i.person_id = e.person_id "
        "WHERE e.person_id IS NULL AND i.index_date <= '2022-12-31'"
    )
    return q, sql


def ask_inpatient_window(rng):
    c = pick(rng, Domain.CONDITION)
    days = rng.choice([14, 30, 60])
    age = rng.choice([18, 50, 65])
    q = (
        f"How many patients aged over {age} with {c.name.lower()} had an inpatient visit "
        f"within {days} days after diagnosis?"
    )
    sql = (
        "SELECT COUNT(DISTINCT vo.person_id) AS patient_count "
        "FROM visit_occurrence vo "
        "JOIN condition_occurrence co ON vo.person_id = co.person_id "
        "JOIN person p ON p.person_id = vo.person_id "
        "WHERE vo.visit_concept_id IN ([visit@Inpatient Visit]) "
        f"AND co.condition_concept_id IN ([condition@{c.name}]) "
        f"AND JULIANDAY(vo.visit_start_date) - JULIANDAY(co.condition_start_date) BETWEEN 0 AND {days} "
        f"AND (CAST(STRFTIME('%Y', co.condition_start_date) AS INTEGER) - p.year_of_birth) > {age} "
        "AND vo.visit_end_date >= vo.visit_start_date "
        "AND vo.person_id IN (SELECT person_id FROM observation_period "
        "WHERE observation_period_end_date >= observation_period_start_date)"
    )
    return q, sql


def ask_either_condition_treated(rng):
    c1, c2 = pick2(rng, Domain.CONDITION)
    d = pick(rng, Domain.DRUG)
    p = pick(rng, Domain.PROCEDURE)
    days = rng.choice([90, 180, 365])
    q = (
        f"How many patients with {c1.name.lower()} or {c2.name.lower()} were treated with "
        f"{d.name.lower()} within {days} days of diagnosis but never had {p.name.lower()}?"
    )
    sql = (
        "SELECT COUNT(DISTINCT co.person_id) AS patient_count "
        "FROM condition_occurrence co JOIN drug_exposure de ON co.person_id = de.person_id "
        f"WHERE (co.condition_concept_id IN ([condition@{c1.name}]) "
        f"OR co.condition_concept_id IN ([condition@{c2.name}])) "
        f"AND de.drug_concept_id IN ([drug@{d.name}]) "
        f"AND JULIANDAY(de.drug_exposure_start_date) - JULIANDAY(co.condition_start_date) BETWEEN 0 AND {days} "
        "AND co.person_id IN (SELECT person_id FROM visit_occurrence "
        "WHERE visit_concept_id IN ([visit@Outpatient Visit]) "
        "OR visit_concept_id IN ([visit@Inpatient Visit])) "
        "AND co.person_id NOT IN (SELECT person_id FROM procedure_occurrence "
        f"WHERE procedure_concept_id IN ([procedure@{p.name}]))"
    )
    return q, sql


def ask_deep_analytic(rng):
    c1, c2 = pick2(rng, Domain.CONDITION)
    p = pick(rng, Domain.PROCEDURE)
    m = pick(rng, Domain.MEASUREMENT)
    y1, y2 = rng.choice(
        [(2018, 2019), (2018, 2020), (2018, 2021), (2019, 2020), (2019, 2021), (2020, 2022)]
    )
    q = (
        f"How many patients diagnosed with {c1.name.lower()} between {y1} and {y2} received "
        f"{p.name.lower()} and a {m.name} test but never developed {c2.name.lower()}?"
    )
    sql = (
        "SELECT COUNT(DISTINCT co.person_id) AS patient_count "
        "FROM condition_occurrence co "
        "JOIN person p ON p.person_id = co.person_id "
        "JOIN observation_period op ON op.person_id = co.person_id "
        f"WHERE co.condition_concept_id IN ([condition@{c1.name}]) "
        f"AND co.condition_start_date >= '{y1}-01-01' "
        f"AND co.condition_start_date <= '{y2}-12-31' "
        "AND op.observation_period_start_date <= co.condition_start_date "
        "AND op.observation_period_end_date >= co.condition_start_date "
        "AND co.person_id IN (SELECT person_id FROM procedure_occurrence "
        f"WHERE procedure_concept_id IN ([procedure@{p.name}]) "
        f"AND procedure_date >= '{y1}-01-01' AND procedure_date <= '{y2}-12-31') "
        "AND co.person_id IN (SELECT person_id FROM measurement "
        f"WHERE measurement_concept_id IN ([measurement@{m.name}]) "
        "AND value_as_number IS NOT NULL) "
        "AND co.person_id NOT IN (SELECT person_id FROM condition_occurrence "
        f"WHERE condition_concept_id IN ([condition@{c2.name}])) "
        "AND (p.gender_concept_id = 8507 OR p.gender_concept_id = 8532)"
    )
    return q, sql


# family -> count; totals 115, subqueries 97, datetime 90, aggregation 115
ASK_MIX = [
    (ask_simple_count, 2),
    (ask_measure_distribution, 1),
    (ask_female_procedure, 1),
    (ask_age_gender_condition, 7),
    (ask_drug_after_condition, 7),
    (ask_top_conditions, 7),
    (ask_combo_drugs, 7),
    (ask_top_drugs, 7),
    (ask_age_at_first, 4),
    (ask_measurement_after_dx, 4),
    (ask_two_cte_sequence, 10),
    (ask_repeat_diagnoses, 10),
    (ask_mini_cohort, 40),
    (ask_inpatient_window, 2),
    (ask_either_condition_treated, 2),
    (ask_deep_analytic, 4),
]


EMBEDDER = HashingEmbedder()


def _embedding_key(masked: str) -> bytes:
    # entries must be unique in embedding space, not just as strings,
    # so that every entry wins its own retrieval query
    return EMBEDDER.embed(masked).tobytes()


def build_ask_entries(rng: random.Random) -> list[KBEntry]:
    entries = []
    seen_masked = set()
    i = 0
    for family, count in ASK_MIX:
        for _ in range(count):
            attempt = 0
            while True:
                q, sql = family(rng)
                spans = detect_entities(q, DETECTOR)
                masked = mask_entities(q, spans)
                if _embedding_key(masked) not in seen_masked:
                    break
                attempt += 1
                if attempt > 500:
                    raise RuntimeError(f"cannot make unique masked text for {family.__name__}")
            seen_masked.add(_embedding_key(masked))
            i += 1
            entries.append(
                KBEntry(
                    id=f"ask-{i:03d}",
                    kind=KBKind.ASK,
                    natural_text=q,
                    masked_text=masked,
                    sql=sql,
                    entities=spans,
                )
            )
    return entries


# --------------------------------------------------------------------------
# EpiCohoKB: structured criteria + one CTE-per-criterion SQL.
# --------------------------------------------------------------------------


class CriterionPart:
    """One criterion: bullet text plus its CTE body builder."""

    def __init__(self, text: str, cte_body: str):
        self.text = text
        self.cte_body = cte_body  # references cte_index as i


def inc_age(rng):
    age = rng.choice([18, 21, 40, 45, 50, 55, 60, 65])
    cap = age + rng.choice([25, 30, 35, 40])
    return CriterionPart(
        f"age between {age} and {cap} years at the index date",
        "SELECT i.person_id FROM cte_index i "
        f"WHERE (CAST(STRFTIME('%Y', i.index_date) AS INTEGER) - i.year_of_birth) >= {age} "
        f"AND (CAST(STRFTIME('%Y', i.index_date) AS INTEGER) - i.year_of_birth) <= {cap} "
        "AND i.year_of_birth > 1900",
    )


def inc_year(rng):
    y1 = rng.choice([2018, 2019])
    y2 = rng.choice([2020, 2021, 2022])
    return CriterionPart(
        f"index date between {y1}-01-01 and {y2}-12-31",
        "SELECT i.person_id FROM cte_index i "
        f"WHERE i.index_date >= '{y1}-01-01' AND i.index_date <= '{y2}-12-31' "
        "AND i.index_date <= '2022-12-31'",
    )


def inc_gender(rng):
    word, gid = rng.choice([("female", 8532), ("male", 8507)])
    return CriterionPart(
        f"{word} patients only",
        f"SELECT i.person_id FROM cte_index i WHERE i.gender_concept_id = {gid} "
        "AND i.year_of_birth > 1900 AND i.index_date >= '2018-01-01'",
    )


def inc_birth_range(rng):
    y1 = rng.choice([1930, 1940, 1950, 1955])
    y2 = y1 + rng.choice([30, 40, 50])
    return CriterionPart(
        f"born between {y1} and {y2}",
        "SELECT i.person_id FROM cte_index i "
        f"WHERE i.year_of_birth >= {y1} AND i.year_of_birth <= {y2} "
        "AND i.index_date >= '2018-01-01'",
    )


def inc_observation(rng):
    days = rng.choice([180, 365, 730])
    return CriterionPart(
        f"continuous observation of at least {days} days before the index date",
        "SELECT DISTINCT op.person_id FROM observation_period op "
        "JOIN cte_index i ON op.person_id = i.person_id "
        f"WHERE op.observation_period_start_date <= DATE(i.index_date, '-{days} day') "
        "AND op.observation_period_end_date >= i.index_date "
        "AND op.observation_period_end_date >= op.observation_period_start_date",
    )


def inc_event(rng):
    kind = rng.choice(["drug", "visit", "measurement", "procedure"])
    days = rng.choice([90, 180, 365])
    if kind == "drug":
        a, b = pick2(rng, Domain.DRUG)
        text = (
            f"at least one prescription of {a.name.lower()} or {b.name.lower()} within "
            f"{days} days after the index date"
        )
        body = (
            "SELECT DISTINCT de.person_id FROM drug_exposure de "
            "JOIN cte_index i ON de.person_id = i.person_id "
            f"WHERE (de.drug_concept_id IN ([drug@{a.name}]) "
            f"OR de.drug_concept_id IN ([drug@{b.name}])) "
            "AND de.drug_exposure_start_date >= i.index_date "
            f"AND de.drug_exposure_start_date <= DATE(i.index_date, '+{days} day') "
            "AND de.quantity > 0"
        )
    elif kind == "visit":
        v = pick(rng, Domain.VISIT)
        text = f"at least one {v.name.lower()} within {days} days after the index date"
        body = (
            "SELECT DISTINCT vo.person_id FROM visit_occurrence vo "
            "JOIN cte_index i ON vo.person_id = i.person_id "
            f"WHERE vo.visit_concept_id IN ([visit@{v.name}]) "
            "AND vo.visit_start_date >= i.index_date "
            f"AND vo.visit_start_date <= DATE(i.index_date, '+{days} day') "
            "AND vo.visit_end_date >= vo.visit_start_date"
        )
    elif kind == "measurement":
        m = pick(rng, Domain.MEASUREMENT)
        text = f"a recorded {m.name} result within {days} days of the index date"
        body = (
            "SELECT DISTINCT m.person_id FROM measurement m "
            "JOIN cte_index i ON m.person_id = i.person_id "
            f"WHERE m.measurement_concept_id IN ([measurement@{m.name}]) "
            "AND m.value_as_number IS NOT NULL "
            f"AND m.measurement_date >= DATE(i.index_date, '-{days} day') "
            f"AND m.measurement_date <= DATE(i.index_date, '+{days} day')"
        )
    else:
        p = pick(rng, Domain.PROCEDURE)
        text = f"underwent {p.name.lower()} within {days} days after the index date"
        body = (
            "SELECT DISTINCT po.person_id FROM procedure_occurrence po "
            "JOIN cte_index i ON po.person_id = i.person_id "
            f"WHERE po.procedure_concept_id IN ([procedure@{p.name}]) "
            "AND po.procedure_date >= i.index_date "
            f"AND po.procedure_date <= DATE(i.index_date, '+{days} day') "
            "AND po.provider_id IS NOT NULL"
        )
    return CriterionPart(text, body)


def exc_prior_condition(rng):
    c1, c2 = pick2(rng, Domain.CONDITION)
    days = rng.choice([365, 730, 1095])
    return CriterionPart(
        f"no diagnosis of {c1.name.lower()} or {c2.name.lower()} in the {days} days "
        "before the index date",
        "SELECT DISTINCT co.person_id FROM condition_occurrence co "
        "JOIN cte_index i ON co.person_id = i.person_id "
        f"WHERE (co.condition_concept_id IN ([condition@{c1.name}]) "
        f"OR co.condition_concept_id IN ([condition@{c2.name}])) "
        f"AND co.condition_start_date >= DATE(i.index_date, '-{days} day') "
        "AND co.condition_start_date < i.index_date "
        "AND co.visit_occurrence_id IS NOT NULL",
    )


def exc_prior_drug(rng):
    d = pick(rng, Domain.DRUG)
    days = rng.choice([180, 365])
    return CriterionPart(
        f"no use of {d.name.lower()} in the {days} days before the index date",
        "SELECT DISTINCT de.person_id FROM drug_exposure de "
        "JOIN cte_index i ON de.person_id = i.person_id "
        f"WHERE de.drug_concept_id IN ([drug@{d.name}]) "
        f"AND de.drug_exposure_start_date >= DATE(i.index_date, '-{days} day') "
        "AND de.drug_exposure_start_date < i.index_date "
        "AND de.quantity > 0",
    )


def exc_drug_era(rng):
    d = pick(rng, Domain.DRUG)
    return CriterionPart(
        f"no ongoing {d.name.lower()} era at the index date",
        "SELECT DISTINCT e.person_id FROM drug_era e "
        "JOIN cte_index i ON e.person_id = i.person_id "
        f"WHERE e.drug_concept_id IN ([drug@{d.name}]) "
        "AND e.drug_era_start_date <= i.index_date "
        "AND e.drug_era_end_date >= i.index_date "
        "AND e.drug_exposure_count >= 1",
    )


def exc_recent_procedure(rng):
    p = pick(rng, Domain.PROCEDURE)
    days = rng.choice([90, 180, 365])
    return CriterionPart(
        f"no {p.name.lower()} in the {days} days before the index date",
        "SELECT DISTINCT po.person_id FROM procedure_occurrence po "
        "JOIN cte_index i ON po.person_id = i.person_id "
        f"WHERE po.procedure_concept_id IN ([procedure@{p.name}]) "
        f"AND po.procedure_date >= DATE(i.index_date, '-{days} day') "
        "AND po.procedure_date < i.index_date "
        "AND po.provider_id IS NOT NULL",
    )


def exc_late_index(rng):
    y = rng.choice([2021, 2022])
    return CriterionPart(
        f"exclude patients whose index date falls after {y}-06-30 or before 2018-01-01",
        "SELECT i.person_id FROM cte_index i "
        f"WHERE i.index_date > '{y}-06-30' OR i.index_date < '2018-01-01'",
    )


def exc_old_age(rng):
    age = rng.choice([80, 85, 90])
    return CriterionPart(
        f"exclude patients older than {age} years at the index date",
        "SELECT i.person_id FROM cte_index i "
        f"WHERE (CAST(STRFTIME('%Y', i.index_date) AS INTEGER) - i.year_of_birth) > {age} "
        "AND i.year_of_birth > 1900",
    )


def exc_history_procedure(rng):
    p = pick(rng, Domain.PROCEDURE)
    return CriterionPart(
        f"no history of {p.name.lower()} at any time before the index date",
        "SELECT DISTINCT po.person_id FROM procedure_occurrence po "
        "JOIN cte_index i ON po.person_id = i.person_id "
        "WHERE po.procedure_date < i.index_date "
        f"AND po.procedure_concept_id IN ([procedure@{p.name}]) "
        "AND po.provider_id IS NOT NULL",
    )


def coho_entry(rng: random.Random, entry_id: str, with_aggregation: bool = True):
    """One cohort definition: structured criteria text + CTE SQL."""
    index_kind = rng.choice(["condition", "condition", "drug"])
    y0 = rng.choice([2018, 2019])
    if index_kind == "condition":
        idx_concept = pick(rng, Domain.CONDITION)
        index_rule = f"first diagnosis of {idx_concept.name.lower()} on or after {y0}-01-01"
        event_table, concept_col, date_col, dom = (
            "condition_occurrence", "condition_concept_id", "condition_start_date", "condition",
        )
    else:
        idx_concept = pick(rng, Domain.DRUG)
        index_rule = f"first prescription of {idx_concept.name.lower()} on or after {y0}-01-01"
        event_table, concept_col, date_col, dom = (
            "drug_exposure", "drug_concept_id", "drug_exposure_start_date", "drug",
        )
    if with_aggregation:
        index_select = f"MIN(ev.{date_col}) AS index_date"
        index_group = " GROUP BY ev.person_id"
    else:
        index_select = f"ev.{date_col} AS index_date"
        index_group = ""
    index_cte = (
        f"cte_index AS (SELECT ev.person_id, {index_select}, "
        "p.gender_concept_id, p.year_of_birth "
        f"FROM {event_table} ev JOIN person p ON p.person_id = ev.person_id "
        f"WHERE ev.{concept_col} IN ([{dom}@{idx_concept.name}]) "
        f"AND ev.{date_col} >= '{y0}-01-01' "
        f"AND ev.{date_col} <= '2022-12-31' "
        "AND p.year_of_birth > 1900"
        f"{index_group})"
    )

    n_inc = rng.choice([3, 4, 4, 4, 5])
    n_exc = rng.choice([2, 3, 4, 4, 5])
    inc_pool = [inc_gender, inc_birth_range, inc_observation, inc_event, inc_event]
    inc_makers = [inc_age, inc_year] + rng.sample(inc_pool, k=max(0, n_inc - 2))
    inc_makers = inc_makers[:n_inc]
    exc_pool = [
        exc_prior_drug, exc_drug_era, exc_recent_procedure,
        exc_late_index, exc_old_age, exc_history_procedure,
    ]
    exc_makers = [exc_prior_condition(rng)] and [exc_prior_condition] + rng.sample(exc_pool, k=n_exc - 1)

    inclusions = [maker(rng) for maker in inc_makers]
    exclusions = [maker(rng) for maker in exc_makers]

    text_lines = [f"Index date: {index_rule}", "Inclusion:"]
    text_lines += [f"- {part.text}" for part in inclusions]
    text_lines.append("Exclusion:")
    text_lines += [f"- {part.text}" for part in exclusions]
    criteria_text = "\n".join(text_lines)

    ctes = [index_cte]
    for n, part in enumerate(inclusions, 1):
        ctes.append(f"cte_inc_{n} AS ({part.cte_body})")
    for n, part in enumerate(exclusions, 1):
        ctes.append(f"cte_exc_{n} AS ({part.cte_body})")
    join_block = " ".join(
        f"JOIN cte_inc_{n} n{n} ON i.person_id = n{n}.person_id"
        for n in range(1, len(inclusions) + 1)
    )
    left_block = " ".join(
        f"LEFT JOIN cte_exc_{n} x{n} ON i.person_id = x{n}.person_id"
        for n in range(1, len(exclusions) + 1)
    )
    null_checks = " AND ".join(f"x{n}.person_id IS NULL" for n in range(1, len(exclusions) + 1))
    sql = (
        "WITH " + ", ".join(ctes) + " "
        "SELECT DISTINCT i.person_id, i.index_date FROM cte_index i "
        + join_block + " " + left_block + " WHERE " + null_checks
        + f" AND i.index_date >= '{y0}-01-01'"
        + " AND i.index_date <= '2022-12-31' AND i.year_of_birth > 1900"
    )
    spans = detect_entities(criteria_text, DETECTOR)
    return KBEntry(
        id=entry_id,
        kind=KBKind.COHO,
        natural_text=criteria_text,
        masked_text=mask_entities(criteria_text, spans),
        sql=sql,
        entities=spans,
    )


def build_coho_entries(rng: random.Random) -> list[KBEntry]:
    entries = []
    seen = set()
    for i in range(1, 109):
        attempt = 0
        while True:
            entry = coho_entry(rng, f"coho-{i:03d}", with_aggregation=(i not in (40, 80)))
            if _embedding_key(entry.masked_text) not in seen:
                break
            attempt += 1
            if attempt > 200:
                raise RuntimeError("cannot make unique cohort definition")
        seen.add(_embedding_key(entry.masked_text))
        entries.append(entry)
    return entries


# --------------------------------------------------------------------------
# verification
# --------------------------------------------------------------------------


def resolve_exact(sql: str) -> str:
    """Resolve placeholders by exact vocabulary name (builder-side check)."""
    generated = GeneratedSQL(sql=sql, placeholders=parse_placeholders(sql), strategy=Strategy.ZS)
    mappings = []
    for ph in {(p.domain, p.term) for p in generated.placeholders}:
        domain, term = ph
        concept_id = EXACT.get((domain, term))
        if concept_id is None:
            raise RuntimeError(f"placeholder term not an exact vocabulary name: {term!r}")
        mappings.append(
            ConceptMapping(term=term, domain=domain, candidates=[(concept_id, 1.0)], chosen=[concept_id])
        )
    return resolve_placeholders(generated, mappings)


def verify_kb(entries, bands, label, backend):
    stats = kb_stats(entries)
    assert not stats.failed_ids, f"{label}: analyzer failed on {stats.failed_ids}"
    print(f"\n{label}: n={stats.n_samples}")
    for metric, target in bands.items():
        mean = getattr(stats, metric).mean
        low, high = 0.8 * target, 1.2 * target
        status = "OK " if low <= mean <= high else "OUT"
        print(f"  {status} {metric:<20} mean {mean:6.2f}  target {target} band [{low:.2f}, {high:.2f}]")
        if not (low <= mean <= high):
            raise SystemExit(f"{label}: {metric} mean {mean:.2f} outside band")
    print(
        f"  pct aggregation {stats.pct_with_aggregation:.1f} | datetime {stats.pct_with_datetime:.1f}"
        f" | subquery {stats.pct_with_subquery:.1f} | chars {stats.char_length.mean:.0f}"
        f" | distinct tables {stats.n_distinct_tables} | distinct columns {stats.n_distinct_columns}"
    )

    # every query must execute on the synthetic schema after exact resolution
    for entry in entries:
        resolved = resolve_exact(entry.sql)
        backend.execute(resolved)

    # coho criteria must parse in the structured grammar
    if entries[0].kind == KBKind.COHO:
        for entry in entries:
            parsed = parse_criteria_text(entry.natural_text)
            bullets = [l for l in entry.natural_text.splitlines() if l.startswith("- ")]
            assert len(bullets) == len(parsed.inclusion) + len(parsed.exclusion)
        n_inc = [len(parse_criteria_text(e.natural_text).inclusion) for e in entries]
        n_exc = [len(parse_criteria_text(e.natural_text).exclusion) for e in entries]
        print(
            f"  inclusion mean {sum(n_inc)/len(n_inc):.2f} | exclusion mean {sum(n_exc)/len(n_exc):.2f}"
        )

    # self-retrieval sanity: every entry must win its own masked-text query
    embedder = HashingEmbedder()
    index = build_index(entries, embedder)
    for entry in entries:
        hits = retrieve(index, entry.masked_text, RetrievalConfig(k=5))
        assert hits[0].entry_id == entry.id and hits[0].score >= 0.999, (
            f"{label}: {entry.id} does not win its own query (top: {hits[0]})"
        )
        loo = retrieve(
            index, entry.masked_text, RetrievalConfig(k=5, exclude_ids=frozenset({entry.id}))
        )
        assert all(h.entry_id != entry.id for h in loo)
    return stats


def main():
    rng = random.Random(20240612)
    ask = build_ask_entries(rng)
    coho = build_coho_entries(rng)
    assert len(ask) == 115 and len(coho) == 108

    backend = generate_synthetic_omop(SyntheticDbSpec(seed=3, n_persons=60))
    verify_kb(ask, ASK_BANDS, "EpiAskKB", backend)
    verify_kb(coho, COHO_BANDS, "EpiCohoKB", backend)

    DATA_DIR.mkdir(parents=True, exist_ok=True)
    save_kb(ask, DATA_DIR / "epi_ask_kb.jsonl")
    save_kb(coho, DATA_DIR / "epi_coho_kb.jsonl")
    print(f"\nwrote {len(ask)} ask entries and {len(coho)} coho entries to {DATA_DIR}")


if __name__ == "__main__":
    main()
