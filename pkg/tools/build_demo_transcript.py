#!/usr/bin/env python3
"""Build the demo criteria file and matching mock-LLM transcript.

The transcript scripts a full pipeline conversation for one cohort
definition (4 inclusions, 3 exclusions): the monolithic cohort query,
the index query, and one stand-alone query per criterion. All queries
are built from the same CTE pieces, so the funnel's set-operation result
equals the monolithic cohort exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

OUT_DIR = Path(__file__).resolve().parent.parent / "configs"

CRITERIA_TEXT = """\
Index date: first diagnosis of hypertension on or after 2018-01-01
Inclusion:
- age at least 18 years at the index date
- at least one outpatient visit after the index date
- at least one prescription of metformin or lisinopril after the index date
- index date between 2018-01-01 and 2022-12-31
Exclusion:
- no emergency room visit at any time in the record
- no use of warfarin at any time in the record
- no colonoscopy procedure at any time in the record
"""

IDX = (
    "SELECT co.person_id, MIN(co.condition_start_date) AS index_date "
    "FROM condition_occurrence co "
    "WHERE co.condition_concept_id IN ([condition@Hypertension]) "
    "AND co.condition_start_date >= '2018-01-01' "
    "GROUP BY co.person_id"
)

CTE_IDX = f"cte_index AS ({IDX})"

INC_AGE = (
    "SELECT p.person_id FROM person p "
    "JOIN cte_index i ON p.person_id = i.person_id "
    "WHERE (CAST(STRFTIME('%Y', i.index_date) AS INTEGER) - p.year_of_birth) >= 18"
)
INC_VISIT = (
    "SELECT DISTINCT vo.person_id FROM visit_occurrence vo "
    "JOIN cte_index i ON vo.person_id = i.person_id "
    "WHERE vo.visit_concept_id IN ([visit@Outpatient Visit]) "
    "AND vo.visit_start_date >= i.index_date"
)
INC_DRUG = (
    "SELECT DISTINCT de.person_id FROM drug_exposure de "
    "JOIN cte_index i ON de.person_id = i.person_id "
    "WHERE (de.drug_concept_id IN ([drug@Metformin]) "
    "OR de.drug_concept_id IN ([drug@Lisinopril])) "
    "AND de.drug_exposure_start_date >= i.index_date"
)
INC_YEAR = (
    "SELECT i.person_id FROM cte_index i "
    "WHERE i.index_date >= '2018-01-01' AND i.index_date <= '2022-12-31'"
)
EXC_ER = (
    "SELECT DISTINCT vo.person_id FROM visit_occurrence vo "
    "WHERE vo.visit_concept_id IN ([visit@Emergency Room Visit])"
)
EXC_WARFARIN = (
    "SELECT DISTINCT de.person_id FROM drug_exposure de "
    "WHERE de.drug_concept_id IN ([drug@Warfarin])"
)
EXC_COLO = (
    "SELECT DISTINCT po.person_id FROM procedure_occurrence po "
    "WHERE po.procedure_concept_id IN ([procedure@Colonoscopy])"
)

MONOLITHIC = (
    "WITH "
    + ", ".join(
        [
            CTE_IDX,
            f"cte_inc_1 AS ({INC_AGE})",
            f"cte_inc_2 AS ({INC_VISIT})",
            f"cte_inc_3 AS ({INC_DRUG})",
            f"cte_inc_4 AS ({INC_YEAR})",
            f"cte_exc_1 AS ({EXC_ER})",
            f"cte_exc_2 AS ({EXC_WARFARIN})",
            f"cte_exc_3 AS ({EXC_COLO})",
        ]
    )
    + " SELECT DISTINCT i.person_id, i.index_date FROM cte_index i "
    "JOIN cte_inc_1 n1 ON i.person_id = n1.person_id "
    "JOIN cte_inc_2 n2 ON i.person_id = n2.person_id "
    "JOIN cte_inc_3 n3 ON i.person_id = n3.person_id "
    "JOIN cte_inc_4 n4 ON i.person_id = n4.person_id "
    "LEFT JOIN cte_exc_1 x1 ON i.person_id = x1.person_id "
    "LEFT JOIN cte_exc_2 x2 ON i.person_id = x2.person_id "
    "LEFT JOIN cte_exc_3 x3 ON i.person_id = x3.person_id "
    "WHERE x1.person_id IS NULL AND x2.person_id IS NULL AND x3.person_id IS NULL"
)


def standalone(body: str) -> str:
    return f"WITH {CTE_IDX} {body}"


def fenced(sql: str) -> str:
    return f"```sql\n{sql}\n```"


TURNS = [
    {"contains": "selects the patient cohort", "response": fenced(MONOLITHIC)},
    {"contains": "Index date rule:", "response": fenced(IDX)},
    {"contains": "age at least 18 years", "response": fenced(standalone(INC_AGE))},
    {"contains": "outpatient visit after the index date", "response": fenced(standalone(INC_VISIT))},
    {"contains": "metformin or lisinopril", "response": fenced(standalone(INC_DRUG))},
    {"contains": "index date between 2018-01-01", "response": fenced(standalone(INC_YEAR))},
    {"contains": "emergency room visit at any time", "response": fenced(EXC_ER)},
    {"contains": "use of warfarin at any time", "response": fenced(EXC_WARFARIN)},
    {"contains": "colonoscopy procedure at any time", "response": fenced(EXC_COLO)},
]


def main():
    OUT_DIR.mkdir(exist_ok=True)
    (OUT_DIR / "demo_criteria.txt").write_text(CRITERIA_TEXT, encoding="utf-8")
    (OUT_DIR / "demo_transcript.json").write_text(
        json.dumps({"turns": TURNS}, indent=2), encoding="utf-8"
    )
    print(f"wrote demo criteria and transcript to {OUT_DIR}")


if __name__ == "__main__":
    main()
