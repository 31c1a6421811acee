"""Patient cohorts and attrition funnels.

A cohort maps person_id to index date. The funnel applies each
criterion's patient set to the index cohort in declaration order
(intersection for inclusions, difference for exclusions), recording the
remaining count after every step; index dates always come from the
index-defining step.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
from dataclasses import dataclass, field


@dataclass
class Cohort:
    rows: dict[int, dt.date] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def person_ids(self) -> set[int]:
        return set(self.rows)

    def restrict(self, person_ids: set[int]) -> "Cohort":
        return Cohort(rows={p: d for p, d in self.rows.items() if p in person_ids})

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(["person_id", "index_date"])
        for pid in sorted(self.rows):
            writer.writerow([pid, self.rows[pid].isoformat()])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "Cohort":
        rows: dict[int, dt.date] = {}
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["person_id", "index_date"]:
            raise ValueError("cohort file must have person_id, index_date columns")
        for row in reader:
            if not row:
                continue
            rows[int(row[0])] = dt.date.fromisoformat(row[1])
        return cls(rows=rows)


class StepKind(str, enum.Enum):
    INDEX = "INDEX"
    INCLUSION = "INCLUSION"
    EXCLUSION = "EXCLUSION"


@dataclass
class FunnelStep:
    step_index: int
    criterion_id: str
    kind: StepKind
    sql: str
    remaining_count: int


@dataclass
class Funnel:
    steps: list[FunnelStep]
    final_cohort: Cohort

    def to_document(self) -> dict:
        return {
            "steps": [
                {
                    "step_index": s.step_index,
                    "criterion_id": s.criterion_id,
                    "kind": s.kind.value,
                    "remaining_count": s.remaining_count,
                    "sql": s.sql,
                }
                for s in self.steps
            ],
            "final_cohort_size": len(self.final_cohort),
        }


def compute_funnel(
    index_cohort: Cohort,
    criterion_cohorts: list[tuple[str, StepKind, set[int]]],
    index_sql: str = "",
    criterion_sql: dict[str, str] | None = None,
) -> Funnel:
    """Fold criterion patient sets over the index cohort.

    Step 0 is the index cohort; every inclusion intersects, every
    exclusion subtracts. Empty intermediate sets are valid.
    """
    criterion_sql = criterion_sql or {}
    current = set(index_cohort.person_ids)
    steps = [
        FunnelStep(
            step_index=0,
            criterion_id="index",
            kind=StepKind.INDEX,
            sql=index_sql,
            remaining_count=len(current),
        )
    ]
    for i, (criterion_id, kind, person_ids) in enumerate(criterion_cohorts, start=1):
        if kind == StepKind.INCLUSION:
            current &= person_ids
        elif kind == StepKind.EXCLUSION:
            current -= person_ids
        else:
            raise ValueError(f"criterion step kind must be INCLUSION or EXCLUSION, got {kind}")
        steps.append(
            FunnelStep(
                step_index=i,
                criterion_id=criterion_id,
                kind=kind,
                sql=criterion_sql.get(criterion_id, ""),
                remaining_count=len(current),
            )
        )
    return Funnel(steps=steps, final_cohort=index_cohort.restrict(current))


def funnel_similarity(funnel_final: Cohort, monolithic: Cohort) -> float:
    """Normalized cohort size similarity: min(|A|,|B|) / max(|A|,|B|)."""
    a, b = len(funnel_final), len(monolithic)
    if a == 0 and b == 0:
        return 1.0
    if a == 0 or b == 0:
        return 0.0
    return min(a, b) / max(a, b)
