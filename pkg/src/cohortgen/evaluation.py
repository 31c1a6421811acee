"""Cohort evaluation: patient-level and date-level metrics, zero-scored
failures, leave-one-out retrieval, and cross-sample aggregation.

Failed generated queries (invalid SQL or empty results) contribute zero
to every metric mean; samples whose *reference* SQL fails are excluded
with a note instead, since they measure the harness, not the generator.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

from .funnel import Cohort
from .generation import Strategy


@dataclass(frozen=True)
class EvalConfig:
    window_days: int = 30
    strategies: tuple[Strategy, ...] = (Strategy.ZS, Strategy.RAG_A, Strategy.RAG_C, Strategy.RAG_AC)
    leave_one_out: bool = True

    def __post_init__(self):
        if self.window_days < 0:
            raise ValueError("window_days must be >= 0")


def patient_metrics(generated: Cohort, reference: Cohort) -> tuple[float, float, float]:
    """Precision, recall, F1 over person-id sets."""
    g, r = generated.person_ids, reference.person_ids
    overlap = len(g & r)
    precision = overlap / len(g) if g else 0.0
    recall = overlap / len(r) if r else 0.0
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1


def size_similarity(generated: Cohort, reference: Cohort) -> float:
    """min(|G|,|R|) / max(|G|,|R|); both empty -> 1, exactly one empty -> 0."""
    a, b = len(generated), len(reference)
    if a == 0 and b == 0:
        return 1.0
    if a == 0 or b == 0:
        return 0.0
    return min(a, b) / max(a, b)


def date_metrics(
    generated: Cohort, reference: Cohort, window_days: int = 30
) -> tuple[float, float]:
    """Index-date agreement over matched patients.

    exact = fraction of matched patients with identical dates; within =
    fraction whose dates differ by at most window_days (inclusive).
    No matched patients -> (0, 0).
    """
    matched = generated.person_ids & reference.person_ids
    if not matched:
        return 0.0, 0.0
    exact = 0
    within = 0
    for pid in matched:
        delta = abs((generated.rows[pid] - reference.rows[pid]).days)
        if delta == 0:
            exact += 1
        if delta <= window_days:
            within += 1
    return exact / len(matched), within / len(matched)


@dataclass(frozen=True)
class SampleResult:
    sample_id: str
    valid_sql: bool
    retrieved: bool
    precision: float
    recall: float
    f1: float
    size_similarity: float
    date_exact: float
    date_within_window: float

    @classmethod
    def zeros(cls, sample_id: str, valid_sql: bool = False) -> "SampleResult":
        return cls(
            sample_id=sample_id,
            valid_sql=valid_sql,
            retrieved=False,
            precision=0.0,
            recall=0.0,
            f1=0.0,
            size_similarity=0.0,
            date_exact=0.0,
            date_within_window=0.0,
        )


@dataclass
class SampleOutcome:
    """What one pipeline run produced for one sample: executable-SQL flag
    and the generated cohort (None when nothing executed)."""

    valid_sql: bool
    cohort: Cohort | None


def score_sample(outcome: SampleOutcome, reference: Cohort, cfg: EvalConfig) -> SampleResult:
    """Score a pipeline outcome against the reference cohort.

    valid_sql means generation plus healing produced SQL the backend
    executed; retrieved additionally requires a nonempty, cohort-shaped
    result. Anything less scores zero across the board.
    """
    if not outcome.valid_sql or outcome.cohort is None:
        return SampleResult.zeros("", valid_sql=False)
    if len(outcome.cohort) == 0:
        return SampleResult.zeros("", valid_sql=True)
    precision, recall, f1 = patient_metrics(outcome.cohort, reference)
    exact, within = date_metrics(outcome.cohort, reference, cfg.window_days)
    return SampleResult(
        sample_id="",
        valid_sql=True,
        retrieved=True,
        precision=precision,
        recall=recall,
        f1=f1,
        size_similarity=size_similarity(outcome.cohort, reference),
        date_exact=exact,
        date_within_window=within,
    )


REPORT_COLUMNS = (
    "Valid SQL",
    "Retrieved",
    "F1",
    "Prec.",
    "Recall",
    "Size sim.",
    "Date overlap",
    "Within 30d",
)


@dataclass
class StrategyReport:
    strategy: Strategy
    n_samples: int
    means: dict[str, float]  # column -> percentage


@dataclass
class EvalReport:
    rows: list[StrategyReport]
    excluded_samples: list[tuple[str, str]] = field(default_factory=list)  # (id, reason)

    def to_document(self) -> dict:
        return {
            "columns": list(REPORT_COLUMNS),
            "rows": [
                {"strategy": r.strategy.value, "n_samples": r.n_samples, **r.means}
                for r in self.rows
            ],
            "excluded_samples": [
                {"sample_id": sid, "reason": reason} for sid, reason in self.excluded_samples
            ],
        }

    def format_table(self) -> str:
        header = f"{'Strategy':<10}" + "".join(f"{c:>14}" for c in REPORT_COLUMNS)
        lines = [header, "-" * len(header)]
        for row in self.rows:
            cells = "".join(f"{row.means[c]:>14.1f}" for c in REPORT_COLUMNS)
            lines.append(f"{row.strategy.value:<10}{cells}")
        if self.excluded_samples:
            lines.append("")
            lines.append("Excluded samples (reference SQL failed):")
            lines.extend(f"  {sid}: {reason}" for sid, reason in self.excluded_samples)
        return "\n".join(lines)


def aggregate_results(
    per_strategy: dict[Strategy, list[SampleResult]],
    excluded: list[tuple[str, str]] | None = None,
) -> EvalReport:
    """Per-strategy means over all samples, zeros included, as percentages."""
    rows = []
    for strategy, results in per_strategy.items():
        n = len(results)
        if n == 0:
            means = {c: 0.0 for c in REPORT_COLUMNS}
        else:
            means = {
                "Valid SQL": 100.0 * sum(r.valid_sql for r in results) / n,
                "Retrieved": 100.0 * sum(r.retrieved for r in results) / n,
                "F1": 100.0 * sum(r.f1 for r in results) / n,
                "Prec.": 100.0 * sum(r.precision for r in results) / n,
                "Recall": 100.0 * sum(r.recall for r in results) / n,
                "Size sim.": 100.0 * sum(r.size_similarity for r in results) / n,
                "Date overlap": 100.0 * sum(r.date_exact for r in results) / n,
                "Within 30d": 100.0 * sum(r.date_within_window for r in results) / n,
            }
        rows.append(StrategyReport(strategy=strategy, n_samples=n, means=means))
    return EvalReport(rows=rows, excluded_samples=excluded or [])


@dataclass
class EvalSample:
    sample_id: str
    criteria_text: str
    reference_sql: str


def run_eval(samples: list[EvalSample], pipeline, cfg: EvalConfig) -> EvalReport:
    """Evaluate every sample under every configured strategy.

    `pipeline` supplies two hooks: reference_cohort(sql) and
    run_sample(criteria_text, strategy, exclude_ids) -> SampleOutcome.
    Aborts (raises) if the backend is unreachable, producing no partial
    report; per-sample generated-SQL failures are zero-scored instead.
    """
    pipeline.check_backend()
    references: dict[str, Cohort] = {}
    excluded: list[tuple[str, str]] = []
    usable: list[EvalSample] = []
    for sample in samples:
        try:
            references[sample.sample_id] = pipeline.reference_cohort(sample.reference_sql)
        except Exception as exc:
            excluded.append((sample.sample_id, str(exc)))
            continue
        usable.append(sample)

    per_strategy: dict[Strategy, list[SampleResult]] = {s: [] for s in cfg.strategies}
    for strategy in cfg.strategies:
        for sample in usable:
            exclude_ids = frozenset({sample.sample_id}) if cfg.leave_one_out else frozenset()
            try:
                outcome = pipeline.run_sample(sample.criteria_text, strategy, exclude_ids)
            except Exception:
                outcome = SampleOutcome(valid_sql=False, cohort=None)
            result = score_sample(outcome, references[sample.sample_id], cfg)
            per_strategy[strategy].append(
                SampleResult(**{**result.__dict__, "sample_id": sample.sample_id})
            )
    return aggregate_results(per_strategy, excluded)
