"""Knowledge base loading, validation, and complexity statistics.

Two KBs feed retrieval: EpiAskKB (question-SQL pairs) and EpiCohoKB
(cohort criteria-SQL pairs). The file format is line-delimited JSON,
one record per line: id, kind, natural_text, masked_text, sql,
entities [{start, end, text, domain}], optional embedding.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

from .masking import Domain, EntitySpan
from .sql_complexity import SqlAnalysisError, SqlComplexity, analyze_sql


class KBKind(str, enum.Enum):
    ASK = "ASK"
    COHO = "COHO"

    @classmethod
    def from_string(cls, value: str) -> "KBKind":
        try:
            return cls(value.strip().upper())
        except ValueError:
            raise ValueError(f"unknown KB kind: {value!r} (expected ask or coho)") from None


class KBLoadError(ValueError):
    """Malformed KB file; message names the offending record index."""


class KBValidationError(ValueError):
    """Structurally valid records that violate KB invariants."""


@dataclass
class KBEntry:
    id: str
    kind: KBKind
    natural_text: str
    masked_text: str
    sql: str
    entities: list[EntitySpan] = field(default_factory=list)
    embedding: list[float] | None = None

    def validate(self) -> None:
        if not self.id:
            raise KBValidationError("entry id must be nonempty")
        if not self.natural_text:
            raise KBValidationError(f"entry {self.id}: natural_text must be nonempty")
        if not self.sql:
            raise KBValidationError(f"entry {self.id}: sql must be nonempty")
        if self.embedding is not None:
            norm = math.sqrt(sum(x * x for x in self.embedding))
            if abs(norm - 1.0) > 1e-6:
                raise KBValidationError(
                    f"entry {self.id}: embedding norm {norm:.8f} is not 1"
                )
        for span in self.entities:
            span.validate(self.natural_text)


def _entry_from_record(record: dict, index: int) -> KBEntry:
    try:
        entities = [
            EntitySpan(
                start=int(e["start"]),
                end=int(e["end"]),
                text=str(e["text"]),
                domain=Domain.from_string(e["domain"]),
            )
            for e in record.get("entities", [])
        ]
        embedding = record.get("embedding")
        if embedding is not None:
            embedding = [float(x) for x in embedding]
        return KBEntry(
            id=str(record["id"]),
            kind=KBKind.from_string(record["kind"]),
            natural_text=str(record["natural_text"]),
            masked_text=str(record["masked_text"]),
            sql=str(record["sql"]),
            entities=entities,
            embedding=embedding,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise KBLoadError(f"malformed record at index {index}: {exc}") from exc


def load_kb(path: str | Path, kind: KBKind) -> list[KBEntry]:
    """Load and validate a KB file; rejects duplicate ids and kind mismatches."""
    path = Path(path)
    entries: list[KBEntry] = []
    seen: set[str] = set()
    with path.open(encoding="utf-8") as fh:
        for index, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise KBLoadError(f"malformed record at index {index}: {exc}") from exc
            entry = _entry_from_record(record, index)
            if entry.kind != kind:
                raise KBLoadError(
                    f"malformed record at index {index}: kind {entry.kind.value} "
                    f"does not match requested {kind.value}"
                )
            entry.validate()
            if entry.id in seen:
                raise KBValidationError(f"duplicate entry id: {entry.id}")
            seen.add(entry.id)
            entries.append(entry)
    return entries


def save_kb(entries: list[KBEntry], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for entry in entries:
            record = {
                "id": entry.id,
                "kind": entry.kind.value,
                "natural_text": entry.natural_text,
                "masked_text": entry.masked_text,
                "sql": entry.sql,
                "entities": [
                    {"start": s.start, "end": s.end, "text": s.text, "domain": s.domain.value}
                    for s in entry.entities
                ],
            }
            if entry.embedding is not None:
                record["embedding"] = entry.embedding
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    std: float


@dataclass(frozen=True)
class KBStats:
    n_samples: int
    n_distinct_tables: int
    n_distinct_columns: int
    tables_referenced: MetricSummary
    join_count: MetricSummary
    logical_conditions: MetricSummary
    char_length: MetricSummary
    pct_with_aggregation: float
    pct_with_datetime: float
    pct_with_subquery: float
    failed_ids: tuple[str, ...] = ()


def _summary(values: list[float]) -> MetricSummary:
    n = len(values)
    mean = sum(values) / n
    if n < 2:
        return MetricSummary(mean=mean, std=0.0)
    var = sum((v - mean) ** 2 for v in values) / (n - 1)  # sample std, n-1
    return MetricSummary(mean=mean, std=math.sqrt(var))


def kb_stats(entries: list[KBEntry]) -> KBStats:
    """Aggregate per-entry complexity into dataset-level statistics.

    Entries whose SQL fails analysis are excluded from the aggregates
    and surfaced in failed_ids; n_samples counts analyzed entries only.
    """
    if not entries:
        raise ValueError("cannot compute statistics over an empty KB")
    analyzed: list[SqlComplexity] = []
    failed: list[str] = []
    tables: set[str] = set()
    columns: set[str] = set()
    flags = {"agg": 0, "dt": 0, "subq": 0}
    for entry in entries:
        try:
            c = analyze_sql(entry.sql)
        except SqlAnalysisError:
            failed.append(entry.id)
            continue
        analyzed.append(c)
        tables |= c.table_names
        columns |= c.column_names
        flags["agg"] += c.has_aggregation
        flags["dt"] += c.has_datetime_ops
        flags["subq"] += c.has_subquery
    if not analyzed:
        raise ValueError("no entry produced an analyzable SQL statement")
    n = len(analyzed)
    return KBStats(
        n_samples=n,
        n_distinct_tables=len(tables),
        n_distinct_columns=len(columns),
        tables_referenced=_summary([c.tables_referenced for c in analyzed]),
        join_count=_summary([c.join_count for c in analyzed]),
        logical_conditions=_summary([c.logical_conditions for c in analyzed]),
        char_length=_summary([c.char_length for c in analyzed]),
        pct_with_aggregation=100.0 * flags["agg"] / n,
        pct_with_datetime=100.0 * flags["dt"] / n,
        pct_with_subquery=100.0 * flags["subq"] / n,
        failed_ids=tuple(failed),
    )


def format_stats_report(stats: KBStats, title: str = "Knowledge base statistics") -> str:
    """Human-readable stats report, including the counting conventions."""
    lines = [
        title,
        "=" * len(title),
        f"Number of samples            {stats.n_samples}",
        f"Distinct tables used         {stats.n_distinct_tables}",
        f"Distinct columns used        {stats.n_distinct_columns}",
        f"Tables referenced            {stats.tables_referenced.mean:.1f} ± {stats.tables_referenced.std:.1f}",
        f"Joins per query              {stats.join_count.mean:.1f} ± {stats.join_count.std:.1f}",
        f"Logical conditions           {stats.logical_conditions.mean:.1f} ± {stats.logical_conditions.std:.1f}",
        f"SQL length [chars]           {stats.char_length.mean:.0f} ± {stats.char_length.std:.0f}",
        f"Queries with aggregation     {stats.pct_with_aggregation:.1f}%",
        f"Queries with date/time ops   {stats.pct_with_datetime:.1f}%",
        f"Queries with subqueries      {stats.pct_with_subquery:.1f}%",
    ]
    if stats.failed_ids:
        lines.append(f"Entries excluded (analysis failed): {', '.join(stats.failed_ids)}")
    lines += [
        "",
        "Counting conventions: tables count FROM/JOIN references including",
        "repeats (CTE names excluded); joins count JOIN keywords plus extra",
        "comma-separated FROM items; logical conditions count AND/OR/NOT",
        "tokens inside WHERE/HAVING/ON; standard deviations use n-1.",
    ]
    return "\n".join(lines)
