"""Pluggable SQL execution backend.

The reference backend is embedded SQLite over the synthetic OMOP schema;
remote warehouses are supported by the same interface with a different
dialect tag and pass-through execution (no transpilation).
"""

from __future__ import annotations

import datetime as dt
import sqlite3
import threading
from dataclasses import dataclass
from pathlib import Path

from .funnel import Cohort


class ExecutionError(RuntimeError):
    """Engine rejection, carrying the verbatim diagnostic for self-healing."""


class ShapeError(RuntimeError):
    """Result set missing the person_id / index_date cohort columns."""


@dataclass
class QueryResult:
    columns: list[str]
    rows: list[tuple]

    def __len__(self) -> int:
        return len(self.rows)


class SqlBackend:
    """Interface for SQL execution backends."""

    dialect: str = "sqlite"

    def execute(self, sql: str) -> QueryResult:
        raise NotImplementedError


class SqliteBackend(SqlBackend):
    """Embedded SQLite backend; one connection, serialized statements."""

    def __init__(self, path: str | Path = ":memory:", dialect: str = "sqlite"):
        self.path = str(path)
        self.dialect = dialect
        self._conn = sqlite3.connect(self.path, check_same_thread=False)
        self._lock = threading.Lock()

    def execute(self, sql: str) -> QueryResult:
        with self._lock:
            try:
                cursor = self._conn.execute(sql)
                rows = cursor.fetchall()
            except sqlite3.Error as exc:
                raise ExecutionError(str(exc)) from exc
        columns = [d[0] for d in cursor.description] if cursor.description else []
        return QueryResult(columns=columns, rows=rows)

    def executescript(self, script: str) -> None:
        with self._lock:
            self._conn.executescript(script)

    def executemany(self, sql: str, rows) -> None:
        with self._lock:
            self._conn.executemany(sql, rows)
            self._conn.commit()

    def close(self) -> None:
        self._conn.close()


def execute(backend: SqlBackend, sql: str) -> QueryResult:
    """Run one statement; ExecutionError carries the engine's diagnostic."""
    return backend.execute(sql)


def _parse_date(value) -> dt.date:
    if isinstance(value, dt.date) and not isinstance(value, dt.datetime):
        return value
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, str):
        return dt.date.fromisoformat(value[:10])
    raise ShapeError(f"index_date value {value!r} is not a calendar date")


def cohort_from_result(result: QueryResult) -> Cohort:
    """Interpret a result set as a cohort (person_id, index_date).

    Column matching is case-insensitive. Duplicate person_ids collapse to
    the earliest index date, keeping one row per patient.
    """
    lowered = [c.lower() for c in result.columns]
    if "person_id" not in lowered or "index_date" not in lowered:
        raise ShapeError(
            f"cohort query must return person_id and index_date; got {result.columns}"
        )
    pid_idx = lowered.index("person_id")
    date_idx = lowered.index("index_date")
    rows: dict[int, dt.date] = {}
    for row in result.rows:
        pid_raw, date_raw = row[pid_idx], row[date_idx]
        if pid_raw is None or date_raw is None:
            raise ShapeError("cohort rows must not contain NULL person_id or index_date")
        pid = int(pid_raw)
        date = _parse_date(date_raw)
        if pid not in rows or date < rows[pid]:
            rows[pid] = date
    return Cohort(rows=rows)


def fetch_cohort(backend: SqlBackend, sql: str) -> Cohort:
    """Execute cohort SQL and validate the result shape."""
    return cohort_from_result(execute(backend, sql))


def fetch_person_ids(backend: SqlBackend, sql: str) -> set[int]:
    """Execute a per-criterion query and collect its person_id set."""
    result = execute(backend, sql)
    lowered = [c.lower() for c in result.columns]
    if "person_id" not in lowered:
        raise ShapeError(f"criterion query must return person_id; got {result.columns}")
    idx = lowered.index("person_id")
    return {int(row[idx]) for row in result.rows if row[idx] is not None}
