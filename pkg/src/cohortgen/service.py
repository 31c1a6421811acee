"""Job-oriented HTTP service over the pipeline.

Jobs run on a worker pool; clients poll for progress. Job state and
outputs persist in an embedded SQLite store keyed by job_id, so the
service can restart without losing history. State transitions follow
QUEUED -> PARSING -> RETRIEVING -> GENERATING -> NORMALIZING -> HEALING
-> EXECUTING -> FUNNELING -> DONE/FAILED, with stages skipped when the
strategy does not use them.
"""

from __future__ import annotations

import datetime as dt
import json
import sqlite3
import threading
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from fastapi import FastAPI, HTTPException, Response
from pydantic import BaseModel, Field

from .criteria import CriteriaParseError, parse_criteria_text, serialize_criteria
from .generation import Strategy
from .kb import kb_stats, format_stats_report
from .pipeline import CohortPipeline, PipelineError, PipelineResult

JOB_STATES = (
    "QUEUED", "PARSING", "RETRIEVING", "GENERATING", "NORMALIZING",
    "HEALING", "EXECUTING", "FUNNELING", "DONE", "FAILED",
)
_STATE_ORDER = {s: i for i, s in enumerate(JOB_STATES)}


@dataclass
class JobRecord:
    job_id: str
    state: str
    strategy: str
    criteria_text: str
    created_at: str
    outputs: dict | None = None
    error: str | None = None


class JobStore:
    """Embedded persistent job store; serialized writes, concurrent reads."""

    def __init__(self, path: str | Path = ":memory:"):
        self._conn = sqlite3.connect(str(path), check_same_thread=False)
        self._lock = threading.Lock()
        with self._lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS jobs ("
                "job_id TEXT PRIMARY KEY, state TEXT NOT NULL, strategy TEXT NOT NULL, "
                "criteria_text TEXT NOT NULL, created_at TEXT NOT NULL, "
                "outputs TEXT, error TEXT)"
            )
            self._conn.commit()

    def create(self, job_id: str, strategy: str, criteria_text: str) -> None:
        with self._lock:
            self._conn.execute(
                "INSERT INTO jobs (job_id, state, strategy, criteria_text, created_at) "
                "VALUES (?, 'QUEUED', ?, ?, ?)",
                (job_id, strategy, criteria_text, dt.datetime.utcnow().isoformat()),
            )
            self._conn.commit()

    def set_state(self, job_id: str, state: str) -> None:
        # states only move forward; a late-arriving stage update never
        # regresses an already-terminal job
        with self._lock:
            row = self._conn.execute(
                "SELECT state FROM jobs WHERE job_id = ?", (job_id,)
            ).fetchone()
            if row is None:
                return
            if _STATE_ORDER[state] < _STATE_ORDER[row[0]]:
                return
            self._conn.execute(
                "UPDATE jobs SET state = ? WHERE job_id = ?", (state, job_id)
            )
            self._conn.commit()

    def finish(self, job_id: str, outputs: dict) -> None:
        with self._lock:
            self._conn.execute(
                "UPDATE jobs SET state = 'DONE', outputs = ? WHERE job_id = ?",
                (json.dumps(outputs), job_id),
            )
            self._conn.commit()

    def fail(self, job_id: str, error: str) -> None:
        with self._lock:
            self._conn.execute(
                "UPDATE jobs SET state = 'FAILED', error = ? WHERE job_id = ?",
                (error, job_id),
            )
            self._conn.commit()

    def get(self, job_id: str) -> JobRecord | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT job_id, state, strategy, criteria_text, created_at, outputs, error "
                "FROM jobs WHERE job_id = ?",
                (job_id,),
            ).fetchone()
        if row is None:
            return None
        return JobRecord(
            job_id=row[0],
            state=row[1],
            strategy=row[2],
            criteria_text=row[3],
            created_at=row[4],
            outputs=json.loads(row[5]) if row[5] else None,
            error=row[6],
        )

    def purge_older_than(self, days: int) -> int:
        cutoff = (dt.datetime.utcnow() - dt.timedelta(days=days)).isoformat()
        with self._lock:
            cur = self._conn.execute("DELETE FROM jobs WHERE created_at < ?", (cutoff,))
            self._conn.commit()
            return cur.rowcount


def result_outputs(result: PipelineResult) -> dict:
    return {
        "cohort_csv": result.cohort.to_csv(),
        "cohort_size": len(result.cohort),
        "funnel": result.funnel.to_document() if result.funnel else None,
        "sql": {
            "generated": result.generated.sql,
            "resolved": result.resolved_sql,
        },
        "mappings": [
            {
                "term": m.term,
                "domain": m.domain.value,
                "chosen": m.chosen,
                "verified": m.verified,
                "candidates": [
                    {"concept_id": cid, "score": round(score, 6)}
                    for cid, score in m.candidates
                ],
            }
            for m in result.mappings
        ],
        "healing_attempts": [
            {"sql": a.sql, "error": a.error} for a in result.healing_attempts
        ],
        "criteria": serialize_criteria(result.criteria),
    }


class SubmitRequest(BaseModel):
    criteria_text: str = Field(min_length=1)
    strategy: str = "rag_ac"


class ServiceState:
    def __init__(self, pipeline: CohortPipeline, store: JobStore, max_workers: int = 4):
        self.pipeline = pipeline
        self.store = store
        self.executor = ThreadPoolExecutor(max_workers=max_workers)

    def submit(self, criteria_text: str, strategy: Strategy) -> str:
        job_id = uuid.uuid4().hex[:12]
        self.store.create(job_id, strategy.value, criteria_text)
        self.executor.submit(self._run, job_id, criteria_text, strategy)
        return job_id

    def _run(self, job_id: str, criteria_text: str, strategy: Strategy) -> None:
        try:
            result = self.pipeline.run(
                criteria_text,
                strategy,
                on_stage=lambda stage: self.store.set_state(job_id, stage),
            )
            self.store.finish(job_id, result_outputs(result))
        except PipelineError as exc:
            self.store.fail(job_id, str(exc))
        except Exception as exc:  # defensive: a job must always terminate
            self.store.fail(job_id, f"unexpected: {exc}")


def create_app(pipeline: CohortPipeline, store: JobStore | None = None) -> FastAPI:
    state = ServiceState(pipeline, store or JobStore())
    app = FastAPI(title="cohortgen", version="0.1.0")
    app.state.service = state

    def get_job_or_404(job_id: str) -> JobRecord:
        record = state.store.get(job_id)
        if record is None:
            raise HTTPException(status_code=404, detail=f"unknown job: {job_id}")
        return record

    def require_done(record: JobRecord) -> JobRecord:
        if record.state == "FAILED":
            raise HTTPException(status_code=409, detail=f"job failed: {record.error}")
        if record.state != "DONE":
            raise HTTPException(
                status_code=409, detail=f"job not finished; current state {record.state}"
            )
        return record

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/jobs", status_code=202)
    def submit_job(request: SubmitRequest):
        if not request.criteria_text.strip():
            raise HTTPException(status_code=422, detail="criteria_text must be nonempty")
        try:
            strategy = Strategy.from_string(request.strategy)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        try:
            parse_criteria_text(request.criteria_text)
        except CriteriaParseError as exc:
            raise HTTPException(status_code=422, detail=f"criteria_text: {exc}") from exc
        job_id = state.submit(request.criteria_text, strategy)
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        record = get_job_or_404(job_id)
        return {
            "job_id": record.job_id,
            "state": record.state,
            "strategy": record.strategy,
            "created_at": record.created_at,
            "error": record.error,
            "cohort_size": (record.outputs or {}).get("cohort_size"),
        }

    @app.get("/jobs/{job_id}/funnel")
    def get_funnel(job_id: str):
        record = require_done(get_job_or_404(job_id))
        return record.outputs["funnel"]

    @app.get("/jobs/{job_id}/cohort")
    def get_cohort(job_id: str):
        record = require_done(get_job_or_404(job_id))
        return Response(content=record.outputs["cohort_csv"], media_type="text/csv")

    @app.get("/jobs/{job_id}/sql")
    def get_sql(job_id: str):
        record = require_done(get_job_or_404(job_id))
        return {
            **record.outputs["sql"],
            "healing_attempts": record.outputs["healing_attempts"],
            "mappings": record.outputs["mappings"],
        }

    @app.get("/kb/stats")
    def get_kb_stats():
        payload = {}
        for name, entries in (
            ("ask", list(pipeline.ask_entries.values())),
            ("coho", list(pipeline.coho_entries.values())),
        ):
            if not entries:
                continue
            stats = kb_stats(entries)
            payload[name] = {
                "n_samples": stats.n_samples,
                "report": format_stats_report(stats, title=f"{name} knowledge base"),
            }
        return payload

    return app
