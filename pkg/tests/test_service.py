"""HTTP service tests against the scripted demo pipeline."""

import time

import pytest
from fastapi.testclient import TestClient

from cohortgen.config import build_pipeline
from cohortgen.service import JOB_STATES, JobStore, create_app

from conftest import DEMO_CRITERIA, demo_config


@pytest.fixture(scope="module")
def client():
    pipeline = build_pipeline(demo_config(n_persons=300))
    return TestClient(create_app(pipeline))


def wait_for_terminal(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    observed = []
    while time.time() < deadline:
        state = client.get(f"/jobs/{job_id}").json()["state"]
        observed.append(state)
        if state in ("DONE", "FAILED"):
            return state, observed
        time.sleep(0.05)
    raise TimeoutError(f"job {job_id} still {observed[-1]} after {timeout}s")


def test_healthz(client):
    assert client.get("/healthz").json() == {"status": "ok"}


def test_submit_and_complete_job(client):
    resp = client.post("/jobs", json={"criteria_text": DEMO_CRITERIA, "strategy": "rag_ac"})
    assert resp.status_code == 202
    job_id = resp.json()["job_id"]
    state, observed = wait_for_terminal(client, job_id)
    assert state == "DONE"
    # states only ever move forward in the listed order
    order = {s: i for i, s in enumerate(JOB_STATES)}
    indices = [order[s] for s in observed]
    assert indices == sorted(indices)

    job = client.get(f"/jobs/{job_id}").json()
    assert job["cohort_size"] > 0

    funnel = client.get(f"/jobs/{job_id}/funnel").json()
    assert len(funnel["steps"]) == 8  # index + 4 inclusions + 3 exclusions
    assert funnel["steps"][0]["kind"] == "INDEX"

    cohort = client.get(f"/jobs/{job_id}/cohort")
    assert cohort.headers["content-type"].startswith("text/csv")
    assert cohort.text.splitlines()[0] == "person_id,index_date"
    assert len(cohort.text.splitlines()) - 1 == job["cohort_size"]

    sql = client.get(f"/jobs/{job_id}/sql").json()
    assert "SELECT" in sql["resolved"]
    assert sql["mappings"]


def test_resubmission_returns_new_job(client):
    payload = {"criteria_text": DEMO_CRITERIA, "strategy": "zs"}
    a = client.post("/jobs", json=payload).json()["job_id"]
    b = client.post("/jobs", json=payload).json()["job_id"]
    assert a != b
    wait_for_terminal(client, a)
    wait_for_terminal(client, b)


def test_empty_criteria_rejected(client):
    resp = client.post("/jobs", json={"criteria_text": "   ", "strategy": "zs"})
    assert resp.status_code == 422


def test_unknown_strategy_lists_valid_values(client):
    resp = client.post("/jobs", json={"criteria_text": DEMO_CRITERIA, "strategy": "xxl"})
    assert resp.status_code == 422
    assert "rag_ac" in resp.json()["detail"]


def test_malformed_criteria_rejected_with_diagnostics(client):
    resp = client.post("/jobs", json={"criteria_text": "no headings here", "strategy": "zs"})
    assert resp.status_code == 422
    assert "criteria_text" in resp.json()["detail"]


def test_unknown_job_404(client):
    assert client.get("/jobs/nope").status_code == 404
    assert client.get("/jobs/nope/funnel").status_code == 404


def test_outputs_before_done_conflict(client):
    # a store-level QUEUED job that no worker is running stays queued
    app_state = client.app.state.service
    app_state.store.create("frozen-job", "zs", DEMO_CRITERIA)
    resp = client.get("/jobs/frozen-job/cohort")
    assert resp.status_code == 409
    assert "QUEUED" in resp.json()["detail"]


def test_failed_job_reports_error(client):
    # consume transcript-independent failure: unparseable criteria passes the
    # submit guard only if structured, so fail in generation instead by
    # clearing the transcript for a fresh pipeline
    pipeline = build_pipeline(demo_config(n_persons=100))
    pipeline.llm.turns.clear()
    local = TestClient(create_app(pipeline))
    job_id = local.post(
        "/jobs", json={"criteria_text": DEMO_CRITERIA, "strategy": "zs"}
    ).json()["job_id"]
    deadline = time.time() + 20
    while time.time() < deadline:
        job = local.get(f"/jobs/{job_id}").json()
        if job["state"] in ("DONE", "FAILED"):
            break
        time.sleep(0.05)
    assert job["state"] == "FAILED"
    assert job["error"]
    assert local.get(f"/jobs/{job_id}/funnel").status_code == 409


def test_kb_stats_endpoint(client):
    stats = client.get("/kb/stats").json()
    assert stats["ask"]["n_samples"] == 115
    assert stats["coho"]["n_samples"] == 108


def test_job_store_persists_across_instances(tmp_path):
    path = tmp_path / "jobs.sqlite"
    store = JobStore(path)
    store.create("j1", "zs", "text")
    store.finish("j1", {"cohort_size": 5})
    reopened = JobStore(path)
    record = reopened.get("j1")
    assert record.state == "DONE"
    assert record.outputs["cohort_size"] == 5


def test_job_store_state_never_regresses(tmp_path):
    store = JobStore(tmp_path / "jobs.sqlite")
    store.create("j1", "zs", "text")
    store.set_state("j1", "EXECUTING")
    store.set_state("j1", "PARSING")  # late update must not regress
    assert store.get("j1").state == "EXECUTING"


def test_job_store_retention_purge(tmp_path):
    import sqlite3

    store = JobStore(tmp_path / "jobs.sqlite")
    store.create("old", "zs", "text")
    store.create("new", "zs", "text")
    # age the old job beyond the retention window
    conn = sqlite3.connect(tmp_path / "jobs.sqlite")
    conn.execute("UPDATE jobs SET created_at = '2000-01-01T00:00:00' WHERE job_id = 'old'")
    conn.commit()
    conn.close()
    removed = store.purge_older_than(30)
    assert removed == 1
    assert store.get("old") is None
    assert store.get("new") is not None
