import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from cohortgen.assets import ask_kb_path, coho_kb_path
from cohortgen.cli import main

from conftest import CONFIGS, DEMO_CRITERIA


@pytest.fixture()
def runner():
    return CliRunner()


def write_mock_config(tmp_path: Path, n_persons: int = 300) -> Path:
    cfg = tmp_path / "config.yaml"
    cfg.write_text(
        "llm:\n"
        "  kind: mock\n"
        f"  transcript: {CONFIGS / 'demo_transcript.json'}\n"
        "backend:\n"
        "  kind: synthetic\n"
        "  seed: 7\n"
        f"  n_persons: {n_persons}\n",
        encoding="utf-8",
    )
    return cfg


def test_generate_writes_outputs(runner, tmp_path):
    cfg = write_mock_config(tmp_path)
    criteria = tmp_path / "criteria.txt"
    criteria.write_text(DEMO_CRITERIA, encoding="utf-8")
    out_dir = tmp_path / "out"
    result = runner.invoke(
        main,
        ["generate", "--config", str(cfg), "--criteria", str(criteria),
         "--strategy", "rag_ac", "--out-dir", str(out_dir)],
    )
    assert result.exit_code == 0, result.output
    assert (out_dir / "cohort.csv").exists()
    assert (out_dir / "funnel.json").exists()
    assert (out_dir / "generated.sql").exists()
    funnel_doc = json.loads((out_dir / "funnel.json").read_text())
    assert len(funnel_doc["steps"]) == 8
    cohort_lines = (out_dir / "cohort.csv").read_text().splitlines()
    assert cohort_lines[0] == "person_id,index_date"
    assert len(cohort_lines) - 1 == funnel_doc["final_cohort_size"]


def test_generate_unknown_strategy_errors(runner, tmp_path):
    cfg = write_mock_config(tmp_path)
    criteria = tmp_path / "criteria.txt"
    criteria.write_text(DEMO_CRITERIA, encoding="utf-8")
    result = runner.invoke(
        main, ["generate", "--config", str(cfg), "--criteria", str(criteria),
               "--strategy", "nope"],
    )
    assert result.exit_code != 0
    assert "rag_ac" in result.output


def test_funnel_renders_bars(runner, tmp_path):
    doc = {
        "steps": [
            {"step_index": 0, "criterion_id": "index", "kind": "INDEX",
             "remaining_count": 100, "sql": ""},
            {"step_index": 1, "criterion_id": "inc-1", "kind": "INCLUSION",
             "remaining_count": 40, "sql": ""},
        ],
        "final_cohort_size": 40,
    }
    path = tmp_path / "funnel.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    result = runner.invoke(main, ["funnel", "--funnel-file", str(path)])
    assert result.exit_code == 0
    assert "INDEX" in result.output
    assert "final cohort: 40" in result.output


def test_kb_stats_command(runner):
    result = runner.invoke(main, ["kb", "stats", "--path", str(ask_kb_path()), "--kind", "ask"])
    assert result.exit_code == 0, result.output
    assert "Number of samples            115" in result.output
    assert "Counting conventions" in result.output


def test_kb_stats_coho(runner):
    result = runner.invoke(main, ["kb", "stats", "--path", str(coho_kb_path()), "--kind", "coho"])
    assert result.exit_code == 0, result.output
    assert "Number of samples            108" in result.output


def test_synth_creates_database(runner, tmp_path):
    out = tmp_path / "omop.sqlite"
    result = runner.invoke(main, ["synth", "--seed", "3", "--persons", "50", "--out", str(out)])
    assert result.exit_code == 0, result.output
    import sqlite3

    conn = sqlite3.connect(out)
    assert conn.execute("SELECT COUNT(*) FROM person").fetchone()[0] == 50


def test_synth_refuses_overwrite(runner, tmp_path):
    out = tmp_path / "omop.sqlite"
    out.write_text("existing")
    result = runner.invoke(main, ["synth", "--out", str(out)])
    assert result.exit_code != 0


def test_validate_command(runner, tmp_path):
    good = tmp_path / "good.txt"
    good.write_text(DEMO_CRITERIA, encoding="utf-8")
    result = runner.invoke(main, ["validate", "--criteria", str(good)])
    assert result.exit_code == 0
    assert "4 inclusion, 3 exclusion" in result.output

    bad = tmp_path / "bad.txt"
    bad.write_text("free text with no headings", encoding="utf-8")
    result = runner.invoke(main, ["validate", "--criteria", str(bad)])
    assert result.exit_code == 1


def test_evaluate_smoke_on_replayed_references(runner, tmp_path):
    # replay-style evaluation: the mock echoes each sample's reference
    # SQL, so samples with a nonempty reference cohort score perfectly
    import json as _json

    from cohortgen.config import build_pipeline
    from cohortgen.kb import KBKind, load_kb
    from conftest import demo_config

    probe = build_pipeline(demo_config(n_persons=400, seed=5))
    entries = load_kb(coho_kb_path(), KBKind.COHO)
    chosen = []
    for entry in entries:
        if len(probe.reference_cohort(entry.sql)) > 0:
            chosen.append(entry)
        if len(chosen) == 2:
            break
    assert len(chosen) == 2, "no KB sample yields a nonempty cohort on this backend"

    turns = [
        {"contains": e.natural_text.splitlines()[0], "response": f"```sql\n{e.sql}\n```"}
        for e in chosen
    ]
    transcript = tmp_path / "transcript.json"
    transcript.write_text(_json.dumps({"turns": turns}), encoding="utf-8")
    cfg = tmp_path / "config.yaml"
    cfg.write_text(
        "llm:\n"
        "  kind: mock\n"
        f"  transcript: {transcript}\n"
        "backend:\n"
        "  kind: synthetic\n"
        "  seed: 5\n"
        "  n_persons: 400\n",
        encoding="utf-8",
    )
    report_path = tmp_path / "report.json"
    result = runner.invoke(
        main,
        ["evaluate", "--config", str(cfg), "--strategies", "zs",
         "--samples", ",".join(e.id for e in chosen),
         "--report-json", str(report_path)],
    )
    assert result.exit_code == 0, result.output
    assert "Valid SQL" in result.output
    doc = json.loads(report_path.read_text())
    assert doc["rows"][0]["strategy"] == "zs"
    assert doc["rows"][0]["Valid SQL"] == 100.0
    assert doc["rows"][0]["F1"] == 100.0