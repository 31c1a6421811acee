"""Command-line interface: generate, funnel, evaluate, kb stats, synth, serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import AppConfig, build_pipeline
from .criteria import parse_criteria_text
from .evaluation import EvalConfig, EvalSample, run_eval
from .generation import Strategy
from .kb import KBKind, format_stats_report, kb_stats, load_kb
from .service import JobStore, create_app
from .synthdb import SyntheticDbSpec, generate_synthetic_omop


@click.group()
def main():
    """Clinical criteria to OMOP cohorts via retrieval-augmented SQL generation."""


def _load_config(config_path: str | None) -> AppConfig:
    if config_path:
        return AppConfig.from_file(config_path)
    return AppConfig.from_dict({})


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="YAML config file.")
@click.option("--criteria", "criteria_path", type=click.Path(exists=True), required=True,
              help="Structured criteria text file.")
@click.option("--strategy", default="rag_ac", show_default=True,
              help="Prompting strategy: zs, rag_a, rag_c, rag_ac.")
@click.option("--out-dir", type=click.Path(), default="out", show_default=True)
@click.option("--no-funnel", is_flag=True, help="Skip per-criterion funnel generation.")
def generate(config_path, criteria_path, strategy, out_dir, no_funnel):
    """Run the full pipeline for one criteria file; write cohort and funnel."""
    config = _load_config(config_path)
    pipeline = build_pipeline(config)
    criteria_text = Path(criteria_path).read_text(encoding="utf-8")
    try:
        strat = Strategy.from_string(strategy)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc

    result = pipeline.run(criteria_text, strat, with_funnel=not no_funnel,
                          on_stage=lambda s: click.echo(f"[{s}]", err=True))

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cohort.csv").write_text(result.cohort.to_csv(), encoding="utf-8")
    (out / "generated.sql").write_text(result.resolved_sql + "\n", encoding="utf-8")
    (out / "mappings.json").write_text(
        json.dumps(
            [
                {"term": m.term, "domain": m.domain.value, "chosen": m.chosen}
                for m in result.mappings
            ],
            indent=2,
        ),
        encoding="utf-8",
    )
    if result.funnel is not None:
        (out / "funnel.json").write_text(
            json.dumps(result.funnel.to_document(), indent=2), encoding="utf-8"
        )
    click.echo(f"cohort size: {len(result.cohort)}")
    if result.funnel is not None:
        for step in result.funnel.steps:
            click.echo(f"  step {step.step_index} {step.kind.value:<9} "
                       f"{step.criterion_id:<8} remaining {step.remaining_count}")
    click.echo(f"outputs written to {out}/")


@main.command()
@click.option("--funnel-file", type=click.Path(exists=True), required=True,
              help="Funnel JSON document (from generate or the service).")
def funnel(funnel_file):
    """Render a funnel document as a text bar chart."""
    doc = json.loads(Path(funnel_file).read_text(encoding="utf-8"))
    steps = doc["steps"]
    if not steps:
        click.echo("(empty funnel)")
        return
    top = max(step["remaining_count"] for step in steps) or 1
    for step in steps:
        bar = "#" * max(1, round(40 * step["remaining_count"] / top)) if step["remaining_count"] else ""
        click.echo(
            f"{step['step_index']:>3} {step['kind']:<9} {step['criterion_id']:<10} "
            f"{step['remaining_count']:>8}  {bar}"
        )
    click.echo(f"final cohort: {doc['final_cohort_size']}")


@main.group()
def kb():
    """Knowledge base utilities."""


@kb.command("stats")
@click.option("--path", "kb_path", type=click.Path(exists=True), required=True)
@click.option("--kind", type=click.Choice(["ask", "coho"]), required=True)
def kb_stats_cmd(kb_path, kind):
    """Print complexity statistics for a KB file."""
    entries = load_kb(kb_path, KBKind.from_string(kind))
    if not entries:
        click.echo("knowledge base is empty")
        return
    stats = kb_stats(entries)
    click.echo(format_stats_report(stats, title=f"{Path(kb_path).name} ({kind})"))


@main.command()
@click.option("--seed", default=7, show_default=True, type=int)
@click.option("--persons", default=1000, show_default=True, type=int)
@click.option("--out", "out_path", type=click.Path(), required=True,
              help="SQLite file to create.")
def synth(seed, persons, out_path):
    """Generate a seeded synthetic OMOP database."""
    path = Path(out_path)
    if path.exists():
        raise click.UsageError(f"{out_path} already exists; refusing to overwrite")
    generate_synthetic_omop(SyntheticDbSpec(seed=seed, n_persons=persons), path)
    click.echo(f"synthetic OMOP database written to {out_path}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="YAML config file.")
@click.option("--kb-ask", type=click.Path(exists=True), help="Override ASK KB path.")
@click.option("--kb-coho", type=click.Path(exists=True), help="Override COHO KB path.")
@click.option("--strategies", default="zs,rag_a,rag_c,rag_ac", show_default=True)
@click.option("--loo/--no-loo", default=True, show_default=True,
              help="Leave-one-out exclusion of each sample from retrieval.")
@click.option("--limit", type=int, default=None, help="Evaluate only the first N samples.")
@click.option("--samples", "sample_ids", default=None,
              help="Comma-separated sample ids to evaluate (default: all).")
@click.option("--report-json", type=click.Path(), default=None, help="Also write JSON report.")
def evaluate(config_path, kb_ask, kb_coho, strategies, loo, limit, sample_ids, report_json):
    """Evaluate generation quality over the COHO KB samples."""
    config = _load_config(config_path)
    if kb_ask:
        config.kb_ask_path = Path(kb_ask)
    if kb_coho:
        config.kb_coho_path = Path(kb_coho)
    pipeline = build_pipeline(config)
    try:
        strategy_list = tuple(Strategy.from_string(s) for s in strategies.split(","))
    except ValueError as exc:
        raise click.UsageError(str(exc)) from exc

    samples = [
        EvalSample(sample_id=e.id, criteria_text=e.natural_text, reference_sql=e.sql)
        for e in pipeline.coho_entries.values()
    ]
    if sample_ids:
        wanted = {s.strip() for s in sample_ids.split(",")}
        samples = [s for s in samples if s.sample_id in wanted]
        missing = wanted - {s.sample_id for s in samples}
        if missing:
            raise click.UsageError(f"unknown sample ids: {', '.join(sorted(missing))}")
    if limit:
        samples = samples[:limit]
    cfg = EvalConfig(
        window_days=config.window_days, strategies=strategy_list, leave_one_out=loo
    )
    report = run_eval(samples, pipeline, cfg)
    click.echo(report.format_table())
    if report_json:
        Path(report_json).write_text(
            json.dumps(report.to_document(), indent=2), encoding="utf-8"
        )
        click.echo(f"JSON report written to {report_json}")


@main.command()
@click.option("--config", "config_path", type=click.Path(exists=True), help="YAML config file.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True, type=int)
def serve(config_path, host, port):
    """Start the job service (HTTP API for the web UI)."""
    import uvicorn

    config = _load_config(config_path)
    pipeline = build_pipeline(config)
    store = JobStore(config.job_db_path or ":memory:")
    if config.retention_days:
        store.purge_older_than(config.retention_days)
    app = create_app(pipeline, store)
    uvicorn.run(app, host=host, port=port)


@main.command()
@click.option("--criteria", "criteria_path", type=click.Path(exists=True), required=True)
def validate(criteria_path):
    """Check a criteria file against the structured grammar."""
    from .criteria import validate_criteria

    try:
        criteria = parse_criteria_text(Path(criteria_path).read_text(encoding="utf-8"))
    except Exception as exc:
        click.echo(f"parse error: {exc}", err=True)
        sys.exit(1)
    violations = validate_criteria(criteria)
    if violations:
        for v in violations:
            click.echo(f"violation: {v}", err=True)
        sys.exit(1)
    click.echo(
        f"ok: {len(criteria.inclusion)} inclusion, {len(criteria.exclusion)} exclusion criteria"
    )


if __name__ == "__main__":
    main()
