"""Command-line entry point orchestrating the pipeline stages.

Exit codes: 0 success, 1 quality-gate failure, 2 usage/input error.  All
artifacts for a domain live under ``<workdir>/<domain>/``; in replay or
fallback modes every command is re-runnable and produces byte-identical
artifacts.
"""

from __future__ import annotations

import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from . import __version__, evalharness, ingest, populate, promptkit, schema as schema_mod, schemagen, sqlgen
from .llmclient import LLMClient, LLMClientError, ReplayMissError, http_transport

EXIT_OK = 0
EXIT_GATE = 1
EXIT_USAGE = 2


def _fail(message: str, code: int = EXIT_USAGE):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_config(path: str | None) -> dict:
    if not path:
        return {}
    p = Path(path)
    if not p.exists():
        _fail(f"config file {p} not found")
    with open(p, "rb") as fh:
        return tomllib.load(fh)


def _load_corpus(corpus: Path, domain: str) -> list[tuple[Path, ingest.Timeline | Exception]]:
    domain_dir = corpus / domain
    if not domain_dir.is_dir():
        _fail(f"unknown domain directory {domain_dir}")
    out = []
    for path in sorted(domain_dir.glob("*.json")):
        try:
            out.append((path, ingest.parse_timeline(path.read_bytes())))
        except ingest.IngestError as exc:
            out.append((path, exc))
    if not out:
        _fail(f"no timeline files in {domain_dir}")
    return out


def _make_client(replay: str | None, record: str | None, config: dict, model_profile: str):
    if replay:
        return LLMClient(replay_path=replay)
    profile = config.get("profiles", {}).get(model_profile, {})
    try:
        transport = http_transport(
            endpoint=profile.get("endpoint"), profile=model_profile.upper()
        )
    except LLMClientError as exc:
        _fail(str(exc))
    if record:
        return LLMClient(transport=transport, record_path=record)
    return LLMClient(transport=transport)


def _model_id(config: dict, model_profile: str) -> str:
    return config.get("profiles", {}).get(model_profile, {}).get("model_id", model_profile)


def _domain_dir(workdir: str, domain: str) -> Path:
    path = Path(workdir) / domain
    path.mkdir(parents=True, exist_ok=True)
    return path


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@click.group()
@click.version_option(__version__)
@click.option("--config", "config_path", default=None, help="TOML config file")
@click.option("--workdir", default="runs", show_default=True, help="Artifact root directory")
@click.pass_context
def main(ctx, config_path, workdir):
    """Timeline-to-SQL temporal question answering pipeline."""
    ctx.ensure_object(dict)
    config = _load_config(config_path)
    ctx.obj["config"] = config
    ctx.obj["workdir"] = config.get("workdir", workdir) if workdir == "runs" else workdir


@main.command("schema")
@click.option("--domain", required=True)
@click.option("--corpus", required=True, type=click.Path(path_type=Path))
@click.option("--backend", type=click.Choice(["fallback", "llm"]), default="fallback", show_default=True)
@click.option("--replay", default=None, help="Replay store path (offline LLM)")
@click.option("--record", default=None, help="Record store path (live LLM, cached)")
@click.option("--model", "model_profile", default="default", show_default=True)
@click.pass_context
def cmd_schema(ctx, domain, corpus, backend, replay, record, model_profile):
    """Generate and validate the domain schema; writes schema.sql and report."""
    config = ctx.obj["config"]
    entries = _load_corpus(corpus, domain)
    timelines = [t for _, t in entries if isinstance(t, ingest.Timeline)]
    if not timelines:
        _fail(f"no parseable timelines for domain {domain!r}")

    if backend == "fallback":
        try:
            generated = schemagen.generate_schema_fallback(timelines, domain)
        except schemagen.DegenerateInputError as exc:
            _fail(str(exc))
        result = schemagen.SchemaGenResult(
            schema=generated, report=schema_mod.validate_3nf(generated)
        )
    else:
        prompt = schemagen.build_schema_prompt(timelines[: min(3, len(timelines))], domain)
        client = _make_client(replay, record, config, model_profile)
        try:
            result = schemagen.generate_schema_llm(
                prompt, client, domain=domain, model_id=_model_id(config, model_profile)
            )
        except ReplayMissError as exc:
            _fail(str(exc))
        except (schemagen.SqlExtractionError, schema_mod.SchemaError) as exc:
            _fail(f"schema generation failed: {exc}")

    out_dir = _domain_dir(ctx.obj["workdir"], domain)
    sql_path, report_path = schemagen.write_schema_artifacts(result, out_dir, domain)
    report = result.report
    click.echo(f"wrote {sql_path} and {report_path}")
    click.echo(
        "3NF report: passed={} atomicity={} partial={} transitive={} structural={}".format(
            report.passed,
            len(report.atomicity_violations),
            len(report.partial_dependency_violations),
            len(report.transitive_dependency_violations),
            len(report.structural_errors),
        )
    )
    sys.exit(EXIT_OK if report.passed else EXIT_GATE)


@main.command("populate")
@click.option("--domain", required=True)
@click.option("--corpus", required=True, type=click.Path(path_type=Path))
@click.option("--force", is_flag=True, help="Overwrite an existing database")
@click.pass_context
def cmd_populate(ctx, domain, corpus, force):
    """Create the domain database and load every timeline in the corpus."""
    out_dir = _domain_dir(ctx.obj["workdir"], domain)
    schema_path = out_dir / f"{domain}.schema.sql"
    if not schema_path.exists():
        _fail(f"no schema artifact at {schema_path}; run the schema command first")
    parsed = schema_mod.parse_ddl(schema_path.read_text(encoding="utf-8"), domain=domain)

    entries = _load_corpus(corpus, domain)
    timelines = [t for _, t in entries if isinstance(t, ingest.Timeline)]
    bad = [(p, e) for p, e in entries if isinstance(e, Exception)]

    db_path = out_dir / "data.sqlite"
    try:
        db = populate.create_database(parsed, db_path, force=force)
    except populate.ConflictError as exc:
        _fail(str(exc))

    mapping = populate.derive_mapping(parsed, timelines)
    mapping.save(out_dir / "mapping.json")

    reports_dir = out_dir / "load_reports"
    reports_dir.mkdir(exist_ok=True)
    loaded = 0
    for timeline in timelines:
        report = populate.populate_timeline(db, timeline, mapping)
        loaded += 1
        name = schema_mod.sanitize_identifier(timeline.entity_name)
        (reports_dir / f"{name}.json").write_text(
            json.dumps(report.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )
        click.echo(
            f"loaded {timeline.entity_name}: inserted={report.inserted} "
            f"null_coerced={report.null_coerced} unmapped={report.unmapped} failed={report.failed}"
        )
    for path, exc in bad:
        click.echo(f"failed {path.name}: {exc}", err=True)

    violations = populate.verify_integrity(db)
    db.close()
    if violations:
        for v in violations:
            click.echo(f"integrity violation: {v}", err=True)
        sys.exit(EXIT_GATE)
    click.echo(f"database {db_path} loaded ({loaded} timelines, {len(bad)} failed files)")
    sys.exit(EXIT_OK if loaded else EXIT_USAGE)


def _read_questions(path: Path) -> list[dict]:
    if not path.exists():
        _fail(f"questions file {path} not found")
    questions = []
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            questions.append({"question": doc["question"], "answer": str(doc["answer"])})
        except (json.JSONDecodeError, KeyError) as exc:
            _fail(f"{path}:{i + 1}: bad question line: {exc}")
    if not questions:
        _fail(f"no questions in {path}")
    return questions


def _open_domain_db(out_dir: Path, domain: str) -> populate.Database:
    schema_path = out_dir / f"{domain}.schema.sql"
    db_path = out_dir / "data.sqlite"
    if not schema_path.exists() or not db_path.exists():
        _fail(f"missing schema or database under {out_dir}; run schema/populate first")
    parsed = schema_mod.parse_ddl(schema_path.read_text(encoding="utf-8"), domain=domain)
    return populate.open_database(parsed, db_path)


@main.command("goldloop")
@click.option("--domain", required=True)
@click.option("--questions", "questions_path", required=True, type=click.Path(path_type=Path))
@click.option("--max-iters", default=promptkit.DEFAULT_MAX_ITERS, show_default=True)
@click.option("--replay", default=None)
@click.option("--record", default=None)
@click.option("--model", "model_profile", default="default", show_default=True)
@click.pass_context
def cmd_goldloop(ctx, domain, questions_path, max_iters, replay, record, model_profile):
    """Build execution-validated gold examples; writes the prompt bundle."""
    config = ctx.obj["config"]
    out_dir = _domain_dir(ctx.obj["workdir"], domain)
    db = _open_domain_db(out_dir, domain)
    questions = _read_questions(questions_path)
    client = _make_client(replay, record, config, model_profile)
    model_id = _model_id(config, model_profile)

    examples = []
    for q in questions:
        try:
            example = promptkit.refine_gold_query(
                q["question"], q["answer"], db, client, max_iters=max_iters, model_id=model_id
            )
        except ReplayMissError as exc:
            db.close()
            _fail(str(exc))
        examples.append(example)
        status = "validated" if example.validated else f"unvalidated after {max_iters} iters"
        click.echo(f"{q['question']} -> {status} ({example.iterations_used} iterations)")

    bundle = promptkit.PromptBundle(
        schema_ddl=schema_mod.emit_ddl(db.schema),
        relationship_prose=promptkit.relationship_prose(db.schema),
        pattern_templates=promptkit.default_pattern_templates(),
        few_shot=tuple(examples),
        few_shot_floor=min(promptkit.DEFAULT_FEW_SHOT_FLOOR, len(examples)),
    )
    promptkit.save_bundle(bundle, out_dir / "bundle")
    db.close()
    validated = sum(1 for e in examples if e.validated)
    click.echo(f"bundle written: {validated}/{len(examples)} examples validated")
    sys.exit(EXIT_OK)


def _run_one(question: dict, bundle, client, db_schema, conn, model_id: str) -> dict:
    query = sqlgen.generate_sql(
        question["question"], bundle, client, schema=db_schema, model_id=model_id
    )
    predicted = None
    exec_error = None
    lint = sqlgen.LintReport()
    if not query.extraction_ok:
        exec_error = None
    elif not query.safety_ok:
        exec_error = f"refused by safety check: {'; '.join(query.safety_reasons)}"
    else:
        lint = sqlgen.lint_aggregates(query.sql)
        try:
            rows = evalharness.execute_query(conn, query.sql)
            predicted = evalharness.render_answer(rows)
        except evalharness.ExecError as exc:
            exec_error = str(exc)
    record = evalharness.score_record(
        question["question"], question["answer"], predicted, exec_error
    )
    if record.em == 0:
        record.error_label = evalharness.classify_error(record, query, lint, db_schema)
    row = record.to_json_dict()
    row.update(query.to_json_dict())
    row["lint_warnings"] = list(lint.warnings)
    row["lint_skipped"] = lint.skipped
    return row


@main.command("run")
@click.option("--domain", required=True)
@click.option("--questions", "questions_path", required=True, type=click.Path(path_type=Path))
@click.option("--model", "model_profile", default="default", show_default=True)
@click.option("--schema-model", default="fallback", show_default=True)
@click.option("--replay", default=None)
@click.option("--record", default=None)
@click.option("--em-gate", default=0.0, show_default=True, help="Exit 1 if mean EM (pct) is below")
@click.option("--jobs", default=None, type=int, help="Parallel questions [default: logical cores]")
@click.option("--report/--no-report", "want_report", default=True)
@click.pass_context
def cmd_run(ctx, domain, questions_path, model_profile, schema_model, replay, record, em_gate, jobs, want_report):
    """Generate, execute, and score SQL for every test question."""
    config = ctx.obj["config"]
    out_dir = _domain_dir(ctx.obj["workdir"], domain)
    bundle_dir = out_dir / "bundle"
    if not bundle_dir.is_dir():
        _fail(f"no prompt bundle at {bundle_dir}; run goldloop first")
    bundle = promptkit.load_bundle(bundle_dir, few_shot_floor=0)
    db = _open_domain_db(out_dir, domain)
    questions = _read_questions(questions_path)
    client = _make_client(replay, record, config, model_profile)
    model_id = _model_id(config, model_profile)

    results_dir = out_dir / "results"
    results_dir.mkdir(exist_ok=True)

    def work(question: dict) -> dict:
        conn = db.read_only()
        try:
            return _run_one(question, bundle, client, db.schema, conn, model_id)
        finally:
            conn.close()

    jobs = jobs or os.cpu_count() or 1
    try:
        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                rows = list(pool.map(work, questions))
        else:
            rows = [work(q) for q in questions]
    except ReplayMissError as exc:
        db.close()
        _fail(str(exc))
    db.close()

    for row in rows:
        row["domain"] = domain
        row["schema_model"] = schema_model
        row["query_model"] = model_id

    results_path = results_dir / "results.jsonl"
    with open(results_path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    reports = evalharness.aggregate(rows, ("domain", "schema_model", "query_model"))
    overall = reports[0] if len(reports) == 1 else evalharness.aggregate(rows, ())[0]
    if want_report:
        grid = evalharness.render_grid(reports)
        domain_table = evalharness.render_domain_table(reports)
        (results_dir / "report.md").write_text(
            f"# Results: {domain}\n\n{grid}\n{domain_table}", encoding="utf-8"
        )
        (results_dir / "report.csv").write_text(evalharness.render_csv(reports), encoding="utf-8")
    manifest = {
        "domain": domain,
        "schema_model": schema_model,
        "query_model": model_id,
        "questions_file": str(questions_path),
        "questions_sha256": _sha256(questions_path),
        "n_questions": len(questions),
        "em_gate": em_gate,
        "results": results_path.name,
        "version": __version__,
    }
    (results_dir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )

    click.echo(
        f"n={overall.n} EM={overall.mean_em:.2f} F1={overall.mean_f1:.2f} "
        f"R1={overall.mean_rouge1:.2f} RL={overall.mean_rougeL:.2f}"
    )
    click.echo(f"results: {results_path}")
    sys.exit(EXIT_OK if overall.mean_em >= em_gate else EXIT_GATE)


@main.command("errors")
@click.option("--results", "results_path", required=True, type=click.Path(path_type=Path))
@click.option("--export-unlabeled", default=None, type=click.Path(path_type=Path),
              help="Write unlabeled failures to this file for human review")
@click.pass_context
def cmd_errors(ctx, results_path, export_unlabeled):
    """Render the error-taxonomy table from a results JSONL file."""
    if not results_path.exists():
        _fail(f"results file {results_path} not found")
    labels = []
    unlabeled = []
    for i, line in enumerate(results_path.read_text(encoding="utf-8").splitlines()):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            _fail(f"{results_path}:{i + 1}: malformed JSONL: {exc}")
        if row.get("em") == 1:
            continue
        label = row.get("error_label")
        if label:
            labels.append(evalharness.ErrorTaxonomyLabel(label["issue"], label["category"]))
        else:
            unlabeled.append(row)
    click.echo(evalharness.render_taxonomy_table(labels), nl=False)
    if export_unlabeled and unlabeled:
        with open(export_unlabeled, "w", encoding="utf-8") as fh:
            for row in unlabeled:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        click.echo(f"wrote {len(unlabeled)} unlabeled failures to {export_unlabeled}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
