import json

import pytest
from click.testing import CliRunner

import corpusgen
from timelineqa import cli


@pytest.fixture()
def runner():
    return CliRunner()


@pytest.fixture()
def workdir(tmp_path):
    return tmp_path / "runs"


@pytest.fixture()
def gold_llm(monkeypatch):
    """Route the CLI's live transport to the corpus gold responder."""
    transport = corpusgen.gold_transport()
    monkeypatch.setattr(cli, "http_transport", lambda **kwargs: transport)
    return transport


def invoke(runner, workdir, args):
    return runner.invoke(cli.main, ["--workdir", str(workdir), *args])


def run_stage(runner, workdir, args, expect=0):
    result = invoke(runner, workdir, args)
    assert result.exit_code == expect, result.output
    return result


class TestCmdSchema:
    def test_fallback_writes_artifacts(self, runner, workdir, corpus_root):
        result = run_stage(
            runner, workdir, ["schema", "--domain", "countries", "--corpus", str(corpus_root)]
        )
        assert (workdir / "countries" / "countries.schema.sql").exists()
        assert (workdir / "countries" / "countries.schema.report.json").exists()
        assert "passed=True" in result.output

    def test_unknown_domain_exits_2(self, runner, workdir, corpus_root):
        result = invoke(
            runner, workdir, ["schema", "--domain", "nope", "--corpus", str(corpus_root)]
        )
        assert result.exit_code == 2

    def test_llm_backend_replays_fixture_schema(
        self, runner, workdir, corpus_root, tmp_path, monkeypatch
    ):
        import conftest

        ddl = conftest.domain_schema_text("country")
        store = tmp_path / "schema_replay.jsonl"
        monkeypatch.setattr(
            cli, "http_transport", lambda **kwargs: (lambda req: f"```sql\n{ddl}\n```")
        )
        run_stage(
            runner,
            workdir,
            ["schema", "--domain", "countries", "--corpus", str(corpus_root),
             "--backend", "llm", "--record", str(store)],
        )
        # now fully offline
        run_stage(
            runner,
            workdir,
            ["schema", "--domain", "countries", "--corpus", str(corpus_root),
             "--backend", "llm", "--replay", str(store)],
        )
        schema_sql = (workdir / "countries" / "countries.schema.sql").read_text()
        assert "SnapshotLeaders" in schema_sql


class TestCmdPopulate:
    def test_populate_and_conflict_and_force(self, runner, workdir, corpus_root):
        run_stage(runner, workdir, ["schema", "--domain", "countries", "--corpus", str(corpus_root)])
        run_stage(runner, workdir, ["populate", "--domain", "countries", "--corpus", str(corpus_root)])
        assert (workdir / "countries" / "data.sqlite").exists()
        assert (workdir / "countries" / "mapping.json").exists()

        conflict = invoke(
            runner, workdir, ["populate", "--domain", "countries", "--corpus", str(corpus_root)]
        )
        assert conflict.exit_code == 2

        run_stage(
            runner,
            workdir,
            ["populate", "--domain", "countries", "--corpus", str(corpus_root), "--force"],
        )

    def test_corrupt_timeline_listed_while_others_load(self, runner, workdir, corpus_root, tmp_path):
        import shutil

        corpus = tmp_path / "corpus"
        shutil.copytree(corpus_root, corpus)
        (corpus / "countries" / "broken.json").write_text("{not json", encoding="utf-8")
        run_stage(runner, workdir, ["schema", "--domain", "countries", "--corpus", str(corpus)])
        result = run_stage(
            runner, workdir, ["populate", "--domain", "countries", "--corpus", str(corpus)]
        )
        assert "failed broken.json" in result.output
        assert "2 timelines" in result.output and "1 failed files" in result.output

    def test_missing_schema_exits_2(self, runner, workdir, corpus_root):
        result = invoke(
            runner, workdir, ["populate", "--domain", "countries", "--corpus", str(corpus_root)]
        )
        assert result.exit_code == 2


def prepare_domain(runner, workdir, corpus_root, questions_dir, domain, gold_store):
    """schema + populate + goldloop for one domain, recording gold responses."""
    run_stage(runner, workdir, ["schema", "--domain", domain, "--corpus", str(corpus_root)])
    run_stage(runner, workdir, ["populate", "--domain", domain, "--corpus", str(corpus_root)])
    questions = corpusgen.write_question_files(questions_dir)[domain]
    run_stage(
        runner,
        workdir,
        ["goldloop", "--domain", domain, "--questions", str(questions), "--record", str(gold_store)],
    )
    return questions


class TestCmdGoldloop:
    def test_validates_all_fixture_questions(self, runner, workdir, corpus_root, tmp_path, gold_llm):
        questions = prepare_domain(
            runner, workdir, corpus_root, tmp_path, "countries", tmp_path / "gold.jsonl"
        )
        fewshot = (workdir / "countries" / "bundle" / "fewshot.jsonl").read_text().splitlines()
        assert len(fewshot) == 10
        rows = [json.loads(line) for line in fewshot]
        assert all(r["validated"] and r["iterations_used"] == 1 for r in rows)
        assert (workdir / "countries" / "bundle" / "prompt.txt").exists()

    def test_missing_db_exits_2(self, runner, workdir, tmp_path, gold_llm):
        questions = corpusgen.write_question_files(tmp_path)["countries"]
        result = invoke(
            runner, workdir, ["goldloop", "--domain", "countries", "--questions", str(questions)]
        )
        assert result.exit_code == 2


class TestCmdRun:
    def test_gold_replay_scores_perfectly_and_is_deterministic(
        self, runner, workdir, corpus_root, tmp_path, gold_llm
    ):
        store = tmp_path / "store.jsonl"
        questions = prepare_domain(runner, workdir, corpus_root, tmp_path, "countries", store)

        # record pass fills the store with test-time responses
        run_stage(
            runner,
            workdir,
            ["run", "--domain", "countries", "--questions", str(questions), "--record", str(store)],
        )
        results_path = workdir / "countries" / "results" / "results.jsonl"

        def replay_run():
            run_stage(
                runner,
                workdir,
                ["run", "--domain", "countries", "--questions", str(questions),
                 "--replay", str(store), "--em-gate", "100"],
            )
            return (
                results_path.read_bytes(),
                (workdir / "countries" / "results" / "report.md").read_bytes(),
                (workdir / "countries" / "results" / "report.csv").read_bytes(),
            )

        first = replay_run()
        second = replay_run()
        assert first == second

        rows = [json.loads(line) for line in results_path.read_text().splitlines()]
        assert len(rows) == 10
        assert all(row["em"] == 1 for row in rows)

    def test_replay_miss_exits_2(self, runner, workdir, corpus_root, tmp_path, gold_llm):
        questions = prepare_domain(
            runner, workdir, corpus_root, tmp_path, "countries", tmp_path / "gold.jsonl"
        )
        empty_store = tmp_path / "empty.jsonl"
        empty_store.write_text("")
        result = invoke(
            runner,
            workdir,
            ["run", "--domain", "countries", "--questions", str(questions),
             "--replay", str(empty_store)],
        )
        assert result.exit_code == 2
        assert "no recorded response" in result.output

    def test_em_gate_failure_exits_1(self, runner, workdir, corpus_root, tmp_path, monkeypatch):
        store = tmp_path / "gold.jsonl"
        transport = corpusgen.gold_transport()

        def mostly_gold(req):
            if req.user_text.startswith("Who was President before"):
                return "The answer is unknowable"
            return transport(req)

        monkeypatch.setattr(cli, "http_transport", lambda **kwargs: mostly_gold)
        questions = prepare_domain(runner, workdir, corpus_root, tmp_path, "countries", store)
        result = invoke(
            runner,
            workdir,
            ["run", "--domain", "countries", "--questions", str(questions),
             "--record", str(tmp_path / "run.jsonl"), "--em-gate", "100"],
        )
        assert result.exit_code == 1
        assert "EM=90.00" in result.output

    def test_jobs_parallelism_preserves_order(self, runner, workdir, corpus_root, tmp_path, gold_llm):
        store = tmp_path / "store.jsonl"
        questions = prepare_domain(runner, workdir, corpus_root, tmp_path, "countries", store)
        run_stage(
            runner,
            workdir,
            ["run", "--domain", "countries", "--questions", str(questions),
             "--record", str(store), "--jobs", "4"],
        )
        rows = [
            json.loads(line)
            for line in (workdir / "countries" / "results" / "results.jsonl").read_text().splitlines()
        ]
        expected_order = [q["question"] for q in corpusgen.domain_questions("countries")]
        assert [r["question"] for r in rows] == expected_order


class TestCmdErrors:
    def test_taxonomy_table_from_results(self, runner, workdir, tmp_path):
        rows = [
            {"em": 1, "error_label": None},
            {"em": 0, "error_label": {"issue": "data_quality", "category": "Empty Results"}},
            {"em": 0, "error_label": {"issue": "sql_generation", "category": "Syntax Errors"}},
            {"em": 0, "error_label": {"issue": "data_quality", "category": "Empty Results"}},
        ]
        path = tmp_path / "results.jsonl"
        path.write_text("\n".join(json.dumps(r) for r in rows) + "\n")
        result = run_stage(runner, workdir, ["errors", "--results", str(path)])
        assert "| data_quality | Empty Results | 2 |" in result.output
        assert "| sql_generation | Syntax Errors | 1 |" in result.output

    def test_all_correct_gives_empty_table(self, runner, workdir, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text(json.dumps({"em": 1, "error_label": None}) + "\n")
        result = run_stage(runner, workdir, ["errors", "--results", str(path)])
        assert result.output.strip().splitlines() == [
            "| Issue | Error Category | Count |",
            "|---|---|---|",
        ]

    def test_malformed_jsonl_exits_2(self, runner, workdir, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text("{broken\n")
        result = invoke(runner, workdir, ["errors", "--results", str(path)])
        assert result.exit_code == 2

    def test_export_unlabeled(self, runner, workdir, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text(json.dumps({"em": 0, "error_label": None, "question": "q"}) + "\n")
        out = tmp_path / "unlabeled.jsonl"
        run_stage(
            runner, workdir, ["errors", "--results", str(path), "--export-unlabeled", str(out)]
        )
        assert json.loads(out.read_text())["question"] == "q"


def test_config_file_profiles(runner, workdir, corpus_root, tmp_path, monkeypatch):
    config = tmp_path / "config.toml"
    config.write_text(
        '[profiles.gold]\nmodel_id = "gold-model-1"\nendpoint = "http://example.invalid"\n'
    )
    captured = {}
    transport = corpusgen.gold_transport()

    def capture_transport(**kwargs):
        captured.update(kwargs)
        return transport

    monkeypatch.setattr(cli, "http_transport", capture_transport)
    run_stage(runner, workdir, ["schema", "--domain", "countries", "--corpus", str(corpus_root)])
    run_stage(runner, workdir, ["populate", "--domain", "countries", "--corpus", str(corpus_root)])
    questions = corpusgen.write_question_files(tmp_path)["countries"]
    result = runner.invoke(
        cli.main,
        ["--config", str(config), "--workdir", str(workdir), "goldloop", "--domain", "countries",
         "--questions", str(questions), "--record", str(tmp_path / "g.jsonl"), "--model", "gold"],
    )
    assert result.exit_code == 0, result.output
    assert captured["endpoint"] == "http://example.invalid"
    fewshot = (workdir / "countries" / "bundle" / "fewshot.jsonl").read_text()
    assert fewshot.count('"validated": true') == 10
