import pytest

import conftest
from timelineqa.schema import (
    ColumnDef,
    DdlOrderError,
    DdlParseError,
    ForeignKeyDef,
    RelationalSchema,
    SchemaStructureError,
    emit_ddl,
    make_table,
    parse_ddl,
    sanitize_identifier,
    schema_equivalent,
    schema_from_json,
    schema_to_json,
    validate_3nf,
)

GOLDEN = conftest.FIXTURES / "golden" / "countries.ddl"


def archetype_counts(schema):
    counts = {}
    for t in schema.tables:
        counts[t.archetype] = counts.get(t.archetype, 0) + 1
    return counts


class TestParseFixtures:
    @pytest.mark.parametrize("path", conftest.DOMAIN_SCHEMAS, ids=lambda p: p.stem)
    def test_all_fixture_schemas_parse_and_pass_declarative_checks(self, path):
        schema = parse_ddl(path.read_text(encoding="utf-8"), domain=path.stem)
        report = validate_3nf(schema)
        assert report.passed, report.to_json_dict()

    def test_countries_archetypes(self):
        schema = parse_ddl(conftest.domain_schema_text("country"))
        assert len(schema.tables) == 5
        assert archetype_counts(schema) == {"entity": 2, "attribute": 1, "snapshot": 1, "bridge": 1}

    def test_backtick_quoted_identifier(self):
        schema = parse_ddl(conftest.domain_schema_text("field_hockey"))
        snapshots = schema.table("PlayerSnapshots")
        assert snapshots.column("rank") is not None

    def test_fk_to_missing_table(self):
        ddl = """
        Orphans (
            orphan_id INTEGER PRIMARY KEY,
            parent_id INTEGER,
            snapshot_id TEXT NOT NULL,
            FOREIGN KEY (parent_id) REFERENCES Nowhere(parent_id)
        )
        """
        with pytest.raises(SchemaStructureError, match="missing table"):
            parse_ddl(ddl)

    def test_duplicate_table(self):
        ddl = "A (snapshot_id TEXT PRIMARY KEY)\nA (snapshot_id TEXT PRIMARY KEY)"
        with pytest.raises(SchemaStructureError, match="duplicate table"):
            parse_ddl(ddl)

    def test_unsupported_type_names_statement_and_token(self):
        ddl = (
            "Good (snapshot_id TEXT PRIMARY KEY)\n"
            "Bad (thing_id BLOB PRIMARY KEY)"
        )
        with pytest.raises(DdlParseError) as excinfo:
            parse_ddl(ddl)
        assert excinfo.value.statement_index == 2
        assert excinfo.value.token == "BLOB"

    def test_vendor_noise_is_ignorable(self):
        ddl = """
        CREATE TABLE Things (
            thing_id INTEGER PRIMARY KEY AUTOINCREMENT,
            label VARCHAR(255) NOT NULL,
            snapshot_id TIMESTAMP NOT NULL,
            PRIMARY KEY (thing_id, snapshot_id)
        );
        """
        schema = parse_ddl(ddl)
        table = schema.table("Things")
        assert table.column("label").sql_type == "TEXT"
        assert table.column("snapshot_id").sql_type == "DATE"


class TestEmitDdl:
    def test_golden_countries_ddl(self):
        schema = parse_ddl(conftest.domain_schema_text("country"), domain="countries")
        assert emit_ddl(schema) == GOLDEN.read_text(encoding="utf-8")

    def test_deterministic(self, countries_schema):
        assert emit_ddl(countries_schema) == emit_ddl(countries_schema)

    def test_keyless_table_rejected(self):
        table = make_table("Bare", [ColumnDef("x", "TEXT")], primary_key=[])
        with pytest.raises(SchemaStructureError, match="primary key is empty"):
            emit_ddl(RelationalSchema("d", (table,)))

    def test_mutual_fk_cycle(self):
        a = make_table(
            "A",
            [ColumnDef("a_id", "INTEGER"), ColumnDef("b_id", "INTEGER"), ColumnDef("snapshot_id", "TEXT")],
            primary_key=["a_id", "snapshot_id"],
            foreign_keys=[ForeignKeyDef(("b_id",), "B", ("b_id",))],
            archetype="snapshot",
        )
        b = make_table(
            "B",
            [ColumnDef("b_id", "INTEGER"), ColumnDef("a_id", "INTEGER")],
            primary_key=["b_id"],
            foreign_keys=[ForeignKeyDef(("a_id",), "A", ("a_id",))],
            archetype="entity",
        )
        with pytest.raises(DdlOrderError, match="cycle"):
            emit_ddl(RelationalSchema("d", (a, b)))

    @pytest.mark.parametrize("path", conftest.DOMAIN_SCHEMAS, ids=lambda p: p.stem)
    def test_round_trip_equivalence(self, path):
        schema = parse_ddl(path.read_text(encoding="utf-8"), domain=path.stem)
        again = parse_ddl(emit_ddl(schema))
        assert schema_equivalent(schema, again)
        assert again.domain == path.stem

    def test_round_trip_fallback_schema(self, countries_schema):
        again = parse_ddl(emit_ddl(countries_schema))
        assert schema_equivalent(countries_schema, again)


class TestJsonSerialization:
    def test_round_trip(self, countries_schema):
        assert schema_from_json(schema_to_json(countries_schema)) == countries_schema


def seeded_atomicity_case():
    schema = parse_ddl(
        """
        Person (
            id INTEGER PRIMARY KEY,
            name_and_role TEXT,
            snapshot_id TEXT NOT NULL,
            PRIMARY KEY (id, snapshot_id)
        )
        """
    )
    samples = {
        "Person": [
            {"id": 1, "name_and_role": "Merkel (Chancellor)", "snapshot_id": "2019-01-01"},
            {"id": 2, "name_and_role": "Scholz (Chancellor)", "snapshot_id": "2020-01-01"},
        ]
    }
    return schema, samples


def seeded_partial_dependency_case():
    schema = parse_ddl(
        """
        SnapshotLeaders (
            snapshot_id TEXT NOT NULL,
            leader_id INTEGER NOT NULL,
            country_name TEXT,
            PRIMARY KEY (snapshot_id, leader_id)
        )
        """
    )
    samples = {
        "SnapshotLeaders": [
            {"snapshot_id": "2019-01-01", "leader_id": 1, "country_name": "Germany"},
            {"snapshot_id": "2019-01-01", "leader_id": 2, "country_name": "Germany"},
            {"snapshot_id": "2020-01-01", "leader_id": 1, "country_name": "France"},
            {"snapshot_id": "2020-01-01", "leader_id": 3, "country_name": "France"},
        ]
    }
    return schema, samples


def seeded_transitive_dependency_case():
    schema = parse_ddl(
        """
        Tenures (
            snapshot_id TEXT PRIMARY KEY,
            leader_name TEXT,
            leader_role TEXT
        )
        """
    )
    samples = {
        "Tenures": [
            {"snapshot_id": "2019-01-01", "leader_name": "Merkel", "leader_role": "Chancellor"},
            {"snapshot_id": "2020-01-01", "leader_name": "Merkel", "leader_role": "Chancellor"},
            {"snapshot_id": "2021-01-01", "leader_name": "Scholz", "leader_role": "Chancellor2"},
            {"snapshot_id": "2022-01-01", "leader_name": "Scholz", "leader_role": "Chancellor2"},
        ]
    }
    return schema, samples


class TestValidate3nf:
    def test_atomicity_violation_only(self):
        schema, samples = seeded_atomicity_case()
        report = validate_3nf(schema, samples)
        assert report.atomicity_violations
        assert not report.partial_dependency_violations
        assert not report.transitive_dependency_violations
        assert not report.passed

    def test_atomicity_by_naming_without_samples(self):
        schema, _ = seeded_atomicity_case()
        report = validate_3nf(schema)
        assert any(col == "name_and_role" for _, col, _ in report.atomicity_violations)

    def test_partial_dependency_violation_only(self):
        schema, samples = seeded_partial_dependency_case()
        report = validate_3nf(schema, samples)
        assert report.partial_dependency_violations
        assert not report.atomicity_violations
        assert not report.transitive_dependency_violations
        violation = report.partial_dependency_violations[0]
        assert violation[1] == "country_name" and "snapshot_id" in violation[2]

    def test_transitive_dependency_violation_only(self):
        schema, samples = seeded_transitive_dependency_case()
        report = validate_3nf(schema, samples)
        assert not report.atomicity_violations
        assert not report.partial_dependency_violations
        pairs = [v[1] for v in report.transitive_dependency_violations]
        assert "leader_name -> leader_role" in pairs

    def test_countries_fixture_with_consistent_samples_passes(self):
        schema = parse_ddl(conftest.domain_schema_text("country"))
        samples = {
            "Countries": [{"country_id": 1, "country_name": "Germany"}],
            "Leaders": [
                {"leader_id": 1, "leader_name": "Angela Merkel"},
                {"leader_id": 2, "leader_name": "Olaf Scholz"},
            ],
            "LeaderRoles": [{"role_id": 1, "role_title": "Chancellor"}],
            "Snapshots": [
                {"snapshot_id": f"20{y}-01-01", "country_id": 1, "gdp_ppp": 4000 + y, "hdi": 0.9 + y / 1000}
                for y in range(19, 24)
            ],
            "SnapshotLeaders": [
                {"snapshot_id": "2019-01-01", "leader_id": 1, "role_id": 1},
                {"snapshot_id": "2020-01-01", "leader_id": 1, "role_id": 1},
                {"snapshot_id": "2021-01-01", "leader_id": 2, "role_id": 1},
                {"snapshot_id": "2022-01-01", "leader_id": 2, "role_id": 1},
            ],
        }
        report = validate_3nf(schema, samples)
        assert report.passed, report.to_json_dict()

    def test_empty_schema_reports_structural_error(self):
        report = validate_3nf(RelationalSchema("d", ()))
        assert report.structural_errors
        assert not report.passed

    @pytest.mark.parametrize(
        "case", [seeded_atomicity_case, seeded_partial_dependency_case, seeded_transitive_dependency_case]
    )
    def test_samples_never_remove_declarative_violations(self, case):
        schema, samples = case()
        declarative = validate_3nf(schema)
        sampled = validate_3nf(schema, samples)
        for violation in declarative.atomicity_violations:
            assert violation in sampled.atomicity_violations
        assert sampled.structural_errors == declarative.structural_errors


class TestSanitizeIdentifier:
    def test_basic(self):
        assert sanitize_identifier("GDP (PPP)") == "gdp_ppp"

    def test_leading_digit_prefixed(self):
        assert sanitize_identifier("100s/50s") == "f_100s_50s"

    def test_collision_suffix(self):
        assert sanitize_identifier("gdp", used=["gdp"]) == "gdp_2"

    def test_empty_fallback(self):
        assert sanitize_identifier("!!!") == "field"
