"""Produce a relational schema for a domain: LLM-backed or deterministic fallback.

The fallback encodes the structural lessons that made compact schemas work:
one entity table, one snapshot table keyed (snapshot_id, entity_id) holding
the numeric/date fields, and a Persons/Roles/SnapshotRoles family for
role-like text fields, giving 2-5 tables for any input.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import ingest, schema as schema_mod
from .ingest import Timeline
from .llmclient import CompletionRequest
from .schema import (
    ColumnDef,
    ForeignKeyDef,
    NormalizationReport,
    RelationalSchema,
    make_table,
    sanitize_identifier,
)

THREE_NF_INSTRUCTION = (
    "Generate a 3NF schema where: (a) all attributes are atomic (no multi-valued "
    "fields), (b) all non-key attributes are fully functionally dependent on the "
    "primary key, and (c) no transitive dependencies exist between non-key attributes."
)

ARCHETYPE_INSTRUCTION = (
    "Model four table kinds: entity tables for core entities with unique identifiers, "
    "attribute tables for domain-specific lookups, snapshot tables keyed by snapshot_id "
    "timestamps for time-varying values, and bridge tables for many-to-many "
    "relationships linking entities, attributes, and time periods."
)


class SchemaGenError(Exception):
    pass


class DegenerateInputError(SchemaGenError):
    """Timelines carry no usable fields at all."""


class SqlExtractionError(SchemaGenError):
    def __init__(self, message: str, response: str):
        super().__init__(message)
        self.response = response


@dataclass(frozen=True)
class FieldProfile:
    """How a source field behaves across every snapshot of the example timelines."""

    name: str
    kind: str  # integer | real | date | composite | role


@dataclass
class SchemaGenResult:
    schema: RelationalSchema
    report: NormalizationReport
    raw_response: str | None = None


def profile_fields(timelines: Sequence[Timeline]) -> list[FieldProfile]:
    """Classify each flattened field by what every non-null value parses as.

    Order is first-seen across timelines and snapshots, which keeps the
    generated schema deterministic for fixed inputs.
    """
    values: dict[str, list[str]] = {}
    for timeline in timelines:
        for snap in timeline.snapshots:
            for name, value in ingest.flatten_fields(snap.fields).items():
                values.setdefault(name, []).append(ingest.raw_text(value))

    profiles = []
    for name, raws in values.items():
        present = [r for r in raws if not ingest.normalize_null(r).is_null]
        if not present:
            profiles.append(FieldProfile(name, "role"))
            continue
        if all(_is_composite(r) for r in present):
            profiles.append(FieldProfile(name, "composite"))
            continue
        numeric = [ingest.safe_real(r) for r in present]
        if all(v.kind == "real" for v in numeric):
            if all(float(v.value).is_integer() for v in numeric):
                profiles.append(FieldProfile(name, "integer"))
            else:
                profiles.append(FieldProfile(name, "real"))
            continue
        if all(ingest.normalize_date(r).kind == "date" for r in present):
            profiles.append(FieldProfile(name, "date"))
            continue
        profiles.append(FieldProfile(name, "role"))
    return profiles


def _is_composite(raw: str) -> bool:
    if raw.count("/") != 1:
        return False
    try:
        pair = ingest.parse_composite(raw)
    except ingest.CompositeShapeError:
        return False
    return pair.value != (None, None)


def _camel(name: str) -> str:
    words = re.split(r"[^A-Za-z0-9]+", name.strip())
    out = "".join(w[:1].upper() + w[1:] for w in words if w)
    return out or "Entities"


def generate_schema_fallback(
    examples: Sequence[Timeline], domain: str, anchor: str = schema_mod.DEFAULT_TEMPORAL_ANCHOR
) -> RelationalSchema:
    """Deterministic schema from example timelines; always 2-5 tables."""
    if not examples:
        raise ValueError("at least one example timeline is required")
    profiles = profile_fields(examples)
    if not profiles:
        raise DegenerateInputError(f"no usable fields in example timelines for {domain!r}")

    entity_table = _camel(domain)
    snapshot_columns: list[ColumnDef] = [
        ColumnDef(anchor, "TEXT", nullable=False),
        ColumnDef("entity_id", "INTEGER", nullable=False),
    ]
    used = [anchor, "entity_id"]
    role_fields = []
    for profile in profiles:
        if profile.kind == "role":
            role_fields.append(profile)
            continue
        base = sanitize_identifier(profile.name, used)
        if profile.kind == "composite":
            for suffix in ("first", "second"):
                col = f"{base}_{suffix}"
                snapshot_columns.append(ColumnDef(col, "INTEGER"))
                used.append(col)
        else:
            sql_type = {"integer": "INTEGER", "real": "REAL", "date": "DATE"}[profile.kind]
            snapshot_columns.append(ColumnDef(base, sql_type))
            used.append(base)

    tables = [
        make_table(
            entity_table,
            [
                ColumnDef("entity_id", "INTEGER", nullable=False),
                ColumnDef("entity_name", "TEXT", nullable=False, unique=True),
            ],
            primary_key=["entity_id"],
            anchor=anchor,
        ),
        make_table(
            "Snapshots",
            snapshot_columns,
            primary_key=[anchor, "entity_id"],
            foreign_keys=[ForeignKeyDef(("entity_id",), entity_table, ("entity_id",))],
            anchor=anchor,
        ),
    ]
    if role_fields:
        tables.append(
            make_table(
                "Persons",
                [
                    ColumnDef("person_id", "INTEGER", nullable=False),
                    ColumnDef("person_name", "TEXT", nullable=False, unique=True),
                ],
                primary_key=["person_id"],
                anchor=anchor,
            )
        )
        tables.append(
            make_table(
                "Roles",
                [
                    ColumnDef("role_id", "INTEGER", nullable=False),
                    ColumnDef("role_title", "TEXT", nullable=False, unique=True),
                ],
                primary_key=["role_id"],
                anchor=anchor,
            )
        )
        tables.append(
            make_table(
                "SnapshotRoles",
                [
                    ColumnDef(anchor, "TEXT", nullable=False),
                    ColumnDef("entity_id", "INTEGER", nullable=False),
                    ColumnDef("person_id", "INTEGER", nullable=False),
                    ColumnDef("role_id", "INTEGER", nullable=False),
                ],
                primary_key=[anchor, "entity_id", "person_id", "role_id"],
                foreign_keys=[
                    ForeignKeyDef((anchor, "entity_id"), "Snapshots", (anchor, "entity_id")),
                    ForeignKeyDef(("person_id",), "Persons", ("person_id",)),
                    ForeignKeyDef(("role_id",), "Roles", ("role_id",)),
                ],
                anchor=anchor,
            )
        )
    return RelationalSchema(domain=domain, tables=tuple(tables))


def build_schema_prompt(examples: Sequence[Timeline], domain: str) -> str:
    """Deterministic schema-generation prompt embedding 2-3 example timelines."""
    if not 2 <= len(examples) <= 3:
        raise ValueError(f"expected 2-3 example timelines, got {len(examples)}")
    for t in examples:
        if t.domain != domain:
            raise ValueError(f"timeline {t.entity_name!r} has domain {t.domain!r}, not {domain!r}")
    parts = [
        f"You are designing a relational database for the {domain!r} domain from "
        "JSON-formatted infobox timelines sampled over time.",
        "Produce a Third Normal Form (3NF) SQLite schema for this domain.",
        THREE_NF_INSTRUCTION,
        ARCHETYPE_INSTRUCTION,
        "Answer with CREATE TABLE statements in a single ```sql code fence.",
        "",
        "Example timelines:",
    ]
    for i, timeline in enumerate(examples, 1):
        parts.append(f"--- Example {i} ---")
        parts.append(ingest.serialize_timeline(timeline).decode("utf-8").rstrip())
    return "\n".join(parts) + "\n"


_FENCE_RE = re.compile(r"```[A-Za-z0-9_+-]*\n(.*?)```", re.DOTALL)


def extract_create_statements(response: str) -> str:
    """Pull DDL out of an LLM response: fenced code first, then bare CREATE TABLE."""
    for block in _FENCE_RE.findall(response):
        if block.strip():
            return block.strip()
    idx = response.upper().find("CREATE TABLE")
    if idx >= 0:
        return response[idx:].strip()
    raise SqlExtractionError("no CREATE statement found in response", response)


def generate_schema_llm(
    prompt: str,
    client,
    domain: str = "",
    model_id: str = "default",
    anchor: str = schema_mod.DEFAULT_TEMPORAL_ANCHOR,
) -> SchemaGenResult:
    """One client call, DDL extraction, parse, and a declarative 3NF report."""
    request = CompletionRequest(
        system_text="You design normalized relational database schemas.",
        user_text=prompt,
        model_id=model_id,
    )
    result = client.complete(request)
    ddl = extract_create_statements(result.text)
    try:
        parsed = schema_mod.parse_ddl(ddl, domain=domain, anchor=anchor)
    except schema_mod.SchemaError as exc:
        exc.response = result.text  # keep the raw response for auditing
        raise
    report = schema_mod.validate_3nf(parsed, anchor=anchor)
    return SchemaGenResult(schema=parsed, report=report, raw_response=result.text)


def write_schema_artifacts(
    result: SchemaGenResult, out_dir: str | Path, domain: str
) -> tuple[Path, Path]:
    """Persist <domain>.schema.sql and <domain>.schema.report.json."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sql_path = out / f"{domain}.schema.sql"
    report_path = out / f"{domain}.schema.report.json"
    sql_path.write_text(schema_mod.emit_ddl(result.schema), encoding="utf-8")
    report_path.write_text(
        json.dumps(result.report.to_json_dict(), indent=2) + "\n", encoding="utf-8"
    )
    return sql_path, report_path
