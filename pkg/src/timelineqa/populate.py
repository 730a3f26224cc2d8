"""Create SQLite databases from schemas and load cleaned timelines into them.

Insertion is defensive throughout: every value passes the cleaning pipeline
(failures become NULL, never crashes), lookup rows are upserted so UNIQUE
violations fall back to the existing row id, and the load report accounts
for every source field occurrence (inserted | null-coerced | unmapped |
failed).
"""

from __future__ import annotations

import json
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from . import ingest
from .ingest import Timeline
from .schema import RelationalSchema, TableDef, emit_ddl, sanitize_identifier
from .schemagen import profile_fields


class PopulateError(Exception):
    pass


class ConflictError(PopulateError):
    """Database file already exists and --force was not given."""


class ContractError(PopulateError):
    """Operation precondition violated (e.g. upsert without a unique key)."""


class DuplicateSnapshotError(PopulateError):
    """A snapshot row already exists with different values."""


class IntegrityViolationError(PopulateError):
    pass


class Database:
    """Handle pairing a SQLite connection with the schema it was created from."""

    def __init__(self, path: str | Path, schema: RelationalSchema, conn: sqlite3.Connection):
        self.path = Path(path)
        self.schema = schema
        self.conn = conn

    def read_only(self) -> sqlite3.Connection:
        return sqlite3.connect(f"file:{self.path}?mode=ro", uri=True)

    def close(self) -> None:
        self.conn.close()


def create_database(schema: RelationalSchema, path: str | Path, force: bool = False) -> Database:
    """Create an empty database with the schema's tables and constraints enforced."""
    path = Path(path)
    if path.exists():
        if not force:
            raise ConflictError(f"database {path} already exists (use force to overwrite)")
        path.unlink()
    ddl = emit_ddl(schema)  # raises on structural problems and FK cycles
    path.parent.mkdir(parents=True, exist_ok=True)
    conn = sqlite3.connect(path)
    conn.execute("PRAGMA foreign_keys = ON")
    conn.executescript(ddl)
    conn.commit()
    return Database(path, schema, conn)


def open_database(schema: RelationalSchema, path: str | Path) -> Database:
    path = Path(path)
    if not path.exists():
        raise PopulateError(f"database {path} does not exist")
    conn = sqlite3.connect(path)
    conn.execute("PRAGMA foreign_keys = ON")
    return Database(path, schema, conn)


def _single_integer_pk(table: TableDef) -> str:
    if len(table.primary_key) != 1:
        raise ContractError(f"{table.name} has no single-column id primary key")
    pk = table.column(table.primary_key[0])
    assert pk is not None
    if pk.sql_type != "INTEGER":
        raise ContractError(f"{table.name} primary key {pk.name} is not INTEGER")
    return pk.name


def _has_unique_key(table: TableDef, key_columns: Sequence[str]) -> bool:
    wanted = {c.lower() for c in key_columns}
    if len(wanted) == 1:
        (col_name,) = wanted
        col = table.column(col_name)
        if col is not None and col.unique:
            return True
    for uc in table.unique_constraints:
        if {c.lower() for c in uc} == wanted:
            return True
    return {c.lower() for c in table.primary_key} == wanted


def upsert_lookup(db: Database, table_name: str, natural_key: Mapping[str, object]) -> int:
    """Insert a lookup row; on a uniqueness violation return the existing row id."""
    table = db.schema.table(table_name)
    if table is None:
        raise ContractError(f"unknown table {table_name!r}")
    if not _has_unique_key(table, list(natural_key)):
        raise ContractError(f"{table_name} has no UNIQUE constraint over {sorted(natural_key)}")
    pk = _single_integer_pk(table)
    columns = list(natural_key)
    placeholders = ", ".join("?" for _ in columns)
    values = [natural_key[c] for c in columns]
    try:
        cur = db.conn.execute(
            f"INSERT INTO {table.name} ({', '.join(columns)}) VALUES ({placeholders})", values
        )
        return cur.lastrowid
    except sqlite3.IntegrityError:
        where = " AND ".join(f"{c} = ?" for c in columns)
        row = db.conn.execute(f"SELECT {pk} FROM {table.name} WHERE {where}", values).fetchone()
        if row is None:
            raise
        return row[0]


@dataclass
class InsertPlan:
    """A batch of rows for one table, with optional key-based deduplication.

    Every row must cover all non-nullable columns of the target table.  When
    a dedupe key is set, a row whose key already exists is skipped if the
    stored values match and rejected (DuplicateSnapshotError) if they differ.
    """

    table: str
    rows: list[dict[str, object]]
    dedupe_key: tuple[str, ...] | None = None


def execute_insert_plan(db: Database, plan: InsertPlan) -> int:
    """Apply an InsertPlan; returns the number of rows actually inserted."""
    table = db.schema.table(plan.table)
    if table is None:
        raise ContractError(f"unknown table {plan.table!r}")
    required = [c.name for c in table.columns if not c.nullable]
    for row in plan.rows:
        missing = [c for c in required if c not in row]
        if missing:
            raise ContractError(f"{plan.table}: row is missing non-nullable columns {missing}")

    inserted = 0
    for row in plan.rows:
        if plan.dedupe_key:
            where = " AND ".join(f"{c} = ?" for c in plan.dedupe_key)
            key_values = [row[c] for c in plan.dedupe_key]
            existing = db.conn.execute(
                f"SELECT * FROM {table.name} WHERE {where}", key_values
            ).fetchone()
            if existing is not None:
                names = [
                    d[0]
                    for d in db.conn.execute(f"SELECT * FROM {table.name} LIMIT 0").description
                ]
                stored = dict(zip(names, existing))
                for col, val in row.items():
                    if stored.get(col) != val:
                        raise DuplicateSnapshotError(
                            f"{table.name} already has a row for "
                            f"{dict(zip(plan.dedupe_key, key_values))} with different "
                            f"{col!r} ({stored.get(col)!r} != {val!r})"
                        )
                continue
        columns = list(row)
        placeholders = ", ".join("?" for _ in columns)
        try:
            db.conn.execute(
                f"INSERT INTO {table.name} ({', '.join(columns)}) VALUES ({placeholders})",
                [row[c] for c in columns],
            )
        except sqlite3.IntegrityError as exc:
            message = str(exc)
            if "UNIQUE" in message or "PRIMARY" in message:
                raise DuplicateSnapshotError(
                    f"duplicate key in {table.name}: {message}"
                ) from exc
            raise IntegrityViolationError(f"{table.name}: {message}") from exc
        inserted += 1
    return inserted


@dataclass(frozen=True)
class ScalarTarget:
    table: str
    column: str


@dataclass(frozen=True)
class CompositeTarget:
    table: str
    first_column: str
    second_column: str


@dataclass(frozen=True)
class RoleTarget:
    """A role-like field normalized through person + role lookups and a bridge."""

    value_table: str
    value_name_column: str
    role_table: str
    role_name_column: str
    bridge_table: str
    role_title: str


@dataclass
class FieldMapping:
    """Explicit, serializable mapping from source fields to schema targets."""

    domain: str
    entity_table: str
    entity_name_column: str
    snapshot_table: str
    anchor_column: str
    entity_ref_column: str | None
    fields: dict[str, ScalarTarget | CompositeTarget | RoleTarget] = field(default_factory=dict)

    def to_json_dict(self) -> dict:
        out = {
            "domain": self.domain,
            "entity_table": self.entity_table,
            "entity_name_column": self.entity_name_column,
            "snapshot_table": self.snapshot_table,
            "anchor_column": self.anchor_column,
            "entity_ref_column": self.entity_ref_column,
            "fields": {},
        }
        for name, target in self.fields.items():
            if isinstance(target, ScalarTarget):
                out["fields"][name] = {
                    "kind": "scalar",
                    "table": target.table,
                    "column": target.column,
                }
            elif isinstance(target, CompositeTarget):
                out["fields"][name] = {
                    "kind": "composite",
                    "table": target.table,
                    "first_column": target.first_column,
                    "second_column": target.second_column,
                }
            else:
                out["fields"][name] = {
                    "kind": "role",
                    "value_table": target.value_table,
                    "value_name_column": target.value_name_column,
                    "role_table": target.role_table,
                    "role_name_column": target.role_name_column,
                    "bridge_table": target.bridge_table,
                    "role_title": target.role_title,
                }
        return out

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "FieldMapping":
        mapping = cls(
            domain=doc["domain"],
            entity_table=doc["entity_table"],
            entity_name_column=doc["entity_name_column"],
            snapshot_table=doc["snapshot_table"],
            anchor_column=doc["anchor_column"],
            entity_ref_column=doc.get("entity_ref_column"),
        )
        for name, spec in doc.get("fields", {}).items():
            if spec["kind"] == "scalar":
                mapping.fields[name] = ScalarTarget(spec["table"], spec["column"])
            elif spec["kind"] == "composite":
                mapping.fields[name] = CompositeTarget(
                    spec["table"], spec["first_column"], spec["second_column"]
                )
            else:
                mapping.fields[name] = RoleTarget(
                    value_table=spec["value_table"],
                    value_name_column=spec["value_name_column"],
                    role_table=spec["role_table"],
                    role_name_column=spec["role_name_column"],
                    bridge_table=spec["bridge_table"],
                    role_title=spec["role_title"],
                )
        return mapping

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "FieldMapping":
        return cls.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _unique_text_column(table: TableDef) -> str | None:
    for col in table.columns:
        if col.sql_type == "TEXT" and col.unique:
            return col.name
    for uc in table.unique_constraints:
        if len(uc) == 1:
            col = table.column(uc[0])
            if col is not None and col.sql_type == "TEXT":
                return col.name
    for col in table.columns:
        if col.sql_type == "TEXT" and not col.is_primary_key_part:
            return col.name
    return None


def _pretty_title(field_name: str) -> str:
    return " ".join(w.capitalize() for w in field_name.replace(".", " ").split("_") if w)


def derive_mapping(
    schema: RelationalSchema, timelines: Sequence[Timeline], anchor: str = "snapshot_id"
) -> FieldMapping:
    """Auto-derive a mapping by sanitized-name match; hand-editable after saving.

    Locates the snapshot table, the entity table it references, and (when
    present) the bridge family for role-like fields.  Fields that match no
    column stay unmapped and are reported by populate_timeline.
    """
    snapshot_table = next((t for t in schema.tables if t.archetype == "snapshot"), None)
    if snapshot_table is None:
        raise ContractError("schema has no snapshot-archetype table")

    entity_table = None
    entity_ref = None
    for fk in snapshot_table.foreign_keys:
        target = schema.table(fk.to_table)
        if target is not None and target.archetype == "entity" and len(fk.from_columns) == 1:
            entity_table = target
            entity_ref = fk.from_columns[0]
            break
    if entity_table is None:
        raise ContractError("snapshot table has no foreign key to an entity table")
    entity_name_col = _unique_text_column(entity_table)
    if entity_name_col is None:
        raise ContractError(f"entity table {entity_table.name} has no text name column")

    bridge = None
    for t in schema.tables:
        if t.archetype != "bridge":
            continue
        if any(fk.to_table.lower() == snapshot_table.name.lower() for fk in t.foreign_keys):
            bridge = t
            break
    value_table = role_table = None
    if bridge is not None:
        for fk in bridge.foreign_keys:
            target = schema.table(fk.to_table)
            if target is None or target.name.lower() in (
                snapshot_table.name.lower(),
                entity_table.name.lower(),
            ):
                continue
            if target.archetype == "attribute":
                role_table = target
            elif target.archetype == "entity":
                value_table = target

    mapping = FieldMapping(
        domain=schema.domain,
        entity_table=entity_table.name,
        entity_name_column=entity_name_col,
        snapshot_table=snapshot_table.name,
        anchor_column=next(c for c in snapshot_table.primary_key if _anchor_like(c, anchor)),
        entity_ref_column=entity_ref,
    )

    snapshot_cols = {c.name.lower(): c.name for c in snapshot_table.columns}
    for profile in profile_fields(timelines):
        base = sanitize_identifier(profile.name)
        if profile.kind == "composite":
            first = snapshot_cols.get(f"{base}_first")
            second = snapshot_cols.get(f"{base}_second")
            if first and second:
                mapping.fields[profile.name] = CompositeTarget(snapshot_table.name, first, second)
        elif profile.kind == "role":
            if bridge is not None and value_table is not None and role_table is not None:
                value_name = _unique_text_column(value_table)
                role_name = _unique_text_column(role_table)
                if value_name and role_name:
                    mapping.fields[profile.name] = RoleTarget(
                        value_table=value_table.name,
                        value_name_column=value_name,
                        role_table=role_table.name,
                        role_name_column=role_name,
                        bridge_table=bridge.name,
                        role_title=_pretty_title(profile.name),
                    )
        else:
            column = snapshot_cols.get(base)
            if column:
                mapping.fields[profile.name] = ScalarTarget(snapshot_table.name, column)
    return mapping


def _anchor_like(name: str, anchor: str) -> bool:
    return name.lower().replace("_", "") == anchor.lower().replace("_", "")


@dataclass
class LoadReport:
    """Field-occurrence accounting for one timeline load.

    inserted + null_coerced + unmapped + failed equals the number of
    flattened field occurrences across all snapshots.
    """

    entity: str
    domain: str
    inserted: int = 0
    null_coerced: int = 0
    unmapped: int = 0
    failed: int = 0
    unmapped_fields: dict[str, int] = field(default_factory=dict)
    rows_inserted: dict[str, int] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)

    def total_fields(self) -> int:
        return self.inserted + self.null_coerced + self.unmapped + self.failed

    def to_json_dict(self) -> dict:
        return {
            "entity": self.entity,
            "domain": self.domain,
            "inserted": self.inserted,
            "null_coerced": self.null_coerced,
            "unmapped": self.unmapped,
            "failed": self.failed,
            "unmapped_fields": dict(self.unmapped_fields),
            "rows_inserted": dict(self.rows_inserted),
            "failures": list(self.failures),
        }


def _clean_scalar(raw: str, sql_type: str):
    nn = ingest.normalize_null(raw)
    if nn.is_null:
        return None
    if sql_type == "INTEGER":
        return ingest.safe_int(nn.value).value
    if sql_type == "REAL":
        return ingest.safe_real(nn.value).value
    if sql_type == "DATE":
        return ingest.normalize_date(nn.value).value
    return nn.value


def populate_timeline(
    db: Database,
    timeline: Timeline,
    mapping: FieldMapping,
    schema: RelationalSchema | None = None,
) -> LoadReport:
    """Load one timeline: entity upsert, one snapshot row per timestamp, and
    role assignments through the bridge family.

    Re-loading the same timeline is idempotent; a snapshot row that already
    exists with different values raises DuplicateSnapshotError.
    """
    schema = schema or db.schema
    report = LoadReport(entity=timeline.entity_name, domain=timeline.domain)
    snap_table = schema.table(mapping.snapshot_table)
    if snap_table is None:
        raise ContractError(f"mapping names unknown snapshot table {mapping.snapshot_table!r}")
    counts_before = _table_counts(db, schema)

    entity_id = upsert_lookup(
        db, mapping.entity_table, {mapping.entity_name_column: timeline.entity_name}
    )

    dedupe_key = [mapping.anchor_column]
    if mapping.entity_ref_column:
        dedupe_key.append(mapping.entity_ref_column)
    snapshot_plan = InsertPlan(snap_table.name, [], dedupe_key=tuple(dedupe_key))
    role_ops: list[tuple[str, list[tuple[RoleTarget, str]]]] = []

    for snap in timeline.snapshots:
        flat = ingest.flatten_fields(snap.fields)
        scalar_values: dict[str, object] = {mapping.anchor_column: snap.timestamp}
        if mapping.entity_ref_column:
            scalar_values[mapping.entity_ref_column] = entity_id
        role_rows: list[tuple[RoleTarget, str]] = []

        for name, value in flat.items():
            raw = ingest.raw_text(value)
            target = mapping.fields.get(name)
            if target is None:
                report.unmapped += 1
                report.unmapped_fields[name] = report.unmapped_fields.get(name, 0) + 1
                continue
            if isinstance(target, ScalarTarget):
                col = snap_table.column(target.column)
                cleaned = _clean_scalar(raw, col.sql_type if col else "TEXT")
                scalar_values[target.column] = cleaned
                if cleaned is None:
                    report.null_coerced += 1
                else:
                    report.inserted += 1
            elif isinstance(target, CompositeTarget):
                nn = ingest.normalize_null(raw)
                pair = (None, None)
                if not nn.is_null:
                    try:
                        pair = ingest.parse_composite(nn.value).value
                    except ingest.CompositeShapeError:
                        pair = (None, None)
                scalar_values[target.first_column] = pair[0]
                scalar_values[target.second_column] = pair[1]
                if pair == (None, None):
                    report.null_coerced += 1
                else:
                    report.inserted += 1
            else:
                nn = ingest.normalize_null(raw)
                if nn.is_null:
                    report.null_coerced += 1
                else:
                    role_rows.append((target, nn.value))

        snapshot_plan.rows.append(scalar_values)
        role_ops.append((snap.timestamp, role_rows))

    execute_insert_plan(db, snapshot_plan)

    for timestamp, role_rows in role_ops:
        for target, person_name in role_rows:
            try:
                person_id = upsert_lookup(
                    db, target.value_table, {target.value_name_column: person_name}
                )
                role_id = upsert_lookup(
                    db, target.role_table, {target.role_name_column: target.role_title}
                )
                _insert_bridge_row(
                    db, schema, mapping, target, timestamp, entity_id, person_id, role_id
                )
                report.inserted += 1
            except sqlite3.IntegrityError as exc:
                report.failed += 1
                report.failures.append(
                    f"{target.bridge_table}: {person_name!r} at {timestamp}: {exc}"
                )
    db.conn.commit()
    for table, after in _table_counts(db, schema).items():
        delta = after - counts_before.get(table, 0)
        if delta:
            report.rows_inserted[table] = delta
    return report


def _table_counts(db: Database, schema: RelationalSchema) -> dict[str, int]:
    return {
        t.name: db.conn.execute(f"SELECT COUNT(*) FROM {t.name}").fetchone()[0]
        for t in schema.tables
    }


def _insert_bridge_row(
    db: Database,
    schema: RelationalSchema,
    mapping: FieldMapping,
    target: RoleTarget,
    timestamp: str,
    entity_id: int,
    person_id: int,
    role_id: int,
) -> None:
    bridge = schema.table(target.bridge_table)
    if bridge is None:
        raise ContractError(f"mapping names unknown bridge table {target.bridge_table!r}")
    values: dict[str, object] = {}
    for fk in bridge.foreign_keys:
        to_table = fk.to_table.lower()
        for from_col, to_col in zip(fk.from_columns, fk.to_columns):
            if to_table == mapping.snapshot_table.lower():
                if _anchor_like(to_col, mapping.anchor_column):
                    values[from_col] = timestamp
                elif mapping.entity_ref_column and to_col.lower() == mapping.entity_ref_column.lower():
                    values[from_col] = entity_id
            elif to_table == target.value_table.lower():
                values[from_col] = person_id
            elif to_table == target.role_table.lower():
                values[from_col] = role_id
            elif to_table == mapping.entity_table.lower():
                values[from_col] = entity_id
    missing = [c for c in bridge.primary_key if c not in values]
    if missing:
        raise ContractError(f"cannot fill bridge columns {missing} of {bridge.name}")
    columns = list(values)
    placeholders = ", ".join("?" for _ in columns)
    db.conn.execute(
        f"INSERT OR IGNORE INTO {bridge.name} ({', '.join(columns)}) VALUES ({placeholders})",
        [values[c] for c in columns],
    )


@dataclass(frozen=True)
class Violation:
    table: str
    edge: str
    count: int

    def __str__(self) -> str:
        return f"{self.table}: {self.count} row(s) violate {self.edge}"


def verify_integrity(db: Database, schema: RelationalSchema | None = None) -> list[Violation]:
    """Anti-join every foreign-key edge; an empty list means consistent."""
    schema = schema or db.schema
    violations = []
    for table in schema.tables:
        for fk in table.foreign_keys:
            on = " AND ".join(
                f"child.{f} = parent.{t}" for f, t in zip(fk.from_columns, fk.to_columns)
            )
            not_null = " AND ".join(f"child.{f} IS NOT NULL" for f in fk.from_columns)
            probe = f"parent.{fk.to_columns[0]}"
            sql = (
                f"SELECT COUNT(*) FROM {table.name} AS child "
                f"LEFT JOIN {fk.to_table} AS parent ON {on} "
                f"WHERE {not_null} AND {probe} IS NULL"
            )
            count = db.conn.execute(sql).fetchone()[0]
            if count:
                edge = f"FK ({', '.join(fk.from_columns)}) -> {fk.to_table}({', '.join(fk.to_columns)})"
                violations.append(Violation(table.name, edge, count))
    return violations
