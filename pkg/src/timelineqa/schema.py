"""Relational schema model: four table archetypes, structural 3NF checks, DDL I/O.

Archetype inference is heuristic (the four kinds are named but not formally
defined upstream of this package): bridge tables have a composite primary
key fully covered by foreign keys, snapshot tables carry the temporal-anchor
column in their primary key, attribute tables are single-key lookups with a
role/format/type-flavored name or a ``*_title`` label column, everything
else is an entity table.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Iterable, Mapping, Sequence

SQL_TYPES = ("INTEGER", "REAL", "TEXT", "DATE")
ARCHETYPES = ("entity", "attribute", "snapshot", "bridge")
DEFAULT_TEMPORAL_ANCHOR = "snapshot_id"

IDENTIFIER_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")

_ATTRIBUTE_NAME_HINTS = ("role", "format", "type", "category", "status")


class SchemaError(Exception):
    """Base class for schema failures."""


class SchemaStructureError(SchemaError):
    """Schema violates structural invariants; carries the full error list."""

    def __init__(self, errors: Sequence[str]):
        super().__init__("; ".join(errors))
        self.errors = list(errors)


class DdlParseError(SchemaError):
    """DDL text contains an unsupported or malformed construct."""

    def __init__(self, message: str, statement_index: int | None = None, token: str | None = None):
        detail = message
        if statement_index is not None:
            detail = f"statement {statement_index}: {detail}"
        if token is not None:
            detail = f"{detail} (near {token!r})"
        super().__init__(detail)
        self.statement_index = statement_index
        self.token = token


class DdlOrderError(SchemaError):
    """Foreign keys form a cycle, so no dependency order exists."""

    def __init__(self, cycle: Sequence[str]):
        super().__init__(f"foreign-key cycle among tables: {', '.join(cycle)}")
        self.cycle = list(cycle)


@dataclass(frozen=True)
class ColumnDef:
    name: str
    sql_type: str
    nullable: bool = True
    is_primary_key_part: bool = False
    unique: bool = False


@dataclass(frozen=True)
class ForeignKeyDef:
    from_columns: tuple[str, ...]
    to_table: str
    to_columns: tuple[str, ...]


@dataclass(frozen=True)
class TableDef:
    name: str
    archetype: str
    columns: tuple[ColumnDef, ...]
    primary_key: tuple[str, ...]
    foreign_keys: tuple[ForeignKeyDef, ...] = ()
    unique_constraints: tuple[tuple[str, ...], ...] = ()

    def column(self, name: str) -> ColumnDef | None:
        lowered = name.lower()
        for col in self.columns:
            if col.name.lower() == lowered:
                return col
        return None

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def non_key_columns(self) -> list[str]:
        pk = {c.lower() for c in self.primary_key}
        return [c.name for c in self.columns if c.name.lower() not in pk]


@dataclass(frozen=True)
class RelationalSchema:
    domain: str
    tables: tuple[TableDef, ...]

    def table(self, name: str) -> TableDef | None:
        lowered = name.lower()
        for t in self.tables:
            if t.name.lower() == lowered:
                return t
        return None

    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]


@dataclass
class NormalizationReport:
    """Outcome of the structural 3NF inspection; violations are reported, not raised."""

    atomicity_violations: list[tuple[str, str, str]] = field(default_factory=list)
    partial_dependency_violations: list[tuple[str, str, str]] = field(default_factory=list)
    transitive_dependency_violations: list[tuple[str, str, str]] = field(default_factory=list)
    structural_errors: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not (
            self.atomicity_violations
            or self.partial_dependency_violations
            or self.transitive_dependency_violations
            or self.structural_errors
        )

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "atomicity_violations": [list(v) for v in self.atomicity_violations],
            "partial_dependency_violations": [list(v) for v in self.partial_dependency_violations],
            "transitive_dependency_violations": [
                list(v) for v in self.transitive_dependency_violations
            ],
            "structural_errors": list(self.structural_errors),
        }


def make_table(
    name: str,
    columns: Sequence[ColumnDef],
    primary_key: Sequence[str],
    foreign_keys: Sequence[ForeignKeyDef] = (),
    unique_constraints: Sequence[Sequence[str]] = (),
    archetype: str | None = None,
    anchor: str = DEFAULT_TEMPORAL_ANCHOR,
) -> TableDef:
    """Build a TableDef, normalizing PK flags (PK parts are never nullable)."""
    pk = tuple(primary_key)
    pk_lower = {c.lower() for c in pk}
    normalized = tuple(
        replace(col, is_primary_key_part=col.name.lower() in pk_lower, nullable=False)
        if col.name.lower() in pk_lower
        else replace(col, is_primary_key_part=False)
        for col in columns
    )
    table = TableDef(
        name=name,
        archetype=archetype or "entity",
        columns=normalized,
        primary_key=pk,
        foreign_keys=tuple(foreign_keys),
        unique_constraints=tuple(tuple(u) for u in unique_constraints),
    )
    if archetype is None:
        table = replace(table, archetype=infer_archetype(table, anchor=anchor))
    return table


def _is_anchor(name: str, anchor: str) -> bool:
    strip = lambda s: s.lower().replace("_", "")
    return strip(name) == strip(anchor)


def infer_archetype(table: TableDef, anchor: str = DEFAULT_TEMPORAL_ANCHOR) -> str:
    fk_cols = {c.lower() for fk in table.foreign_keys for c in fk.from_columns}
    pk_lower = [c.lower() for c in table.primary_key]
    if len(table.primary_key) >= 2 and all(c in fk_cols for c in pk_lower):
        return "bridge"
    if any(_is_anchor(c, anchor) for c in table.primary_key):
        return "snapshot"
    non_key = table.non_key_columns()
    if len(table.primary_key) == 1 and len(non_key) == 1:
        lowered = table.name.lower()
        if any(hint in lowered for hint in _ATTRIBUTE_NAME_HINTS) or non_key[0].lower().endswith(
            "_title"
        ):
            return "attribute"
    return "entity"


def with_inferred_archetypes(
    schema: RelationalSchema, anchor: str = DEFAULT_TEMPORAL_ANCHOR
) -> RelationalSchema:
    return RelationalSchema(
        domain=schema.domain,
        tables=tuple(replace(t, archetype=infer_archetype(t, anchor=anchor)) for t in schema.tables),
    )


def structural_errors(schema: RelationalSchema, anchor: str = DEFAULT_TEMPORAL_ANCHOR) -> list[str]:
    """Check every declared invariant; returns human-readable problems."""
    errors: list[str] = []
    if not schema.tables:
        errors.append("schema has no tables")
        return errors

    seen: dict[str, str] = {}
    for t in schema.tables:
        if not IDENTIFIER_RE.match(t.name):
            errors.append(f"table name {t.name!r} is not a valid identifier")
        if t.name.lower() in seen:
            errors.append(f"duplicate table name {t.name!r}")
        seen[t.name.lower()] = t.name

    for t in schema.tables:
        col_seen: set[str] = set()
        for col in t.columns:
            if not IDENTIFIER_RE.match(col.name):
                errors.append(f"{t.name}: column name {col.name!r} is not a valid identifier")
            if col.name.lower() in col_seen:
                errors.append(f"{t.name}: duplicate column {col.name!r}")
            col_seen.add(col.name.lower())
            if col.sql_type not in SQL_TYPES:
                errors.append(f"{t.name}.{col.name}: unknown sql type {col.sql_type!r}")
        if t.archetype not in ARCHETYPES:
            errors.append(f"{t.name}: unknown archetype {t.archetype!r}")
        if not t.primary_key:
            errors.append(f"{t.name}: primary key is empty")
        for pk_col in t.primary_key:
            if t.column(pk_col) is None:
                errors.append(f"{t.name}: primary key names unknown column {pk_col!r}")
        for uc in t.unique_constraints:
            for c in uc:
                if t.column(c) is None:
                    errors.append(f"{t.name}: unique constraint names unknown column {c!r}")
        for fk in t.foreign_keys:
            if not fk.from_columns or len(fk.from_columns) != len(fk.to_columns):
                errors.append(f"{t.name}: foreign key column lists empty or mismatched")
                continue
            for c in fk.from_columns:
                if t.column(c) is None:
                    errors.append(f"{t.name}: foreign key names unknown column {c!r}")
            target = schema.table(fk.to_table)
            if target is None:
                errors.append(f"{t.name}: foreign key references missing table {fk.to_table!r}")
                continue
            for c in fk.to_columns:
                if target.column(c) is None:
                    errors.append(
                        f"{t.name}: foreign key references unknown column {fk.to_table}.{c!r}"
                    )
        if t.archetype == "snapshot":
            anchored = [c for c in t.primary_key if _is_anchor(c, anchor)]
            if not anchored:
                errors.append(
                    f"{t.name}: snapshot table must include {anchor!r} in its primary key"
                )
        if t.archetype == "bridge":
            if len(t.primary_key) < 2:
                errors.append(f"{t.name}: bridge table needs a composite primary key")
            fk_cols = {c.lower() for fk in t.foreign_keys for c in fk.from_columns}
            for pk_col in t.primary_key:
                if pk_col.lower() not in fk_cols:
                    errors.append(
                        f"{t.name}: bridge primary-key column {pk_col!r} is not part of any foreign key"
                    )

    if not any(t.archetype == "snapshot" for t in schema.tables):
        errors.append("schema has no snapshot-archetype table")
    return errors


_COMPOSITE_PAREN_RE = re.compile(r".+\(.+\)\s*$")


def _atomicity_reason(value: str) -> str | None:
    if "/" in value:
        return f"embedded separator in {value!r}"
    if _COMPOSITE_PAREN_RE.match(value):
        return f"parenthesized suffix in {value!r}"
    if ", " in value:
        return f"comma-joined list in {value!r}"
    return None


def _fd_holds(rows: Sequence[Mapping], determinant: Sequence[str], dependent: str) -> bool:
    """Exact functional-dependency test over samples.

    Rows with a NULL determinant or dependent are no observation at all, and
    groups with fewer than 2 rows are vacuous; the FD holds only when at
    least one supported group exists and every supported group maps to a
    single dependent value.
    """
    groups: dict[tuple, list] = {}
    for row in rows:
        key = tuple(row.get(c) for c in determinant)
        value = row.get(dependent)
        if value is None or any(k is None for k in key):
            continue
        groups.setdefault(key, []).append(value)
    supported = [vals for vals in groups.values() if len(vals) >= 2]
    if not supported:
        return False
    return all(len(set(vals)) == 1 for vals in supported)


def validate_3nf(
    schema: RelationalSchema,
    samples: Mapping[str, Sequence[Mapping]] | None = None,
    anchor: str = DEFAULT_TEMPORAL_ANCHOR,
) -> NormalizationReport:
    """Structural 3NF inspection; sample rows enable the dependency checks.

    Without samples only declarative checks run (naming-based atomicity and
    the bridge/snapshot structural rules).  Violations are reported, never
    raised, mirroring a manual review workflow.
    """
    report = NormalizationReport(structural_errors=structural_errors(schema, anchor=anchor))

    for t in schema.tables:
        for col in t.columns:
            lowered = col.name.lower()
            if "_and_" in lowered or lowered.endswith(("_list", "_csv")):
                report.atomicity_violations.append(
                    (t.name, col.name, "column name declares a multi-valued field")
                )

    if not samples:
        return report

    for t in schema.tables:
        rows = list(samples.get(t.name, ()))
        if not rows:
            continue
        pk_lower = {c.lower() for c in t.primary_key}
        non_key = t.non_key_columns()

        for col in t.columns:
            if col.sql_type != "TEXT" or col.name.lower() in pk_lower:
                continue
            for row in rows:
                value = row.get(col.name)
                if not isinstance(value, str):
                    continue
                reason = _atomicity_reason(value)
                if reason:
                    report.atomicity_violations.append((t.name, col.name, reason))
                    break

        if len(t.primary_key) >= 2:
            for size in range(1, len(t.primary_key)):
                for subset in combinations(t.primary_key, size):
                    for col in non_key:
                        if _fd_holds(rows, subset, col):
                            report.partial_dependency_violations.append(
                                (t.name, col, f"determined by PK subset ({', '.join(subset)})")
                            )

        key_like = {c.lower() for c in t.primary_key}
        for col in t.columns:
            if col.unique:
                key_like.add(col.name.lower())
        for uc in t.unique_constraints:
            if len(uc) == 1:
                key_like.add(uc[0].lower())
        for a in non_key:
            if a.lower() in key_like:
                continue
            for b in non_key:
                if a == b:
                    continue
                if _fd_holds(rows, [a], b):
                    report.transitive_dependency_violations.append(
                        (t.name, f"{a} -> {b}", "non-key column determines another non-key column")
                    )
    return report


def _dependency_order(schema: RelationalSchema) -> list[TableDef]:
    placed: list[TableDef] = []
    placed_names: set[str] = set()
    remaining = list(schema.tables)
    while remaining:
        progressed = False
        for t in list(remaining):
            deps = {
                fk.to_table.lower()
                for fk in t.foreign_keys
                if fk.to_table.lower() != t.name.lower()
            }
            if deps <= placed_names:
                placed.append(t)
                placed_names.add(t.name.lower())
                remaining.remove(t)
                progressed = True
        if not progressed:
            raise DdlOrderError([t.name for t in remaining])
    return placed


def emit_ddl(schema: RelationalSchema, anchor: str = DEFAULT_TEMPORAL_ANCHOR) -> str:
    """Render deterministic CREATE TABLE statements, referenced tables first."""
    errors = structural_errors(schema, anchor=anchor)
    if errors:
        raise SchemaStructureError(errors)
    lines: list[str] = []
    if schema.domain:
        lines.append(f"-- domain: {schema.domain}")
    for t in _dependency_order(schema):
        body: list[str] = []
        for col in t.columns:
            parts = [col.name, col.sql_type]
            if not col.nullable:
                parts.append("NOT NULL")
            if col.unique:
                parts.append("UNIQUE")
            body.append("    " + " ".join(parts))
        body.append(f"    PRIMARY KEY ({', '.join(t.primary_key)})")
        for uc in t.unique_constraints:
            body.append(f"    UNIQUE ({', '.join(uc)})")
        for fk in t.foreign_keys:
            body.append(
                f"    FOREIGN KEY ({', '.join(fk.from_columns)})"
                f" REFERENCES {fk.to_table} ({', '.join(fk.to_columns)})"
            )
        lines.append(f"CREATE TABLE {t.name} (")
        lines.append(",\n".join(body))
        lines.append(");")
        lines.append("")
    return "\n".join(lines)


_TYPE_MAP = {
    "INTEGER": "INTEGER",
    "INT": "INTEGER",
    "BIGINT": "INTEGER",
    "SMALLINT": "INTEGER",
    "TINYINT": "INTEGER",
    "SERIAL": "INTEGER",
    "BOOLEAN": "INTEGER",
    "REAL": "REAL",
    "FLOAT": "REAL",
    "DOUBLE": "REAL",
    "DECIMAL": "REAL",
    "NUMERIC": "REAL",
    "TEXT": "TEXT",
    "VARCHAR": "TEXT",
    "CHAR": "TEXT",
    "STRING": "TEXT",
    "CLOB": "TEXT",
    "DATE": "DATE",
    "DATETIME": "DATE",
    "TIMESTAMP": "DATE",
    "TIME": "DATE",
}

_IGNORABLE_COLUMN_FLAGS = {"AUTOINCREMENT", "AUTO_INCREMENT"}

_TOKEN_RE = re.compile(
    r"--[^\n]*"
    r"|`[^`]+`"
    r"|\"[^\"]+\""
    r"|\[[^\]]+\]"
    r"|[A-Za-z_][A-Za-z0-9_]*"
    r"|\d+"
    r"|[(),;]"
    r"|\S"
)


class _TokenStream:
    def __init__(self, text: str):
        self.tokens = [t for t in _TOKEN_RE.findall(text) if not t.startswith("--")]
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self) -> str | None:
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def match_keyword(self, *words: str) -> bool:
        """Consume the given keyword sequence if it is next (case-insensitive)."""
        end = self.pos + len(words)
        if end > len(self.tokens):
            return False
        window = self.tokens[self.pos : end]
        if all(tok.upper() == word for tok, word in zip(window, words)):
            self.pos = end
            return True
        return False


def _unquote(token: str) -> str:
    if token and token[0] in "`\"[":
        return token[1:-1]
    return token


def _is_identifier_token(token: str | None) -> bool:
    if token is None:
        return False
    if token[0] in "`\"[":
        return True
    return bool(IDENTIFIER_RE.match(token))


def parse_ddl(
    text: str, domain: str | None = None, anchor: str = DEFAULT_TEMPORAL_ANCHOR
) -> RelationalSchema:
    """Parse CREATE TABLE statements (the bare ``Name (...)`` form is also accepted).

    Supports column definitions with INTEGER/REAL/TEXT/DATE-family types,
    NOT NULL, UNIQUE and PRIMARY KEY column constraints, table-level
    PRIMARY KEY / UNIQUE / FOREIGN KEY ... REFERENCES constraints, and
    ignorable vendor noise (AUTO_INCREMENT, type arguments).  Archetypes are
    inferred after parsing; structural problems raise SchemaStructureError.
    """
    domain_match = re.search(r"^--\s*domain:\s*(.+)$", text, re.MULTILINE)
    if domain is None and domain_match:
        domain = domain_match.group(1).strip()

    stream = _TokenStream(text)
    tables: list[TableDef] = []
    statement_index = 0

    while stream.peek() is not None:
        if stream.peek() == ";":
            stream.next()
            continue
        statement_index += 1
        stream.match_keyword("CREATE", "TABLE")
        name_tok = stream.next()
        if not _is_identifier_token(name_tok):
            raise DdlParseError("expected table name", statement_index, name_tok)
        table_name = _unquote(name_tok)
        if stream.next() != "(":
            raise DdlParseError(f"expected '(' after table name {table_name!r}", statement_index)

        columns: list[ColumnDef] = []
        primary_key: list[str] = []
        foreign_keys: list[ForeignKeyDef] = []
        unique_constraints: list[tuple[str, ...]] = []

        def parse_column_list() -> list[str]:
            if stream.next() != "(":
                raise DdlParseError("expected '(' before column list", statement_index)
            cols: list[str] = []
            while True:
                tok = stream.next()
                if not _is_identifier_token(tok):
                    raise DdlParseError("expected column name", statement_index, tok)
                cols.append(_unquote(tok))
                sep = stream.next()
                if sep == ")":
                    return cols
                if sep != ",":
                    raise DdlParseError("expected ',' or ')' in column list", statement_index, sep)

        while True:
            if stream.match_keyword("PRIMARY", "KEY"):
                primary_key = parse_column_list()
            elif stream.match_keyword("FOREIGN", "KEY"):
                from_cols = parse_column_list()
                if not stream.match_keyword("REFERENCES"):
                    raise DdlParseError(
                        "FOREIGN KEY without REFERENCES", statement_index, stream.peek()
                    )
                target_tok = stream.next()
                if not _is_identifier_token(target_tok):
                    raise DdlParseError("expected referenced table", statement_index, target_tok)
                to_cols = parse_column_list()
                foreign_keys.append(
                    ForeignKeyDef(tuple(from_cols), _unquote(target_tok), tuple(to_cols))
                )
            elif stream.match_keyword("UNIQUE"):
                unique_constraints.append(tuple(parse_column_list()))
            else:
                col_tok = stream.next()
                if not _is_identifier_token(col_tok):
                    raise DdlParseError("expected column definition", statement_index, col_tok)
                col_name = _unquote(col_tok)
                type_tok = stream.next()
                if type_tok is None or not IDENTIFIER_RE.match(type_tok):
                    raise DdlParseError(
                        f"expected type for column {col_name!r}", statement_index, type_tok
                    )
                sql_type = _TYPE_MAP.get(type_tok.upper())
                if sql_type is None:
                    raise DdlParseError(
                        f"unsupported type {type_tok!r} for column {col_name!r}",
                        statement_index,
                        type_tok,
                    )
                if stream.peek() == "(":  # type arguments like VARCHAR(255), DECIMAL(10,2)
                    while stream.next() != ")":
                        pass
                nullable = True
                unique = False
                is_pk = False
                while True:
                    if stream.match_keyword("NOT", "NULL"):
                        nullable = False
                    elif stream.match_keyword("PRIMARY", "KEY"):
                        is_pk = True
                    elif stream.match_keyword("UNIQUE"):
                        unique = True
                    elif (
                        stream.peek() is not None
                        and stream.peek().upper() in _IGNORABLE_COLUMN_FLAGS
                    ):
                        stream.next()
                    else:
                        break
                if is_pk:
                    primary_key.append(col_name)
                columns.append(
                    ColumnDef(name=col_name, sql_type=sql_type, nullable=nullable, unique=unique)
                )

            sep = stream.next()
            if sep == ")":
                break
            if sep != ",":
                raise DdlParseError("expected ',' or ')' in table body", statement_index, sep)

        if any(t.name.lower() == table_name.lower() for t in tables):
            raise SchemaStructureError([f"duplicate table {table_name!r}"])
        tables.append(
            make_table(
                table_name,
                columns,
                primary_key,
                foreign_keys,
                unique_constraints,
                anchor=anchor,
            )
        )
        if stream.peek() == ";":
            stream.next()

    schema = RelationalSchema(domain=domain or "", tables=tuple(tables))
    errors = structural_errors(schema, anchor=anchor)
    if errors:
        raise SchemaStructureError(errors)
    return schema


def schema_equivalent(a: RelationalSchema, b: RelationalSchema) -> bool:
    """Name/column/key/FK/archetype equality, ignoring table order and case of lookups."""
    if len(a.tables) != len(b.tables):
        return False
    for t in a.tables:
        other = b.table(t.name)
        if other is None or t != other:
            return False
    return True


def to_json_dict(schema: RelationalSchema) -> dict:
    return {
        "domain": schema.domain,
        "tables": [
            {
                "name": t.name,
                "archetype": t.archetype,
                "columns": [
                    {
                        "name": c.name,
                        "sql_type": c.sql_type,
                        "nullable": c.nullable,
                        "is_primary_key_part": c.is_primary_key_part,
                        "unique": c.unique,
                    }
                    for c in t.columns
                ],
                "primary_key": list(t.primary_key),
                "foreign_keys": [
                    {
                        "from_columns": list(fk.from_columns),
                        "to_table": fk.to_table,
                        "to_columns": list(fk.to_columns),
                    }
                    for fk in t.foreign_keys
                ],
                "unique_constraints": [list(u) for u in t.unique_constraints],
            }
            for t in schema.tables
        ],
    }


def from_json_dict(doc: Mapping) -> RelationalSchema:
    tables = []
    for td in doc["tables"]:
        tables.append(
            TableDef(
                name=td["name"],
                archetype=td["archetype"],
                columns=tuple(
                    ColumnDef(
                        name=cd["name"],
                        sql_type=cd["sql_type"],
                        nullable=cd["nullable"],
                        is_primary_key_part=cd["is_primary_key_part"],
                        unique=cd.get("unique", False),
                    )
                    for cd in td["columns"]
                ),
                primary_key=tuple(td["primary_key"]),
                foreign_keys=tuple(
                    ForeignKeyDef(
                        tuple(fk["from_columns"]), fk["to_table"], tuple(fk["to_columns"])
                    )
                    for fk in td["foreign_keys"]
                ),
                unique_constraints=tuple(tuple(u) for u in td.get("unique_constraints", [])),
            )
        )
    return RelationalSchema(domain=doc.get("domain", ""), tables=tuple(tables))


def schema_to_json(schema: RelationalSchema) -> str:
    return json.dumps(to_json_dict(schema), indent=2, sort_keys=False) + "\n"


def schema_from_json(text: str) -> RelationalSchema:
    return from_json_dict(json.loads(text))


def sanitize_identifier(name: str, used: Iterable[str] = ()) -> str:
    """Turn an arbitrary field name into a safe, deduplicated SQL identifier."""
    cleaned = re.sub(r"[^A-Za-z0-9]+", "_", name.strip()).strip("_").lower()
    if not cleaned:
        cleaned = "field"
    if not re.match(r"[A-Za-z_]", cleaned):
        cleaned = "f_" + cleaned
    used_set = {u.lower() for u in used}
    candidate = cleaned
    suffix = 2
    while candidate.lower() in used_set:
        candidate = f"{cleaned}_{suffix}"
        suffix += 1
    return candidate
