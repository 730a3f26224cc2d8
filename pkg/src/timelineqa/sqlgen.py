"""Generate SQL for a question via the LLM, extract it, and gate execution safety.

Safety is lexical plus catalog-based rather than a full SQL parse: the
database is also opened read-only, so this layer is one half of a
defense-in-depth pair.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .llmclient import CompletionRequest
from .schema import RelationalSchema

FORBIDDEN_DATA = ("INSERT", "UPDATE", "DELETE", "REPLACE", "TRUNCATE")
FORBIDDEN_SCHEMA = ("DROP", "ALTER", "CREATE")
FORBIDDEN_OTHER = ("ATTACH", "DETACH", "PRAGMA", "VACUUM", "REINDEX")
FORBIDDEN_KEYWORDS = frozenset(FORBIDDEN_DATA + FORBIDDEN_SCHEMA + FORBIDDEN_OTHER)

AGGREGATE_FUNCTIONS = ("MIN", "MAX", "SUM", "AVG", "COUNT")


@dataclass
class GeneratedQuery:
    """One model response for one question, with extraction and safety verdicts."""

    question: str
    raw_response: str
    sql: str | None
    extraction_ok: bool
    safety_ok: bool = False
    safety_reasons: tuple[str, ...] = ()
    notes: tuple[str, ...] = ()

    def to_json_dict(self) -> dict:
        return {
            "question": self.question,
            "raw_response": self.raw_response,
            "sql": self.sql,
            "extraction_ok": self.extraction_ok,
            "safety_ok": self.safety_ok,
            "safety_reasons": list(self.safety_reasons),
            "notes": list(self.notes),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "GeneratedQuery":
        return cls(
            question=doc["question"],
            raw_response=doc["raw_response"],
            sql=doc["sql"],
            extraction_ok=doc["extraction_ok"],
            safety_ok=doc["safety_ok"],
            safety_reasons=tuple(doc["safety_reasons"]),
            notes=tuple(doc.get("notes", ())),
        )


_FENCE_RE = re.compile(r"```[A-Za-z0-9_+-]*\n(.*?)```", re.DOTALL)


def _split_statements(sql: str) -> list[str]:
    """Split on top-level semicolons, masking string literals."""
    statements = []
    current = []
    in_string = False
    i = 0
    while i < len(sql):
        ch = sql[i]
        if in_string:
            if ch == "'":
                if i + 1 < len(sql) and sql[i + 1] == "'":
                    current.append("''")
                    i += 2
                    continue
                in_string = False
            current.append(ch)
        else:
            if ch == "'":
                in_string = True
                current.append(ch)
            elif ch == ";":
                statements.append("".join(current))
                current = []
            else:
                current.append(ch)
        i += 1
    statements.append("".join(current))
    return [s.strip() for s in statements if s.strip()]


_STATEMENT_HEADS = ("SELECT", "WITH") + tuple(FORBIDDEN_KEYWORDS)


def extract_sql(response: str) -> tuple[str | None, tuple[str, ...]]:
    """Pull the first SQL statement from a model response.

    Fenced code blocks win (whatever statement they hold, so the safety
    check gets to veto them); outside fences only a bare SELECT/WITH is
    taken.  The result never contains fence delimiters.  Extra statements
    are dropped with an audit note.
    """
    notes: list[str] = []
    candidate = None
    for block in _FENCE_RE.findall(response):
        text = block.strip()
        if re.match(r"[A-Za-z_]+", text) and text.split()[0].upper() in _STATEMENT_HEADS:
            candidate = text
            break
    if candidate is None:
        match = re.search(r"\b(SELECT|WITH)\b", response, re.IGNORECASE)
        if match:
            candidate = response[match.start() :].strip()
            candidate = candidate.replace("```", " ").strip()
    if candidate is None:
        return None, ()
    statements = _split_statements(candidate)
    if not statements:
        return None, ()
    if len(statements) > 1:
        notes.append(f"response contained {len(statements)} statements; first taken")
    return statements[0], tuple(notes)


def _mask_literals_and_comments(sql: str) -> str:
    sql = re.sub(r"--[^\n]*", " ", sql)
    sql = re.sub(r"/\*.*?\*/", " ", sql, flags=re.DOTALL)
    return re.sub(r"'(?:[^']|'')*'", "''", sql)


def check_safety(sql: str | None, schema: RelationalSchema) -> tuple[bool, list[str]]:
    """Verdict-returning check: single read-only SELECT over known tables only."""
    if not sql or not sql.strip():
        return False, ["empty statement"]
    masked = _mask_literals_and_comments(sql)
    reasons: list[str] = []

    statements = [s for s in masked.split(";") if s.strip()]
    if len(statements) > 1:
        reasons.append(f"multiple statements ({len(statements)})")

    first = re.match(r"\s*([A-Za-z_]+)", masked)
    head = first.group(1).upper() if first else ""
    if head not in ("SELECT", "WITH"):
        if head in FORBIDDEN_DATA:
            reasons.append(f"data-modifying statement: {head}")
        elif head in FORBIDDEN_SCHEMA:
            reasons.append(f"schema-modifying statement: {head}")
        else:
            reasons.append(f"disallowed statement: {head or sql[:20]!r}")

    tokens = {t.upper() for t in re.findall(r"[A-Za-z_][A-Za-z0-9_]*", masked)}
    for keyword in sorted(FORBIDDEN_KEYWORDS & tokens):
        kind = (
            "data-modifying"
            if keyword in FORBIDDEN_DATA
            else "schema-modifying"
            if keyword in FORBIDDEN_SCHEMA
            else "disallowed"
        )
        reason = f"{kind} keyword: {keyword}"
        if reason not in reasons and f"{kind} statement: {keyword}" not in reasons:
            reasons.append(reason)

    known = {t.lower() for t in schema.table_names()}
    cte_names = {
        m.group(1).lower() for m in re.finditer(r"(?i)\b(\w+)\s+AS\s*\(", masked)
    }
    for m in re.finditer(r"(?i)\b(?:FROM|JOIN)\s+([`\"\[]?)(\w+)\1?", masked):
        name = m.group(2).lower()
        if name not in known and name not in cte_names:
            reasons.append(f"unknown table: {m.group(2)}")

    return (not reasons), reasons


@dataclass(frozen=True)
class LintReport:
    warnings: tuple[str, ...] = ()
    skipped: bool = False


def lint_aggregates(sql: str) -> LintReport:
    """Warn on aggregate functions inside ORDER BY when the query has no GROUP BY.

    Queries outside the supported SELECT subset are skipped, never warned.
    """
    masked = _mask_literals_and_comments(sql)
    if not re.match(r"\s*(SELECT|WITH)\b", masked, re.IGNORECASE):
        return LintReport(skipped=True)
    if masked.count("(") != masked.count(")"):
        return LintReport(skipped=True)

    depth = 0
    group_by_at_top = False
    order_by_pos = None
    for m in re.finditer(r"\(|\)|\b(?:GROUP|ORDER)\s+BY\b", masked, re.IGNORECASE):
        token = m.group(0)
        if token == "(":
            depth += 1
        elif token == ")":
            depth -= 1
        elif depth == 0:
            if token.upper().startswith("GROUP"):
                group_by_at_top = True
            else:
                order_by_pos = m.end()
    if order_by_pos is None or group_by_at_top:
        return LintReport()

    tail = masked[order_by_pos:]
    warnings = []
    for fn in AGGREGATE_FUNCTIONS:
        if re.search(rf"\b{fn}\s*\(", tail, re.IGNORECASE):
            warnings.append(f"aggregate {fn}() in ORDER BY without GROUP BY")
    return LintReport(warnings=tuple(warnings))


def generate_sql(
    question: str,
    bundle,
    client,
    schema: RelationalSchema | None = None,
    model_id: str = "default",
) -> GeneratedQuery:
    """One client call per question; extraction failures are outcomes, not errors."""
    from .promptkit import assemble_prompt
    from .schema import parse_ddl

    if schema is None:
        schema = parse_ddl(bundle.schema_ddl)
    result = client.complete(
        CompletionRequest(
            system_text=assemble_prompt(bundle), user_text=question, model_id=model_id
        )
    )
    sql, notes = extract_sql(result.text)
    if sql is None:
        return GeneratedQuery(
            question=question,
            raw_response=result.text,
            sql=None,
            extraction_ok=False,
            safety_ok=False,
            safety_reasons=("no SQL statement extracted",),
        )
    ok, reasons = check_safety(sql, schema)
    return GeneratedQuery(
        question=question,
        raw_response=result.text,
        sql=sql,
        extraction_ok=True,
        safety_ok=ok,
        safety_reasons=tuple(reasons),
        notes=notes,
    )
