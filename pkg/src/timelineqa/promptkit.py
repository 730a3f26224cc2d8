"""Assemble the five-section domain prompt and build gold few-shot examples.

A prompt bundle has exactly five sections, rendered in a fixed order:
schema DDL, relationship prose, SQL pattern templates, validated few-shot
question/SQL pairs, and critical rules.  Gold examples come out of an
execution-based refinement loop that re-prompts with the failed SQL and its
observed result until the rendered answer exactly matches the expectation.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from . import evalharness, sqlgen
from .llmclient import CompletionRequest

PATTERN_NAMES = (
    "before_after",
    "concurrent_role",
    "temporal_aggregation",
    "tenure_duration",
    "temporal_extrema",
)

#: Placeholders a SQL template may use even when the question text does not
#: mention them; they are filled from the schema, not from the question.
SCHEMA_PLACEHOLDERS = frozenset(
    {"entity_table", "snapshot_table", "person_table", "role_table", "bridge_table", "metric"}
)

RULE_NO_HARDCODED_IDS = "Never hardcode entity IDs; always use subqueries"
RULE_DISTINCT_SNAPSHOTS = "Use DISTINCT for queries spanning multiple snapshots"
DEFAULT_CRITICAL_RULES = (
    RULE_NO_HARDCODED_IDS,
    RULE_DISTINCT_SNAPSHOTS,
    "Return exactly one SQL statement inside a ```sql code fence",
    "snapshot_id values are ISO-8601 timestamps; compare them as text and use JULIANDAY() for day arithmetic",
)

DEFAULT_FEW_SHOT_FLOOR = 10
FEW_SHOT_CEILING = 15
DEFAULT_MAX_ITERS = 5

_PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")


class PromptKitError(Exception):
    pass


class PlaceholderError(PromptKitError):
    def __init__(self, name: str):
        super().__init__(f"missing binding for placeholder {name!r}")
        self.name = name


class BundleDeficitError(PromptKitError):
    def __init__(self, have: int, floor: int):
        super().__init__(f"bundle has {have} few-shot examples, needs at least {floor}")
        self.deficit = floor - have


@dataclass(frozen=True)
class PatternTemplate:
    name: str
    nl_template: str
    sql_template: str

    def __post_init__(self):
        nl = set(_PLACEHOLDER_RE.findall(self.nl_template))
        sql = set(_PLACEHOLDER_RE.findall(self.sql_template))
        stray = sql - nl - SCHEMA_PLACEHOLDERS
        if stray:
            raise ValueError(
                f"pattern {self.name!r}: SQL placeholders {sorted(stray)} appear neither in "
                "the question template nor in the schema-derived set"
            )


@dataclass(frozen=True)
class FewShotExample:
    question: str
    gold_sql: str
    expected_answer: str
    validated: bool
    iterations_used: int

    def to_json_dict(self) -> dict:
        return {
            "question": self.question,
            "gold_sql": self.gold_sql,
            "expected_answer": self.expected_answer,
            "validated": self.validated,
            "iterations_used": self.iterations_used,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "FewShotExample":
        return cls(
            question=doc["question"],
            gold_sql=doc["gold_sql"],
            expected_answer=doc["expected_answer"],
            validated=doc["validated"],
            iterations_used=doc["iterations_used"],
        )


@dataclass(frozen=True)
class PromptBundle:
    schema_ddl: str
    relationship_prose: str
    pattern_templates: tuple[PatternTemplate, ...]
    few_shot: tuple[FewShotExample, ...]
    critical_rules: tuple[str, ...] = DEFAULT_CRITICAL_RULES
    few_shot_floor: int = DEFAULT_FEW_SHOT_FLOOR

    def __post_init__(self):
        rules = set(self.critical_rules)
        if RULE_NO_HARDCODED_IDS not in rules or RULE_DISTINCT_SNAPSHOTS not in rules:
            raise ValueError("critical rules must include the two baseline rules")


def default_pattern_templates() -> tuple[PatternTemplate, ...]:
    """The five shipped templates, written against the fallback schema shape."""
    text = resources.files("timelineqa").joinpath("data/patterns.json").read_text("utf-8")
    return load_pattern_templates(text)


def load_pattern_templates(text: str) -> tuple[PatternTemplate, ...]:
    return tuple(
        PatternTemplate(d["name"], d["nl_template"], d["sql_template"]) for d in json.loads(text)
    )


def assemble_prompt(bundle: PromptBundle) -> str:
    """Render the bundle into the five-section prompt; byte-stable per bundle."""
    n = len(bundle.few_shot)
    if n < bundle.few_shot_floor:
        raise BundleDeficitError(n, bundle.few_shot_floor)
    if n > FEW_SHOT_CEILING:
        raise PromptKitError(f"bundle has {n} few-shot examples, ceiling is {FEW_SHOT_CEILING}")
    sections = []
    sections.append("## 1. Database schema\n\n" + bundle.schema_ddl.rstrip())
    sections.append("## 2. Table relationships\n\n" + bundle.relationship_prose.rstrip())
    pattern_lines = []
    for t in bundle.pattern_templates:
        pattern_lines.append(f"- {t.name}: {t.nl_template}\n  SQL: {t.sql_template}")
    sections.append("## 3. SQL pattern templates\n\n" + "\n".join(pattern_lines))
    shot_lines = []
    for ex in bundle.few_shot:
        shot_lines.append(f"Q: {ex.question}\nSQL: {ex.gold_sql}")
    sections.append("## 4. Examples\n\n" + "\n\n".join(shot_lines))
    rule_lines = [f"- {rule}" for rule in bundle.critical_rules]
    sections.append("## 5. Critical rules\n\n" + "\n".join(rule_lines))
    return "\n\n".join(sections) + "\n"


def instantiate_pattern(template: PatternTemplate, bindings: dict[str, str]) -> tuple[str, str]:
    """Substitute placeholders; values landing in SQL string literals are escaped."""

    def fill(text: str, escape: bool) -> str:
        def sub(match: re.Match) -> str:
            name = match.group(1)
            if name not in bindings:
                raise PlaceholderError(name)
            value = str(bindings[name])
            return value.replace("'", "''") if escape else value

        return _PLACEHOLDER_RE.sub(sub, text)

    return fill(template.nl_template, False), fill(template.sql_template, True)


def refine_gold_query(
    question: str,
    expected: str,
    db,
    client,
    max_iters: int = DEFAULT_MAX_ITERS,
    model_id: str = "default",
) -> FewShotExample:
    """Execution-validated gold-query loop.

    Proposes SQL, executes it read-only, and compares the rendered answer to
    the expectation under exact match; on a mismatch the next prompt carries
    the failed SQL and what it returned.  Stops on a match or after
    max_iters client calls, keeping the best (last) attempt either way.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    from .schema import emit_ddl

    system_text = (
        "You translate temporal questions into a single SQLite SELECT statement. "
        "Answer with SQL in a ```sql code fence.\n\nDatabase schema:\n"
        + emit_ddl(db.schema)
    )
    feedback = ""
    last_sql = ""
    conn = db.read_only()
    try:
        for iteration in range(1, max_iters + 1):
            user_text = (
                f"Question: {question}\n"
                f"Expected answer: {expected}\n"
                "Write a SQL query whose result is exactly the expected answer."
            )
            if feedback:
                user_text += "\n\n" + feedback
            result = client.complete(
                CompletionRequest(system_text=system_text, user_text=user_text, model_id=model_id)
            )
            sql, _notes = sqlgen.extract_sql(result.text)
            if sql is None:
                feedback = (
                    "Your previous response contained no SQL statement. "
                    "Reply with one SELECT statement in a ```sql fence."
                )
                continue
            last_sql = sql
            try:
                rows = evalharness.execute_query(conn, sql)
            except evalharness.ExecError as exc:
                feedback = (
                    f"Previous SQL:\n{sql}\nIt failed to execute: {exc}\n"
                    f"The expected answer is: {expected}. Fix the query."
                )
                continue
            predicted = evalharness.render_answer(rows)
            if evalharness.exact_match(expected, predicted):
                return FewShotExample(
                    question=question,
                    gold_sql=sql,
                    expected_answer=expected,
                    validated=True,
                    iterations_used=iteration,
                )
            feedback = (
                f"Previous SQL:\n{sql}\nIt returned: {predicted!r}\n"
                f"The expected answer is: {expected}. Refine the query."
            )
    finally:
        conn.close()
    return FewShotExample(
        question=question,
        gold_sql=last_sql,
        expected_answer=expected,
        validated=False,
        iterations_used=max_iters,
    )


BUNDLE_FILES = ("schema.sql", "relationships.md", "patterns.json", "fewshot.jsonl", "rules.txt")


def save_bundle(bundle: PromptBundle, directory: str | Path) -> None:
    """Persist the bundle as its five artifact files plus a rendered prompt cache."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "schema.sql").write_text(bundle.schema_ddl, encoding="utf-8")
    (directory / "relationships.md").write_text(bundle.relationship_prose, encoding="utf-8")
    patterns = [
        {"name": t.name, "nl_template": t.nl_template, "sql_template": t.sql_template}
        for t in bundle.pattern_templates
    ]
    (directory / "patterns.json").write_text(
        json.dumps(patterns, indent=2) + "\n", encoding="utf-8"
    )
    with open(directory / "fewshot.jsonl", "w", encoding="utf-8") as fh:
        for ex in bundle.few_shot:
            fh.write(json.dumps(ex.to_json_dict(), sort_keys=True) + "\n")
    (directory / "rules.txt").write_text("\n".join(bundle.critical_rules) + "\n", encoding="utf-8")
    if len(bundle.few_shot) >= bundle.few_shot_floor:
        (directory / "prompt.txt").write_text(assemble_prompt(bundle), encoding="utf-8")


def load_bundle(directory: str | Path, few_shot_floor: int = DEFAULT_FEW_SHOT_FLOOR) -> PromptBundle:
    directory = Path(directory)
    few_shot = []
    fewshot_path = directory / "fewshot.jsonl"
    if fewshot_path.exists():
        for line in fewshot_path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                few_shot.append(FewShotExample.from_json_dict(json.loads(line)))
    return PromptBundle(
        schema_ddl=(directory / "schema.sql").read_text(encoding="utf-8"),
        relationship_prose=(directory / "relationships.md").read_text(encoding="utf-8"),
        pattern_templates=load_pattern_templates(
            (directory / "patterns.json").read_text(encoding="utf-8")
        ),
        few_shot=tuple(few_shot),
        critical_rules=tuple(
            (directory / "rules.txt").read_text(encoding="utf-8").strip().splitlines()
        ),
        few_shot_floor=few_shot_floor,
    )


def relationship_prose(schema) -> str:
    """Deterministic prose describing tables, archetypes, and join paths."""
    lines = [f"The {schema.domain or 'domain'} database models timestamped snapshots of entities."]
    for t in schema.tables:
        cols = ", ".join(c.name for c in t.columns)
        lines.append(f"- {t.name} ({t.archetype} table): columns {cols}.")
        for fk in t.foreign_keys:
            lines.append(
                f"  Joins to {fk.to_table} via ({', '.join(fk.from_columns)}) = "
                f"({', '.join(fk.to_columns)})."
            )
    lines.append(
        "snapshot_id is the temporal anchor: rows sharing a snapshot_id describe the same "
        "moment, and comparing snapshot_id values orders moments in time."
    )
    return "\n".join(lines) + "\n"
