"""Execute queries, score answers (EM / token-F1 / Rouge-1 / Rouge-L), and
classify failures into the ten-category error taxonomy.

Answer normalization is SQuAD-style (lowercase, strip punctuation, drop
articles, collapse whitespace); absolute scores depend on this choice, so it
is documented here and applied identically to both sides of every metric.
Empty-vs-empty scores 1.0 on all metrics so self-consistency runs can reach
a perfect score.
"""

from __future__ import annotations

import re
import sqlite3
import string
import time
from collections import Counter
from dataclasses import dataclass
from statistics import fmean
from typing import Mapping, Sequence

from .schema import RelationalSchema

DEFAULT_QUERY_TIMEOUT = 10.0

#: Table-2 taxonomy: category -> issue group.
TAXONOMY: dict[str, str] = {
    "Wrong Calculations": "data_quality",
    "Empty Results": "data_quality",
    "Wrong Entity Mapping": "data_quality",
    "Precision/Format Issues": "data_quality",
    "Aggregate Function Misuse": "sql_generation",
    "Syntax Errors": "sql_generation",
    "Schema Column Errors": "sql_generation",
    "Non-SQL Responses": "sql_generation",
    "Missing Data Handling": "schema_generation",
    "Schema Misunderstanding": "schema_generation",
}


class ExecError(Exception):
    """SQL execution failed; the engine message is preserved verbatim."""


def execute_query(
    conn: sqlite3.Connection, sql: str, timeout: float = DEFAULT_QUERY_TIMEOUT
) -> list[tuple]:
    """Run one SELECT on a read-only connection with a wall-clock timeout."""
    start = time.monotonic()

    def watchdog():
        return 1 if time.monotonic() - start > timeout else 0

    conn.set_progress_handler(watchdog, 1000)
    try:
        return conn.execute(sql).fetchall()
    except sqlite3.Error as exc:
        message = str(exc)
        if "interrupted" in message:
            raise ExecError(f"query timed out after {timeout}s") from exc
        raise ExecError(message) from exc
    finally:
        conn.set_progress_handler(None, 0)


def _render_cell(value: object) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if value.is_integer():
            return str(int(value))
        return repr(value)
    return str(value)


def render_answer(rows: Sequence[Sequence]) -> str:
    """Flatten a result set to answer text.

    Single cell -> its text; one column -> values joined ", "; multiple
    columns -> cells joined " " per row, rows joined ", ".  Integers render
    without a decimal point, reals minimally.
    """
    if not rows:
        return ""
    if len(rows) == 1 and len(rows[0]) == 1:
        return _render_cell(rows[0][0])
    if all(len(row) == 1 for row in rows):
        return ", ".join(_render_cell(row[0]) for row in rows)
    return ", ".join(" ".join(_render_cell(cell) for cell in row) for row in rows)


_ARTICLES = {"a", "an", "the"}


def normalize_answer(text: str) -> list[str]:
    """Lowercase, strip punctuation, drop articles, collapse whitespace, tokenize."""
    lowered = text.lower()
    stripped = "".join(ch for ch in lowered if ch not in string.punctuation)
    return [tok for tok in stripped.split() if tok not in _ARTICLES]


def exact_match(expected: str, predicted: str) -> int:
    return int(normalize_answer(expected) == normalize_answer(predicted))


def _overlap_f(expected_tokens: list[str], predicted_tokens: list[str]) -> float:
    if not expected_tokens and not predicted_tokens:
        return 1.0
    if not expected_tokens or not predicted_tokens:
        return 0.0
    common = Counter(expected_tokens) & Counter(predicted_tokens)
    num_same = sum(common.values())
    if num_same == 0:
        return 0.0
    precision = num_same / len(predicted_tokens)
    recall = num_same / len(expected_tokens)
    return 2 * precision * recall / (precision + recall)


def token_f1(expected: str, predicted: str) -> float:
    """Harmonic mean of precision/recall over the token multiset overlap."""
    return _overlap_f(normalize_answer(expected), normalize_answer(predicted))


def rouge1(expected: str, predicted: str) -> float:
    """Unigram-overlap F-measure (coincides with token F1 over unigram counts)."""
    return _overlap_f(normalize_answer(expected), normalize_answer(predicted))


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, 1):
            if x == y:
                current.append(prev[j - 1] + 1)
            else:
                current.append(max(prev[j], current[j - 1]))
        prev = current
    return prev[-1]


def rougeL(expected: str, predicted: str) -> float:
    """Longest-common-subsequence F-measure over normalized tokens."""
    exp = normalize_answer(expected)
    pred = normalize_answer(predicted)
    if not exp and not pred:
        return 1.0
    if not exp or not pred:
        return 0.0
    lcs = _lcs_length(exp, pred)
    if lcs == 0:
        return 0.0
    precision = lcs / len(pred)
    recall = lcs / len(exp)
    return 2 * precision * recall / (precision + recall)


@dataclass(frozen=True)
class ErrorTaxonomyLabel:
    issue: str
    category: str

    def __post_init__(self):
        if TAXONOMY.get(self.category) != self.issue:
            raise ValueError(f"category {self.category!r} does not belong to issue {self.issue!r}")


@dataclass
class EvalRecord:
    question: str
    expected: str
    predicted: str | None
    exec_error: str | None
    em: int
    f1: float
    rouge1: float
    rougeL: float
    error_label: ErrorTaxonomyLabel | None = None

    def to_json_dict(self) -> dict:
        return {
            "question": self.question,
            "expected": self.expected,
            "predicted": self.predicted,
            "exec_error": self.exec_error,
            "em": self.em,
            "f1": self.f1,
            "rouge1": self.rouge1,
            "rougeL": self.rougeL,
            "error_label": (
                {"issue": self.error_label.issue, "category": self.error_label.category}
                if self.error_label
                else None
            ),
        }

    @classmethod
    def from_json_dict(cls, doc: Mapping) -> "EvalRecord":
        label = doc.get("error_label")
        return cls(
            question=doc["question"],
            expected=doc["expected"],
            predicted=doc["predicted"],
            exec_error=doc["exec_error"],
            em=doc["em"],
            f1=doc["f1"],
            rouge1=doc["rouge1"],
            rougeL=doc["rougeL"],
            error_label=ErrorTaxonomyLabel(label["issue"], label["category"]) if label else None,
        )


def score_record(
    question: str, expected: str, predicted: str | None, exec_error: str | None = None
) -> EvalRecord:
    """Build a scored record; an absent prediction zeroes every metric."""
    if predicted is None:
        return EvalRecord(question, expected, None, exec_error, 0, 0.0, 0.0, 0.0)
    return EvalRecord(
        question=question,
        expected=expected,
        predicted=predicted,
        exec_error=exec_error,
        em=exact_match(expected, predicted),
        f1=token_f1(expected, predicted),
        rouge1=rouge1(expected, predicted),
        rougeL=rougeL(expected, predicted),
    )


def _as_number(text: str | None) -> float | None:
    if text is None:
        return None
    cleaned = re.sub(r"[,\s]", "", text)
    try:
        return float(cleaned)
    except ValueError:
        return None


def _decimal_places(text: str) -> int:
    match = re.search(r"\.(\d+)", text)
    return len(match.group(1)) if match else 0


_QUESTION_STOPWORDS = frozenset(
    "a an the who what when which where how many much was were is are did does do "
    "of in on at for to by with from and or between before after during as have has "
    "had serve served".split()
)


def _missing_column_near_miss(question: str, schema: RelationalSchema) -> bool:
    """True when the question names a column-shaped metric the schema lacks.

    Candidates are 2-4 word n-grams of non-stopword alphabetic question words
    joined by underscores; a candidate fires when it is one token away
    (replace/insert/delete) from an existing column but is not itself one.
    """
    words = [
        w
        for w in re.findall(r"[a-z]+", question.lower())
        if w not in _QUESTION_STOPWORDS
    ]
    columns = {c.name.lower() for t in schema.tables for c in t.columns}
    column_tokens = [tuple(c.split("_")) for c in columns]

    def within_one_edit(a: tuple[str, ...], b: tuple[str, ...]) -> bool:
        if abs(len(a) - len(b)) > 1:
            return False
        if len(a) == len(b):
            return sum(x != y for x, y in zip(a, b)) == 1
        short, long_ = (a, b) if len(a) < len(b) else (b, a)
        for skip in range(len(long_)):
            if long_[:skip] + long_[skip + 1 :] == short:
                return True
        return False

    for n in (4, 3, 2):
        for i in range(len(words) - n + 1):
            gram = tuple(words[i : i + n])
            candidate = "_".join(gram)
            if candidate in columns:
                continue
            if any(within_one_edit(gram, col) for col in column_tokens):
                return True
    return False


def _mentions_anchor(sql: str, schema: RelationalSchema) -> bool:
    anchors = {
        c.name.lower()
        for t in schema.tables
        if t.archetype == "snapshot"
        for c in t.columns
        if c.is_primary_key_part
    }
    tokens = {t.lower() for t in re.findall(r"[A-Za-z_][A-Za-z0-9_]*", sql)}
    return bool(anchors & tokens)


def _references_schema_table(sql: str, schema: RelationalSchema) -> bool:
    tokens = {t.lower() for t in re.findall(r"[A-Za-z_][A-Za-z0-9_]*", sql)}
    return any(t.name.lower() in tokens for t in schema.tables)


def classify_error(record: EvalRecord, query, lint, schema: RelationalSchema) -> ErrorTaxonomyLabel:
    """Rule cascade over a failed record (em must be 0).

    The order mirrors how a human would triage: response shape, execution
    errors, known SQL anti-patterns, then data-level comparisons, then
    schema-level signals.  Labels are advisory.
    """
    if record.em != 0:
        raise ValueError("classify_error is only defined for em=0 records")

    def label(category: str) -> ErrorTaxonomyLabel:
        return ErrorTaxonomyLabel(TAXONOMY[category], category)

    if not query.extraction_ok:
        return label("Non-SQL Responses")
    if record.exec_error:
        if "no such column" in record.exec_error:
            return label("Schema Column Errors")
        return label("Syntax Errors")
    if lint is not None and getattr(lint, "warnings", ()):
        return label("Aggregate Function Misuse")
    if record.predicted == "":
        return label("Empty Results")

    expected_num = _as_number(record.expected)
    predicted_num = _as_number(record.predicted)
    if expected_num is not None and predicted_num is not None:
        if round(predicted_num, _decimal_places(record.expected)) == expected_num:
            return label("Precision/Format Issues")
        return label("Wrong Calculations")

    if _missing_column_near_miss(record.question, schema):
        return label("Missing Data Handling")
    if (
        query.sql
        and _references_schema_table(query.sql, schema)
        and not _mentions_anchor(query.sql, schema)
        and any(t.archetype == "snapshot" for t in schema.tables)
    ):
        return label("Schema Misunderstanding")
    return label("Wrong Entity Mapping")


@dataclass
class RunReport:
    domain: str
    schema_model: str
    query_model: str
    n: int
    mean_em: float
    mean_f1: float
    mean_rouge1: float
    mean_rougeL: float

    def to_json_dict(self) -> dict:
        return {
            "domain": self.domain,
            "schema_model": self.schema_model,
            "query_model": self.query_model,
            "n": self.n,
            "mean_em": self.mean_em,
            "mean_f1": self.mean_f1,
            "mean_rouge1": self.mean_rouge1,
            "mean_rougeL": self.mean_rougeL,
        }


def aggregate(rows: Sequence[Mapping], group_keys: Sequence[str]) -> list[RunReport]:
    """Arithmetic means x100 per group; rows are results-JSONL dicts."""
    if not rows:
        raise ValueError("no records to aggregate")
    groups: dict[tuple, list[Mapping]] = {}
    for row in rows:
        key = tuple(str(row.get(k, "")) for k in group_keys)
        groups.setdefault(key, []).append(row)
    reports = []
    for key in sorted(groups):
        members = groups[key]
        meta = dict(zip(group_keys, key))
        reports.append(
            RunReport(
                domain=meta.get("domain", "all"),
                schema_model=meta.get("schema_model", "all"),
                query_model=meta.get("query_model", "all"),
                n=len(members),
                mean_em=100.0 * fmean(r["em"] for r in members),
                mean_f1=100.0 * fmean(r["f1"] for r in members),
                mean_rouge1=100.0 * fmean(r["rouge1"] for r in members),
                mean_rougeL=100.0 * fmean(r["rougeL"] for r in members),
            )
        )
    return reports


def render_grid(reports: Sequence[RunReport]) -> str:
    """Markdown grid: rows = query model, columns = schema model, cells = EM / F1."""
    schema_models = sorted({r.schema_model for r in reports})
    query_models = sorted({r.query_model for r in reports})
    cells = {(r.query_model, r.schema_model): r for r in reports}
    lines = ["| SQL model | " + " | ".join(schema_models) + " |"]
    lines.append("|---" * (len(schema_models) + 1) + "|")
    for qm in query_models:
        row = [qm]
        for sm in schema_models:
            r = cells.get((qm, sm))
            row.append(f"{r.mean_em:.2f} / {r.mean_f1:.2f}" if r else "-")
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def render_domain_table(reports: Sequence[RunReport]) -> str:
    """Markdown per-domain table with all four metrics."""
    lines = ["| Domain | n | EM | F1 | R-1 | R-L |", "|---|---|---|---|---|---|"]
    for r in sorted(reports, key=lambda r: r.domain):
        lines.append(
            f"| {r.domain} | {r.n} | {r.mean_em:.2f} | {r.mean_f1:.2f} "
            f"| {r.mean_rouge1:.2f} | {r.mean_rougeL:.2f} |"
        )
    return "\n".join(lines) + "\n"


def render_csv(reports: Sequence[RunReport]) -> str:
    lines = ["domain,schema_model,query_model,n,mean_em,mean_f1,mean_rouge1,mean_rougeL"]
    for r in reports:
        lines.append(
            f"{r.domain},{r.schema_model},{r.query_model},{r.n},"
            f"{r.mean_em:.2f},{r.mean_f1:.2f},{r.mean_rouge1:.2f},{r.mean_rougeL:.2f}"
        )
    return "\n".join(lines) + "\n"


def render_taxonomy_table(labels: Sequence[ErrorTaxonomyLabel]) -> str:
    """Counts per category in taxonomy order; categories without failures are omitted."""
    counts = Counter((label.issue, label.category) for label in labels)
    lines = ["| Issue | Error Category | Count |", "|---|---|---|"]
    for category, issue in TAXONOMY.items():
        count = counts.get((issue, category), 0)
        if count:
            lines.append(f"| {issue} | {category} | {count} |")
    return "\n".join(lines) + "\n"
