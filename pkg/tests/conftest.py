from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

import corpusgen  # noqa: E402
from timelineqa import ingest, populate, schemagen  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"
DOMAIN_SCHEMAS = sorted((FIXTURES / "domain_schemas").glob("*.sql"))


@pytest.fixture(scope="session")
def corpus_root(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("corpus")
    corpusgen.build_corpus(root)
    return root


@pytest.fixture(scope="session")
def countries_timelines(corpus_root) -> list[ingest.Timeline]:
    return [
        ingest.parse_timeline(p.read_bytes())
        for p in sorted((corpus_root / "countries").glob("*.json"))
    ]


@pytest.fixture(scope="session")
def countries_schema(countries_timelines):
    return schemagen.generate_schema_fallback(countries_timelines, "countries")


@pytest.fixture()
def countries_db(countries_schema, countries_timelines, tmp_path):
    db = populate.create_database(countries_schema, tmp_path / "countries.sqlite")
    mapping = populate.derive_mapping(countries_schema, countries_timelines)
    for timeline in countries_timelines:
        populate.populate_timeline(db, timeline, mapping)
    yield db
    db.close()


def domain_schema_text(name: str) -> str:
    return (FIXTURES / "domain_schemas" / f"{name}.sql").read_text(encoding="utf-8")
