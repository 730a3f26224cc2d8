import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from timelineqa import ingest
from timelineqa.ingest import (
    CompositeShapeError,
    FieldPatternError,
    RawSnapshot,
    TimelineParseError,
    TimelineStructureError,
    flatten_fields,
    match_dynamic_fields,
    normalize_date,
    normalize_null,
    parse_composite,
    parse_timeline,
    safe_int,
    safe_real,
    serialize_timeline,
)


def make_doc(timestamps, fields=None):
    return json.dumps(
        {
            "entity": "Testland",
            "domain": "countries",
            "snapshots": [{"timestamp": ts, "fields": fields or {"gdp": 1}} for ts in timestamps],
        }
    )


class TestParseTimeline:
    def test_sorts_snapshots_ascending(self):
        timeline = parse_timeline(make_doc(["2020-01", "2019-01"]))
        assert [s.timestamp for s in timeline.snapshots] == ["2019-01", "2020-01"]

    def test_duplicate_timestamps_rejected(self):
        with pytest.raises(TimelineStructureError, match="duplicate timestamp"):
            parse_timeline(make_doc(["2020-01", "2020-01"]))

    def test_fixture_snapshot_count(self, countries_timelines):
        assert all(len(t.snapshots) == 10 for t in countries_timelines)

    def test_malformed_json_reports_offset(self):
        with pytest.raises(TimelineParseError) as excinfo:
            parse_timeline(b'{"entity": "x", ')
        assert excinfo.value.offset is not None

    def test_missing_timestamp_names_snapshot_index(self):
        doc = json.dumps(
            {"entity": "x", "domain": "d", "snapshots": [
                {"timestamp": "2019-01-01", "fields": {}},
                {"fields": {}},
            ]}
        )
        with pytest.raises(TimelineStructureError, match="snapshot 1"):
            parse_timeline(doc)

    def test_empty_field_name_rejected(self):
        with pytest.raises(TimelineStructureError, match="empty field name"):
            parse_timeline(make_doc(["2019-01-01"], fields={"  ": 1}))

    def test_raw_fields_preserved_verbatim(self):
        timeline = parse_timeline(make_doc(["2019-01-01"], fields={"x": "~100", "y": [1, 2]}))
        assert timeline.snapshots[0].fields == {"x": "~100", "y": [1, 2]}

    def test_serialize_round_trip_on_fixture_corpus(self, corpus_root):
        for path in sorted(corpus_root.rglob("*.json")):
            timeline = parse_timeline(path.read_bytes())
            assert parse_timeline(serialize_timeline(timeline)) == timeline


class TestNormalizeNull:
    @pytest.mark.parametrize("raw", ["n/a", "N/A", "--", "-", "vacant", "&ndash;", "–", "", "  "])
    def test_null_variants(self, raw):
        assert normalize_null(raw).is_null

    def test_passthrough(self):
        value = normalize_null("Angela Merkel")
        assert value.kind == "text" and value.value == "Angela Merkel"

    def test_unknown_sentinels_are_not_null(self):
        assert not normalize_null("TBD").is_null
        assert not normalize_null("N.A.").is_null

    def test_custom_variant_set(self):
        assert normalize_null("tbd", variants=frozenset({"tbd"})).is_null

    @given(st.text(max_size=50))
    def test_total_and_raw_preserved(self, raw):
        value = normalize_null(raw)
        assert value.raw == raw
        assert value.kind in ("null", "text")

    @given(st.text(max_size=50))
    def test_idempotent_on_text_results(self, raw):
        first = normalize_null(raw)
        if first.kind == "text":
            assert normalize_null(first.value) == ingest.CleanValue("text", first.value, first.value)


class TestSafeInt:
    @pytest.mark.parametrize(
        "raw,expected",
        [("1,234", 1234), ("1.0", 1), (" 42 ", 42), ("1,234.5", 1234), ("-5", -5)],
    )
    def test_parses(self, raw, expected):
        value = safe_int(raw)
        assert value.kind == "integer" and value.value == expected

    @pytest.mark.parametrize("raw", ["~100", "abc", "", "12a", "inf", "nan"])
    def test_fails_to_null(self, raw):
        assert safe_int(raw).is_null

    @given(st.text(max_size=30))
    def test_total(self, raw):
        value = safe_int(raw)
        assert value.kind in ("integer", "null")
        assert value.raw == raw

    @given(st.from_regex(r"[0-9][0-9,]*(\.[0-9]+)?", fullmatch=True).filter(lambda s: len(s) <= 8))
    @settings(max_examples=300)
    def test_agrees_with_regex_oracle(self, raw):
        # independent oracle: any string of this shape is the stripped float, truncated
        expected = int(float(raw.replace(",", "")))
        assert safe_int(raw).value == expected


class TestSafeReal:
    def test_real_preserved(self):
        assert safe_real("0.939").value == 0.939

    def test_comma_stripped(self):
        assert safe_real("1,234.5").value == 1234.5

    @pytest.mark.parametrize("raw", ["abc", "", "inf", "-inf", "nan"])
    def test_fails_to_null(self, raw):
        assert safe_real(raw).is_null


class TestParseComposite:
    @pytest.mark.parametrize(
        "raw,expected",
        [("2/22", (2, 22)), ("31/&ndash;", (31, None)), ("6/35", (6, 35)), ("abc/5", (None, 5))],
    )
    def test_pairs(self, raw, expected):
        value = parse_composite(raw)
        assert value.kind == "composite-pair" and value.value == expected

    @pytest.mark.parametrize("raw", ["100", "1/2/3", ""])
    def test_shape_errors(self, raw):
        with pytest.raises(CompositeShapeError) as excinfo:
            parse_composite(raw)
        assert excinfo.value.raw == raw

    def test_custom_separator(self):
        assert parse_composite("3-4", separator="-").value == (3, 4)

    def test_empty_separator_rejected(self):
        with pytest.raises(ValueError):
            parse_composite("2/22", separator="")


class TestMatchDynamicFields:
    def test_matches_sorted_by_index(self):
        snap = RawSnapshot("2019-01-01", {"proyears2": "b", "proyears1": "a", "proteam1": "x"})
        assert match_dynamic_fields(snap, "proyears{N}") == [(1, "a"), (2, "b")]

    def test_non_contiguous_indices(self):
        snap = RawSnapshot("2019-01-01", {"proyears3": "c"})
        assert match_dynamic_fields(snap, "proyears{N}") == [(3, "c")]

    def test_no_matches_is_empty(self):
        snap = RawSnapshot("2019-01-01", {"other": 1})
        assert match_dynamic_fields(snap, "proyears{N}") == []

    @pytest.mark.parametrize("pattern", ["proyears", "pro{N}years{N}"])
    def test_bad_pattern_rejected(self, pattern):
        with pytest.raises(FieldPatternError):
            match_dynamic_fields(RawSnapshot("2019-01-01", {}), pattern)


class TestNormalizeDate:
    @pytest.mark.parametrize(
        "raw,expected,precision",
        [
            ("2019-06-01", "2019-06-01", "day"),
            ("1 June 2019", "2019-06-01", "day"),
            ("June 1, 2019", "2019-06-01", "day"),
            ("2019", "2019-01-01", "year"),
            ("2019-06-01T12:30:00", "2019-06-01", "day"),
        ],
    )
    def test_recognized_formats(self, raw, expected, precision):
        value = normalize_date(raw)
        assert value.kind == "date"
        assert value.value == expected
        assert value.precision == precision

    @pytest.mark.parametrize("raw", ["vacant", "n/a", "sometime in spring", "2019-13-01"])
    def test_unrecognized_to_null(self, raw):
        assert normalize_date(raw).is_null

    @given(st.text(max_size=40))
    def test_total(self, raw):
        value = normalize_date(raw)
        assert value.kind in ("date", "null")
        assert value.raw == raw


def test_flatten_fields_nested_and_lists():
    flat = flatten_fields({"medal": {"year": 2012, "city": "London"}, "teams": ["a", "b"], "n": 5})
    assert flat == {"medal.year": 2012, "medal.city": "London", "teams.0": "a", "teams.1": "b", "n": 5}


def test_raw_text_renderings():
    assert ingest.raw_text(None) == ""
    assert ingest.raw_text(0.939) == "0.939"
    assert ingest.raw_text(1200) == "1200"
    assert ingest.raw_text(True) == "true"
