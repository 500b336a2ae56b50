"""Relation loading, typing, splitting, and round-trips."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruleblock.errors import DataParseError, SchemaError
from ruleblock.relation import (
    Kind,
    Relation,
    Schema,
    TupleRecord,
    is_missing,
    load_relation,
    parse_number,
    save_relation,
    split_fixed,
)


def write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestLoadRelation:
    def test_products_table(self, products):
        relation, _ = products
        assert len(relation) == 5
        # The dash marks a missing value.
        assert is_missing(relation.tuples[3].values[relation.schema.index_of("saddress")])
        assert is_missing(relation.tuples[1].values[relation.schema.index_of("price")])
        assert relation.tuples[0].eid == "e1"
        assert relation.schema.kind_of("price") is Kind.NUMERIC
        assert relation.schema.kind_of("description") is Kind.LONG_TEXT
        assert relation.schema.kind_of("sname") is Kind.SHORT_TEXT

    def test_header_only_file(self, tmp_path):
        rel = load_relation(write(tmp_path, "a,b\n"))
        assert len(rel) == 0
        assert rel.schema.names == ("a", "b")

    def test_mixed_column_is_text_not_numeric(self, tmp_path):
        rel = load_relation(write(tmp_path, "x\n1\n2\nx\n"))
        assert rel.schema.kind_of("x") is Kind.SHORT_TEXT

    def test_numeric_with_currency(self, tmp_path):
        rel = load_relation(write(tmp_path, "p\n$909\n909.0\n"))
        assert rel.schema.kind_of("p") is Kind.NUMERIC
        assert rel.tuples[0].values[0] == rel.tuples[1].values[0] == 909.0

    def test_ragged_row_names_line(self, tmp_path):
        with pytest.raises(DataParseError, match="line 3"):
            load_relation(write(tmp_path, "a,b\n1,2\n1,2,3\n"))

    def test_duplicate_header(self, tmp_path):
        with pytest.raises(SchemaError, match="duplicate header"):
            load_relation(write(tmp_path, "a,a\n1,2\n"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataParseError, match="no such file"):
            load_relation(tmp_path / "absent.csv")

    def test_custom_missing_markers(self, tmp_path):
        rel = load_relation(write(tmp_path, "a\nN/A\nx\n"), missing_markers=("N/A",))
        assert is_missing(rel.tuples[0].values[0])
        assert rel.tuples[1].values[0] == "x"

    def test_schema_hints_override(self, tmp_path):
        rel = load_relation(write(tmp_path, "a\nred\nblue\n"), schema_hints={"a": "categorical"})
        assert rel.schema.kind_of("a") is Kind.CATEGORICAL

    def test_long_text_median_threshold(self, tmp_path):
        nine = " ".join(["w"] * 9)
        rel = load_relation(write(tmp_path, f"a\n\"{nine}\"\n\"{nine}\"\n"))
        assert rel.schema.kind_of("a") is Kind.LONG_TEXT


class TestParseNumber:
    @pytest.mark.parametrize(
        "text,expected",
        [("909", 909.0), ("$909", 909.0), ("909.0", 909.0), ("1,234.5", 1234.5), ("x", None), ("", None), ("nan", None)],
    )
    def test_cases(self, text, expected):
        assert parse_number(text) == expected


class TestRoundTrip:
    def test_products_round_trip(self, products, tmp_path):
        relation, _ = products
        out = tmp_path / "roundtrip.csv"
        save_relation(relation, out)
        again = load_relation(out)
        for a, b in zip(relation.tuples, again.tuples):
            for va, vb in zip(a.values, b.values):
                if is_missing(va):
                    assert is_missing(vb)
                else:
                    assert va == vb

    def test_quoting_preserved(self, tmp_path):
        src = write(tmp_path, 'a,b\n"x, y",plain\n"say ""hi""",2\n')
        rel = load_relation(src)
        assert rel.tuples[0].values[0] == "x, y"
        assert rel.tuples[1].values[0] == 'say "hi"'
        out = tmp_path / "rt.csv"
        save_relation(rel, out)
        assert load_relation(out).tuples[0].values[0] == "x, y"


def toy_relation(n: int) -> Relation:
    schema = Schema(attributes=(("a", Kind.SHORT_TEXT),))
    return Relation(
        schema=schema,
        tuples=tuple(TupleRecord(tid=i, eid=None, values=(f"v{i}",)) for i in range(n)),
    )


class TestSplitFixed:
    def test_identity_split(self):
        parts = split_fixed(toy_relation(5), 1)
        assert len(parts) == 1 and len(parts[0]) == 5

    def test_five_over_two(self):
        parts = split_fixed(toy_relation(5), 2)
        assert sorted(len(p) for p in parts) == [2, 3]

    def test_2304_over_nine(self):
        parts = split_fixed(toy_relation(2304), 9)
        assert len(parts) == 9
        assert all(len(p) == 256 for p in parts)

    def test_more_parts_than_tuples(self):
        parts = split_fixed(toy_relation(2), 5)
        assert all(len(p) == 1 for p in parts)
        assert len(parts) == 2

    def test_empty_relation_rejected(self):
        with pytest.raises(SchemaError):
            split_fixed(toy_relation(0), 2)

    def test_zero_parts_rejected(self):
        with pytest.raises(SchemaError):
            split_fixed(toy_relation(3), 0)

    @given(n=st.integers(min_value=1, max_value=300), m=st.integers(min_value=1, max_value=40))
    @settings(max_examples=60, deadline=None)
    def test_union_covers_everything(self, n, m):
        parts = split_fixed(toy_relation(n), m)
        seen = [tid for p in parts for tid in p.tuple_refs]
        assert sorted(seen) == list(range(n))
        sizes = [len(p) for p in parts]
        assert max(sizes) - min(sizes) <= 1


class TestSchemaInvariants:
    def test_duplicate_attribute_names(self):
        with pytest.raises(SchemaError):
            Schema(attributes=(("a", Kind.NUMERIC), ("a", Kind.NUMERIC)))

    def test_eid_attr_must_exist(self):
        with pytest.raises(SchemaError):
            Schema(attributes=(("a", Kind.NUMERIC),), eid_attr="missing")

    def test_arity_checked(self):
        schema = Schema(attributes=(("a", Kind.SHORT_TEXT),))
        with pytest.raises(SchemaError):
            Relation(schema=schema, tuples=(TupleRecord(tid=0, eid=None, values=("x", "y")),))

    def test_dense_tids_checked(self):
        schema = Schema(attributes=(("a", Kind.SHORT_TEXT),))
        with pytest.raises(SchemaError):
            Relation(schema=schema, tuples=(TupleRecord(tid=1, eid=None, values=("x",)),))
