"""Equality and similarity measure semantics."""

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ruleblock.errors import ConfigError
from ruleblock.measures import (
    edit_score,
    eval_equality,
    eval_predicate,
    exact_token_score,
    jaccard_score,
    levenshtein,
    tokenize,
)
from ruleblock.relation import MISSING
from ruleblock.rules import Predicate



def reference_levenshtein(a: str, b: str) -> int:
    """Independent full-matrix DP oracle."""
    rows = len(a) + 1
    cols = len(b) + 1
    d = [[0] * cols for _ in range(rows)]
    for i in range(rows):
        d[i][0] = i
    for j in range(cols):
        d[0][j] = j
    for i in range(1, rows):
        for j in range(1, cols):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1, d[i - 1][j - 1] + cost)
    return d[-1][-1]


class TestEvalEquality:
    def test_same_color(self):
        assert eval_equality("Gray", "Gray") is True

    def test_missing_is_false(self):
        assert eval_equality(MISSING, "Gray") is False
        assert eval_equality("Gray", MISSING) is False
        assert eval_equality(MISSING, MISSING) is False

    def test_numeric_kind_parses_both_sides(self):
        assert eval_equality("909", "909.0", numeric_kind=True) is True
        assert eval_equality("$909", "909", numeric_kind=True) is True
        assert eval_equality("909", "910", numeric_kind=True) is False

    def test_text_is_byte_exact_after_trim(self):
        assert eval_equality(" x ", "x") is True
        assert eval_equality("X", "x") is False  # equality does not fold case

    def test_float_cells(self):
        assert eval_equality(909.0, 909.0) is True
        assert eval_equality(909.0, "909", numeric_kind=True) is True


class TestEditScore:
    def test_identity(self):
        assert edit_score("ThinkPad", "ThinkPad") == 1.0

    def test_kitten_sitting(self):
        assert reference_levenshtein("kitten", "sitting") == 3
        assert edit_score("kitten", "sitting") == pytest.approx(1 - 3 / 7)

    def test_empty_vs_text(self):
        assert edit_score("", "abc") == 0.0

    def test_both_empty(self):
        assert edit_score("", "") == 1.0

    def test_case_folded(self):
        assert edit_score("ABC", "abc") == 1.0

    @given(st.text(max_size=24), st.text(max_size=24))
    @settings(max_examples=150, deadline=None)
    def test_matches_reference_dp(self, a, b):
        a, b = a.strip().casefold(), b.strip().casefold()
        assert levenshtein(a, b) == reference_levenshtein(a, b)


class TestJaccardScore:
    def test_identity(self):
        assert jaccard_score("a b c", "a b c") == 1.0

    def test_one_third(self):
        assert jaccard_score("a b", "b c") == pytest.approx(1 / 3)

    def test_punctuation_only_is_zero(self):
        assert jaccard_score("...", "!!!") == 0.0

    def test_products_descriptions(self, products):
        relation, _ = products
        desc = relation.column("description")
        # Hand-derived: 13 shared tokens, 21 in the union.
        assert jaccard_score(desc[1], desc[2]) == pytest.approx(13 / 21)

    def test_punctuation_stripping(self):
        assert tokenize("15.6-inch (16GB) RAM") == ["156inch", "16gb", "ram"]


class TestExactToken:
    def test_equal_sets(self):
        assert exact_token_score("b a", "a b") == 1.0

    def test_unequal(self):
        assert exact_token_score("a b", "a c") == 0.0

    def test_both_empty(self):
        assert exact_token_score("...", "") == 0.0


class TestSymmetryAndBounds:
    @given(st.text(max_size=30), st.text(max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_edit_symmetric_and_bounded(self, a, b):
        s1, s2 = edit_score(a, b), edit_score(b, a)
        assert s1 == s2
        assert 0.0 <= s1 <= 1.0

    @given(st.text(max_size=30), st.text(max_size=30))
    @settings(max_examples=100, deadline=None)
    def test_jaccard_symmetric_and_bounded(self, a, b):
        s1, s2 = jaccard_score(a, b), jaccard_score(b, a)
        assert s1 == s2
        assert 0.0 <= s1 <= 1.0


class TestEvalPredicate:
    def test_pname_predicate_on_demo_pair(self, products, registry):
        relation, rules = products
        pname_pred = rules.by_id("phi1").precondition[3]
        # The repo pins this threshold at 0.3: the similarity between
        # the two spellings is 1 - 9/13.
        assert pname_pred.threshold == 0.3
        t1, t4 = relation.tuples[0], relation.tuples[3]
        assert eval_predicate(pname_pred, t1, t4, registry, relation.schema) is True

    def test_missing_price_fails(self, products, registry):
        relation, rules = products
        price_pred = rules.by_id("phi1").precondition[1]
        t2, t3 = relation.tuples[1], relation.tuples[2]
        assert eval_predicate(price_pred, t2, t3, registry, relation.schema) is False

    def test_threshold_one_is_exact_match_after_folding(self, registry, products):
        relation, _ = products
        p = Predicate(lhs_attr="pname", comparator="sim", rhs_attr="pname", measure="edit", threshold=1.0)
        t4, t5 = relation.tuples[3], relation.tuples[4]
        assert eval_predicate(p, t4, t5, registry, relation.schema) is True
        t1 = relation.tuples[0]
        assert eval_predicate(p, t1, t4, registry, relation.schema) is False

    def test_const_predicate(self, products, registry):
        relation, _ = products
        p = Predicate(lhs_attr="color", comparator="eq", const="Gray")
        t1, t2 = relation.tuples[0], relation.tuples[1]
        assert eval_predicate(p, t1, t2, registry, relation.schema) is True
        p2 = Predicate(lhs_attr="color", comparator="eq", const="Red")
        assert eval_predicate(p2, t1, t2, registry, relation.schema) is False

    def test_numeric_const(self, products, registry):
        relation, _ = products
        p = Predicate(lhs_attr="price", comparator="eq", const=909)
        assert eval_predicate(p, relation.tuples[0], relation.tuples[1], registry, relation.schema) is True

    def test_deterministic_and_pure(self, products, registry):
        relation, rules = products
        p = rules.by_id("phi2").precondition[1]
        t2, t3 = relation.tuples[1], relation.tuples[2]
        first = eval_predicate(p, t2, t3, registry, relation.schema)
        assert all(eval_predicate(p, t2, t3, registry, relation.schema) == first for _ in range(5))

    def test_unregistered_measure(self, products):
        relation, _ = products
        from ruleblock.measures import MeasureRegistry

        empty = MeasureRegistry()
        p = Predicate(lhs_attr="pname", comparator="sim", rhs_attr="pname", measure="edit", threshold=0.5)
        with pytest.raises(ConfigError, match="unregistered measure"):
            eval_predicate(p, relation.tuples[0], relation.tuples[3], empty, relation.schema)
