"""Predicate ordering, tree construction, scoring, and path compilation."""

import statistics

import pytest

from ruleblock.errors import ConfigError
from ruleblock.planner.plan import (
    Checkpoint,
    EvalPredicate,
    build_tree,
    compile_path,
    cost_effectiveness,
    order_predicates,
    plan_generation_time_budget,
    score_tree,
)
from ruleblock.rules import Predicate, predicate_universe

from conftest import plan_with, rules_from


def P(attr, op="eq", measure=None, threshold=None):
    return Predicate(lhs_attr=attr, comparator=op, rhs_attr=attr, measure=measure, threshold=threshold)


COLOR = P("color")
PRICE = P("price")
SNAME = P("sname")
PNAME = P("pname", "sim", "edit", 0.3)
DESC = P("description", "sim", "jaccard", 0.4)
SADDR = P("saddress", "sim", "edit", 0.75)

RULES_DOC = [
    {
        "id": "phi1",
        "when": [
            {"t_attr": "color", "op": "eq", "s_attr": "color"},
            {"t_attr": "price", "op": "eq", "s_attr": "price"},
            {"t_attr": "sname", "op": "eq", "s_attr": "sname"},
            {"t_attr": "pname", "op": "sim", "s_attr": "pname", "measure": "edit", "threshold": 0.3},
        ],
    },
    {
        "id": "phi2",
        "when": [
            {"t_attr": "sname", "op": "eq", "s_attr": "sname"},
            {"t_attr": "description", "op": "sim", "s_attr": "description", "measure": "jaccard", "threshold": 0.4},
        ],
    },
    {
        "id": "phi3",
        "when": [
            {"t_attr": "saddress", "op": "sim", "s_attr": "saddress", "measure": "edit", "threshold": 0.75},
            {"t_attr": "description", "op": "sim", "s_attr": "description", "measure": "jaccard", "threshold": 0.4},
        ],
    },
]

# Hand-picked stats: sname is by far the most cost-effective predicate,
# matching the reference tree shape (both rule 1 and rule 2 start with
# it, rule 2 branching off right after).  Witness probabilities come out
# as wp(phi1) = 0.4*0.5*0.6*0.4 = 0.048, wp(phi2) = 0.4*0.2 = 0.08,
# wp(phi3) = 0.3*0.2 = 0.06.
COSTS = {SNAME: 0.1, COLOR: 0.1, PRICE: 0.2, PNAME: 1.0, DESC: 0.9, SADDR: 0.5}
SPS = {SNAME: 0.4, COLOR: 0.5, PRICE: 0.6, PNAME: 0.4, DESC: 0.2, SADDR: 0.3}


@pytest.fixture(scope="module")
def demo_plan():
    rules = rules_from(RULES_DOC)
    return rules, *plan_with(rules, COSTS, SPS)


class TestCostEffectiveness:
    def test_reference_values(self):
        # (1-1)/0.1 = 0 and (1-0.2)/1 = 0.8.
        assert cost_effectiveness(0.1, 1.0) == pytest.approx(0.0)
        assert cost_effectiveness(1.0, 0.2) == pytest.approx(0.8)

    def test_nonpositive_cost_rejected(self):
        with pytest.raises(ConfigError):
            cost_effectiveness(0.0, 0.5)


class TestOrdering:
    def test_expensive_selective_beats_cheap_unselective(self):
        # The similarity predicate (ce 0.8) outranks the equality whose
        # satisfaction probability is 1 (ce 0).
        costs = {COLOR: 0.1, PNAME: 1.0}
        sps = {COLOR: 1.0, PNAME: 0.2}
        ordering = order_predicates([COLOR, PNAME], costs, sps)
        assert ordering.entries[0].predicate == PNAME
        assert ordering.entries[0].cost_effectiveness == pytest.approx(0.8)
        assert ordering.entries[1].cost_effectiveness == pytest.approx(0.0)

    def test_all_sp_one_ties_break_by_cost(self):
        costs = {COLOR: 0.5, PRICE: 0.1, SNAME: 0.3}
        sps = {COLOR: 1.0, PRICE: 1.0, SNAME: 1.0}
        ordering = order_predicates([COLOR, PRICE, SNAME], costs, sps)
        assert [e.predicate for e in ordering] == [PRICE, SNAME, COLOR]

    def test_full_tie_keeps_first_appearance(self):
        costs = {COLOR: 0.5, PRICE: 0.5}
        sps = {COLOR: 0.5, PRICE: 0.5}
        ordering = order_predicates([COLOR, PRICE], costs, sps)
        assert [e.predicate for e in ordering] == [COLOR, PRICE]

    def test_missing_stats_rejected(self):
        with pytest.raises(ConfigError):
            order_predicates([COLOR], {COLOR: 0.5}, {})

    def test_descending_by_cost_effectiveness(self, demo_plan):
        _, ordering, _, _ = demo_plan
        ces = [e.cost_effectiveness for e in ordering]
        assert ces == sorted(ces, reverse=True)


class TestBuildTree:
    def test_shared_prefix_branches_at_sname(self, demo_plan):
        rules, ordering, tree, _ = demo_plan
        # sname is the top-ordered predicate of both rule 1 and rule 2,
        # so the root has one edge for it and rule 2 branches below.
        root_preds = [e.predicate for e in tree.root.edges]
        assert SNAME in root_preds
        sname_child = tree.root.child_via(SNAME).child
        assert len(sname_child.edges) == 2
        assert tree.leaf_count() == 3

    def test_single_rule_chain(self):
        rules = rules_from([RULES_DOC[0]])
        _, tree, _ = plan_with(rules, COSTS, SPS)
        node = tree.root
        depth = 0
        while node.edges:
            assert len(node.edges) == 1
            node = node.edges[0].child
            depth += 1
        assert depth == 4
        assert node.leaf_rules == ["phi1"]

    def test_identical_preconditions_in_different_written_order(self):
        doc = [
            {"id": "a", "when": [
                {"t_attr": "color", "op": "eq", "s_attr": "color"},
                {"t_attr": "price", "op": "eq", "s_attr": "price"},
            ]},
            {"id": "b", "when": [
                {"t_attr": "price", "op": "eq", "s_attr": "price"},
                {"t_attr": "color", "op": "eq", "s_attr": "color"},
            ]},
        ]
        rules = rules_from(doc)
        _, tree, _ = plan_with(rules, {COLOR: 0.1, PRICE: 0.2}, {COLOR: 0.5, PRICE: 0.5})
        # Both rules sort to the same sequence: one path, two rules at
        # the final node.
        node = tree.root
        while node.edges:
            assert len(node.edges) == 1
            node = node.edges[0].child
        assert sorted(node.leaf_rules) == ["a", "b"]
        assert tree.leaf_count() == 2

    def test_rule_path_collects_precondition(self, demo_plan):
        rules, _, tree, _ = demo_plan
        for rule in rules:
            path_preds = tree.rule_path(rule.rule_id)
            assert sorted(p.describe() for p in path_preds) == sorted(p.describe() for p in rule.precondition)
            assert len(path_preds) == len(rule.precondition)

    def test_random_rule_sets_path_multiset(self):
        from ruleblock.datasets import random_instance

        for seed in range(12):
            _, doc = random_instance(seed + 50)
            rules = rules_from(doc)
            universe = predicate_universe(rules)
            costs = {p: 0.1 + (i % 7) / 7 for i, p in enumerate(universe)}
            sps = {p: (i % 5) / 5 for i, p in enumerate(universe)}
            _, tree, _ = plan_with(rules, costs, sps)
            assert tree.leaf_count() == len(rules)
            for rule in rules:
                got = sorted(p.describe() for p in tree.rule_path(rule.rule_id))
                want = sorted(p.describe() for p in rule.precondition)
                assert got == want


class TestScoreTree:
    def test_witness_probability_product(self, demo_plan):
        _, _, tree, _ = demo_plan
        assert tree.wp["phi2"] == pytest.approx(0.08)
        assert tree.wp["phi1"] == pytest.approx(0.048)

    def test_root_edge_score_is_max_over_covered_rules(self, demo_plan):
        _, _, tree, _ = demo_plan
        sname_edge = tree.root.child_via(SNAME)
        assert sname_edge.cover == {"phi1", "phi2"}
        assert sname_edge.score == pytest.approx(max(tree.wp["phi1"], tree.wp["phi2"]))
        assert sname_edge.score == pytest.approx(0.08)

    def test_single_rule_tree_scores_equal_wp(self):
        rules = rules_from([RULES_DOC[1]])
        _, tree, _ = plan_with(rules, COSTS, SPS)
        wp = tree.wp["phi2"]
        node = tree.root
        while node.edges:
            assert node.edges[0].score == pytest.approx(wp)
            node = node.edges[0].child

    def test_wp_override(self):
        rules = rules_from([RULES_DOC[1]])
        universe = predicate_universe(rules)
        ordering = order_predicates(universe, {p: 0.5 for p in universe}, {p: 0.5 for p in universe})
        tree = build_tree(rules, ordering)
        score_tree(tree, {p: 0.5 for p in universe}, wp_override={"phi2": 0.77})
        assert tree.wp["phi2"] == 0.77

    def test_wp_from_labeled_pairs(self, products):
        from ruleblock.planner.plan import wp_from_labeled_pairs

        relation, rules = products
        wp = wp_from_labeled_pairs(rules, relation, [(0, 3), (0, 4), (3, 4), (1, 2)])
        assert wp == {"phi1": 0.75, "phi2": 0.25, "phi3": 0.25}


class TestCompilePath:
    def test_checkpoint_order_phi2_phi1_phi3(self, demo_plan):
        # wp: phi2 0.08 > phi1 0.048 > phi3 0.06 -> the sname subtree is
        # explored first (score 0.08) with phi2 before phi1; phi3 last.
        _, _, tree, path = demo_plan
        assert tree.wp["phi1"] == pytest.approx(0.048)
        assert tree.wp["phi3"] == pytest.approx(0.06)
        assert path.checkpoint_order() == ["phi2", "phi1", "phi3"]

    def test_chain_rule_layout(self):
        rules = rules_from(
            [{"id": "r", "when": [
                {"t_attr": "color", "op": "eq", "s_attr": "color"},
                {"t_attr": "price", "op": "eq", "s_attr": "price"},
                {"t_attr": "sname", "op": "eq", "s_attr": "sname"},
            ]}]
        )
        _, _, path = plan_with(
            rules,
            {COLOR: 0.1, PRICE: 0.2, SNAME: 0.3},
            {COLOR: 0.1, PRICE: 0.2, SNAME: 0.3},
        )
        kinds = [type(i).__name__ for i in path.instructions]
        assert kinds == ["EvalPredicate"] * 3 + ["Checkpoint"]
        end = len(path.instructions)
        for ins in path.instructions[:-1]:
            assert ins.fail_jump == end

    def test_shared_predicate_single_slot(self, demo_plan):
        _, _, _, path = demo_plan
        desc_slot = path.slot_of(DESC)
        refs = [ins.slot for ins in path.instructions if isinstance(ins, EvalPredicate) and ins.slot == desc_slot]
        assert len(refs) == 2  # two instructions, one slot
        assert path.n_slots == 6

    def test_fail_jump_skips_whole_subtree(self, demo_plan):
        _, _, tree, path = demo_plan
        # The sname instruction must jump past phi2 AND phi1 on failure,
        # landing on the first instruction of the phi3 subtree.
        sname_slot = path.slot_of(SNAME)
        first = next(i for i, ins in enumerate(path.instructions) if isinstance(ins, EvalPredicate) and ins.slot == sname_slot)
        target = path.instructions[path.instructions[first].fail_jump]
        assert isinstance(target, EvalPredicate)
        assert path.predicate_table[target.slot] == SADDR

    def test_children_visited_in_nonincreasing_score(self, demo_plan):
        _, _, tree, _ = demo_plan

        def walk(node):
            scores = [e.score for e in node.edges]
            assert scores == sorted(scores, reverse=True)
            for e in node.edges:
                walk(e.child)

        walk(tree.root)

    def test_unscored_tree_rejected(self):
        rules = rules_from([RULES_DOC[1]])
        universe = predicate_universe(rules)
        ordering = order_predicates(universe, {p: 0.5 for p in universe}, {p: 0.5 for p in universe})
        tree = build_tree(rules, ordering)
        with pytest.raises(ConfigError):
            compile_path(tree)

    def test_prefix_rule_checkpoints_before_descent(self):
        # One rule is a strict prefix of another: its checkpoint must
        # appear before the longer rule's remaining predicates.
        doc = [
            {"id": "long", "when": [
                {"t_attr": "color", "op": "eq", "s_attr": "color"},
                {"t_attr": "price", "op": "eq", "s_attr": "price"},
            ]},
            {"id": "short", "when": [{"t_attr": "color", "op": "eq", "s_attr": "color"}]},
        ]
        rules = rules_from(doc)
        _, _, path = plan_with(rules, {COLOR: 0.1, PRICE: 0.2}, {COLOR: 0.3, PRICE: 0.4})
        kinds = [(type(i).__name__, getattr(i, "rule_id", None)) for i in path.instructions]
        assert kinds == [("EvalPredicate", None), ("Checkpoint", "short"), ("EvalPredicate", None), ("Checkpoint", "long")]


class TestPlanBudget:
    def test_fifty_rules_under_a_second(self):
        from ruleblock.bench import suite_plan_budget

        row = suite_plan_budget(n_rules=50, n_predicates=100)[0]
        assert row["total_s"] < 1.0
        assert row["n_rules"] == 50

    def test_single_rule_cheaper_than_fifty(self):
        from ruleblock.bench import suite_plan_budget

        small = statistics.median(suite_plan_budget(n_rules=1, n_predicates=100)[0]["total_s"] for _ in range(5))
        big = statistics.median(suite_plan_budget(n_rules=50, n_predicates=100)[0]["total_s"] for _ in range(5))
        assert small < big

    def test_repeat_run_identical_plan(self, demo_plan):
        rules, ordering, tree, path = demo_plan
        ordering2, tree2, path2 = plan_with(rules, COSTS, SPS)
        assert [e.predicate for e in ordering2] == [e.predicate for e in ordering]
        assert path2.describe() == path.describe()
