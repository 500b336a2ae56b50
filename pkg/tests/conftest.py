"""Shared fixtures: the demo products relation, its rules, and helpers
for building plans from hand-chosen cost/selectivity numbers."""

from __future__ import annotations

import json

import pytest

from ruleblock.datasets import write_products
from ruleblock.measures import default_registry
from ruleblock.planner.plan import PlannerConfig, build_tree, compile_path, order_predicates, score_tree
from ruleblock.relation import load_relation
from ruleblock.rules import parse_ruleset, predicate_universe

FAST_PLANNER = PlannerConfig(n_timing_samples=8, cost_sample_pairs=300, epochs=60, k_buckets=16)


@pytest.fixture(scope="session")
def products(tmp_path_factory):
    data, rules_path = write_products(tmp_path_factory.mktemp("products"))
    relation = load_relation(data)
    rules = parse_ruleset(rules_path.read_text())
    return relation, rules


@pytest.fixture(scope="session")
def registry():
    return default_registry()


@pytest.fixture(scope="session")
def products_paths(tmp_path_factory):
    return write_products(tmp_path_factory.mktemp("products_files"))


def rules_from(doc) -> "RuleSet":
    return parse_ruleset(json.dumps(doc))


def plan_with(rules, costs, sps):
    """Plan built from explicit cost/sp maps (no sampling, no model)."""
    universe = predicate_universe(rules)
    ordering = order_predicates(universe, costs, sps)
    tree = score_tree(build_tree(rules, ordering), sps)
    path = compile_path(tree)
    return ordering, tree, path
