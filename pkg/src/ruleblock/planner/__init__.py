"""Execution plan generation.

Orders the predicate universe by cost-effectiveness (cheap and rarely
satisfied first), folds every rule's sorted precondition into a shared
prefix tree, scores the tree's edges by how promising the rules below
them are, and flattens the tree into a branch-free instruction path the
engine can interpret without recursion.
"""

from ruleblock.planner.cost import (
    CostModel,
    TimingLog,
    estimate_cost,
    estimate_costs,
    sample_timings,
    train_cost_model,
)
from ruleblock.planner.selectivity import SelectivityProfile, estimate_selectivities, estimate_selectivity
from ruleblock.planner.plan import (
    Checkpoint,
    EvalPredicate,
    ExecutionPath,
    ExecutionTree,
    OrderedPredicate,
    PlanBundle,
    PlannerConfig,
    PredicateOrdering,
    build_tree,
    compile_path,
    cost_effectiveness,
    generate_plan,
    order_predicates,
    plan_generation_time_budget,
    score_tree,
)

__all__ = [
    "Checkpoint",
    "CostModel",
    "EvalPredicate",
    "ExecutionPath",
    "ExecutionTree",
    "OrderedPredicate",
    "PlanBundle",
    "PlannerConfig",
    "PredicateOrdering",
    "SelectivityProfile",
    "TimingLog",
    "build_tree",
    "compile_path",
    "cost_effectiveness",
    "estimate_cost",
    "estimate_costs",
    "estimate_selectivities",
    "estimate_selectivity",
    "generate_plan",
    "order_predicates",
    "plan_generation_time_budget",
    "sample_timings",
    "score_tree",
    "train_cost_model",
]
