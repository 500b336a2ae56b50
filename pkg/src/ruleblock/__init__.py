"""Rule-based blocking for entity resolution.

A blocker takes a relation and a set of conjunctive matching rules and
returns the candidate pairs that some rule certifies as a potential
match.  The package is organised around that flow:

- :mod:`ruleblock.relation`: schema-typed relations and CSV ingestion.
- :mod:`ruleblock.rules`: predicates, rules, rule-set parsing.
- :mod:`ruleblock.measures`: equality and similarity measure registry.
- :mod:`ruleblock.planner`: cost/selectivity estimation, predicate
  ordering, the scored execution tree and its compiled instruction path.
- :mod:`ruleblock.engine`: parallel evaluation of a compiled path over a
  partition (intervals, sliding windows, task stealing, result buffers).
- :mod:`ruleblock.partitioning`: plan-derived hash partitioning.
- :mod:`ruleblock.pipeline`: device scheduling and the pipelined run.
- :mod:`ruleblock.metrics`: precision/recall/F1 and candidate-set ratio.
- :mod:`ruleblock.cli`: the ``ruleblock`` command line tool.
"""

from ruleblock.relation import (
    AttrValue,
    DataPartition,
    Relation,
    Schema,
    TupleRecord,
    load_relation,
    split_fixed,
)
from ruleblock.rules import MDRule, Predicate, RuleSet, parse_ruleset, predicate_universe, validate_ruleset
from ruleblock.measures import MeasureRegistry, default_registry, edit_score, eval_equality, eval_predicate, jaccard_score
from ruleblock.engine import CandidateSet, EngineConfig, run_partition
from ruleblock.pipeline import Device, PipelineConfig, pipeline_run
from ruleblock.metrics import GroundTruth, MetricsReport, compute_metrics

__version__ = "0.1.0"

__all__ = [
    "AttrValue",
    "CandidateSet",
    "DataPartition",
    "Device",
    "EngineConfig",
    "GroundTruth",
    "MDRule",
    "MeasureRegistry",
    "MetricsReport",
    "PipelineConfig",
    "Predicate",
    "Relation",
    "RuleSet",
    "Schema",
    "TupleRecord",
    "compute_metrics",
    "default_registry",
    "edit_score",
    "eval_equality",
    "eval_predicate",
    "jaccard_score",
    "load_relation",
    "parse_ruleset",
    "pipeline_run",
    "predicate_universe",
    "run_partition",
    "split_fixed",
    "validate_ruleset",
]
