"""Predicate ordering, the execution tree, and the compiled path.

The tree is a trie over rule preconditions: every rule's predicates are
sorted by descending cost-effectiveness, then inserted root-down so that
shared prefixes merge into common nodes.  Each edge carries a predicate
and a score (the best witness probability among the rules below it);
depth-first evaluation explores high-score edges first and stops at the
first satisfied rule.

The tree is then flattened into a sequential instruction list: one
predicate check per edge with a fail-jump that skips the edge's whole
subtree, and a checkpoint after each rule's last predicate.  Interpreting
that list is exactly DFS with backtracking, minus the recursion.
"""

from __future__ import annotations

import random
import time
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence, Union

from ruleblock.errors import ConfigError
from ruleblock.relation import Relation
from ruleblock.rules import MDRule, Predicate, RuleSet, predicate_universe


def cost_effectiveness(est_cost: float, sp: float) -> float:
    """(1 - sp) / cost: prefer cheap predicates that rarely hold."""
    if est_cost <= 0:
        raise ConfigError(f"estimated cost must be positive, got {est_cost}")
    return (1.0 - sp) / est_cost


@dataclass(frozen=True)
class OrderedPredicate:
    predicate: Predicate
    est_cost: float
    sp: float
    cost_effectiveness: float


@dataclass
class PredicateOrdering:
    """Universe sorted by descending cost-effectiveness; ties broken by
    ascending cost, then first appearance."""

    entries: list[OrderedPredicate]

    def position(self, p: Predicate) -> int:
        return self._positions[p]

    def __post_init__(self) -> None:
        self._positions = {e.predicate: i for i, e in enumerate(self.entries)}

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def order_predicates(
    universe: Sequence[Predicate],
    costs: Mapping[Predicate, float],
    sps: Mapping[Predicate, float],
) -> PredicateOrdering:
    missing = [p for p in universe if p not in costs or p not in sps]
    if missing:
        raise ConfigError(f"cost/sp missing for {len(missing)} predicate(s), e.g. {missing[0].describe()}")
    entries = [
        OrderedPredicate(p, costs[p], sps[p], cost_effectiveness(costs[p], sps[p])) for p in universe
    ]
    indexed = list(enumerate(entries))
    indexed.sort(key=lambda pair: (-pair[1].cost_effectiveness, pair[1].est_cost, pair[0]))
    return PredicateOrdering([e for _, e in indexed])


# ---------------------------------------------------------------------------
# Execution tree


@dataclass
class TreeNode:
    node_id: int
    edges: list["TreeEdge"] = field(default_factory=list)
    leaf_rules: list[str] = field(default_factory=list)

    def child_via(self, p: Predicate) -> Optional["TreeEdge"]:
        for edge in self.edges:
            if edge.predicate == p:
                return edge
        return None


@dataclass
class TreeEdge:
    predicate: Predicate
    child: TreeNode
    cover: set[str] = field(default_factory=set)
    score: float = 0.0


@dataclass
class ExecutionTree:
    root: TreeNode
    rules: RuleSet
    node_count: int
    wp: dict[str, float] = field(default_factory=dict)
    scored: bool = False

    def leaf_count(self) -> int:
        total = 0
        stack = [self.root]
        while stack:
            node = stack.pop()
            total += len(node.leaf_rules)
            stack.extend(e.child for e in node.edges)
        return total

    def rule_path(self, rule_id: str) -> list[Predicate]:
        """Predicates along the root-to-leaf path of one rule."""
        path: list[Predicate] = []

        def visit(node: TreeNode) -> bool:
            if rule_id in node.leaf_rules:
                return True
            for edge in node.edges:
                path.append(edge.predicate)
                if visit(edge.child):
                    return True
                path.pop()
            return False

        if not visit(self.root):
            raise KeyError(rule_id)
        return path

    def root_edges(self) -> list[TreeEdge]:
        return list(self.root.edges)


def sorted_precondition(rule: MDRule, ordering: PredicateOrdering) -> list[Predicate]:
    return sorted(rule.precondition, key=ordering.position)


def build_tree(rules: RuleSet, ordering: PredicateOrdering) -> ExecutionTree:
    """Fold each rule's sorted precondition into the prefix tree,
    reusing an existing edge whenever it carries the same predicate."""
    for rule in rules:
        for p in rule.precondition:
            if p not in ordering._positions:
                raise ConfigError(f"rule {rule.rule_id!r}: predicate {p.describe()} missing from ordering")
    counter = 0
    root = TreeNode(node_id=counter)
    node_count = 1
    for rule in rules:
        node = root
        for p in sorted_precondition(rule, ordering):
            edge = node.child_via(p)
            if edge is None:
                counter += 1
                edge = TreeEdge(predicate=p, child=TreeNode(node_id=counter))
                node.edges.append(edge)
                node_count += 1
            edge.cover.add(rule.rule_id)
            node = edge.child
        node.leaf_rules.append(rule.rule_id)
    return ExecutionTree(root=root, rules=rules, node_count=node_count)


def rule_witness_probability(rule: MDRule, sps: Mapping[Predicate, float]) -> float:
    """Product of the per-predicate satisfaction probabilities,
    treating them as independent."""
    wp = 1.0
    for p in rule.precondition:
        wp *= sps[p]
    return wp


def score_tree(
    tree: ExecutionTree,
    sps: Mapping[Predicate, float],
    wp_override: Optional[Mapping[str, float]] = None,
) -> ExecutionTree:
    """Attach witness probabilities and edge scores; reorder each node's
    edges by descending score (insertion order on ties).

    wp_override substitutes measured witness rates (e.g. from labeled
    pairs) for the independence product.
    """
    wp: dict[str, float] = {}
    for rule in tree.rules:
        if wp_override is not None and rule.rule_id in wp_override:
            wp[rule.rule_id] = float(wp_override[rule.rule_id])
        else:
            missing = [p for p in rule.precondition if p not in sps]
            if missing:
                raise ConfigError(f"sp missing for predicate {missing[0].describe()}")
            wp[rule.rule_id] = rule_witness_probability(rule, sps)
    tree.wp = wp

    def visit(node: TreeNode) -> None:
        for edge in node.edges:
            edge.score = max(wp[rid] for rid in edge.cover)
            visit(edge.child)
        node.edges.sort(key=lambda e: -e.score)

    visit(tree.root)
    tree.scored = True
    return tree


# ---------------------------------------------------------------------------
# Compiled execution path


@dataclass(frozen=True)
class EvalPredicate:
    slot: int
    fail_jump: int


@dataclass(frozen=True)
class Checkpoint:
    rule_id: str


Instruction = Union[EvalPredicate, Checkpoint]


@dataclass
class ExecutionPath:
    """Branch-free instruction list plus the deduplicated predicate table.

    Layout notes for interpreters: a false predicate jumps to
    ``fail_jump`` (first instruction past its subtree); a checkpoint
    means every predicate of that rule has held.  Each distinct
    predicate owns one slot, so one reuse bit and one value bit per slot
    suffice to avoid repeated evaluation within a pair.
    """

    instructions: list[Instruction]
    predicate_table: list[Predicate]
    rule_ids: list[str]
    root_slots: list[int]

    @property
    def n_slots(self) -> int:
        return len(self.predicate_table)

    def slot_of(self, p: Predicate) -> int:
        return self.predicate_table.index(p)

    def checkpoint_order(self) -> list[str]:
        return [ins.rule_id for ins in self.instructions if isinstance(ins, Checkpoint)]

    def describe(self) -> str:
        lines = []
        for i, ins in enumerate(self.instructions):
            if isinstance(ins, Checkpoint):
                lines.append(f"{i:4d}  CHECKPOINT {ins.rule_id}")
            else:
                pred = self.predicate_table[ins.slot]
                lines.append(f"{i:4d}  EVAL slot={ins.slot} [{pred.describe()}] on-fail -> {ins.fail_jump}")
        return "\n".join(lines)


def compile_path(tree: ExecutionTree) -> ExecutionPath:
    """Flatten the scored tree into instructions in DFS order (children
    by descending edge score), with fail jumps replacing backtracking."""
    if not tree.scored:
        raise ConfigError("tree must be scored before compilation")
    slots: dict[Predicate, int] = {}
    instructions: list[Instruction] = []

    def slot_for(p: Predicate) -> int:
        if p not in slots:
            slots[p] = len(slots)
        return slots[p]

    def emit(node: TreeNode) -> None:
        for rid in node.leaf_rules:
            instructions.append(Checkpoint(rule_id=rid))
        for edge in node.edges:
            slot = slot_for(edge.predicate)
            pos = len(instructions)
            instructions.append(EvalPredicate(slot=slot, fail_jump=-1))
            emit(edge.child)
            instructions[pos] = EvalPredicate(slot=slot, fail_jump=len(instructions))

    emit(tree.root)
    table = [p for p, _ in sorted(slots.items(), key=lambda kv: kv[1])]
    root_slots = [slots[e.predicate] for e in tree.root.edges]
    return ExecutionPath(
        instructions=instructions,
        predicate_table=table,
        rule_ids=[r.rule_id for r in tree.rules],
        root_slots=root_slots,
    )


# ---------------------------------------------------------------------------
# End-to-end plan generation


@dataclass
class PlannerConfig:
    n_timing_samples: int = 50
    cost_sample_pairs: int = 10_000
    k_buckets: int = 64
    epochs: int = 300
    lr: float = 0.01
    rng_seed: int = 0
    ordering_mode: str = "epg"  # epg | random | reversed
    wp_override: Optional[dict[str, float]] = None


@dataclass
class PlanBundle:
    ordering: PredicateOrdering
    tree: ExecutionTree
    path: ExecutionPath
    costs: dict[Predicate, float]
    sps: dict[Predicate, float]
    warnings: list[str]
    train_mse: float
    timings: dict[str, float]


def _permuted_ordering(entries: list[OrderedPredicate], mode: str, seed: int) -> PredicateOrdering:
    if mode == "reversed":
        return PredicateOrdering(list(reversed(entries)))
    if mode == "random":
        shuffled = entries[:]
        random.Random(seed).shuffle(shuffled)
        return PredicateOrdering(shuffled)
    raise ConfigError(f"unknown ordering mode {mode!r}")


def generate_plan(
    relation: Relation,
    rules: RuleSet,
    cfg: PlannerConfig = PlannerConfig(),
    reg=None,
) -> PlanBundle:
    """Full plan generation: timing sample, cost model, selectivity
    profile, ordering, tree, scores, compiled path."""
    from ruleblock.planner.cost import estimate_costs, sample_timings, train_cost_model
    from ruleblock.planner.selectivity import estimate_selectivities

    universe = predicate_universe(rules)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    log = sample_timings(relation, universe, cfg.n_timing_samples, rng_seed=cfg.rng_seed, reg=reg)
    model = train_cost_model(log, epochs=cfg.epochs, lr=cfg.lr, rng_seed=cfg.rng_seed)
    costs = estimate_costs(universe, relation, model, n_pairs=cfg.cost_sample_pairs, rng_seed=cfg.rng_seed)
    timings["cost_estimation_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    profiles = estimate_selectivities(universe, relation, k=cfg.k_buckets, rng_seed=cfg.rng_seed)
    sps = {p: prof.sp for p, prof in profiles.items()}
    warnings = [prof.warning for prof in profiles.values() if prof.warning]
    timings["selectivity_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    ordering = order_predicates(universe, costs, sps)
    if cfg.ordering_mode != "epg":
        ordering = _permuted_ordering(ordering.entries, cfg.ordering_mode, cfg.rng_seed)
    tree = build_tree(rules, ordering)
    score_tree(tree, sps, wp_override=cfg.wp_override)
    path = compile_path(tree)
    timings["plan_build_s"] = time.perf_counter() - t0

    return PlanBundle(
        ordering=ordering,
        tree=tree,
        path=path,
        costs=costs,
        sps=sps,
        warnings=warnings,
        train_mse=model.final_mse,
        timings=timings,
    )


def wp_from_labeled_pairs(
    rules: RuleSet,
    relation: Relation,
    pairs: Sequence[tuple[int, int]],
    reg=None,
) -> dict[str, float]:
    """Witness probability per rule measured on labeled pairs: the
    fraction of the given pairs whose whole precondition holds.  An
    alternative to the independence product when labels exist."""
    from ruleblock.measures import default_registry, eval_predicate

    reg = reg or default_registry()
    if not pairs:
        raise ConfigError("need at least one labeled pair")
    out = {}
    for rule in rules:
        hits = 0
        for a, b in pairs:
            t, s = relation.tuples[a], relation.tuples[b]
            if all(eval_predicate(p, t, s, reg, relation.schema) for p in rule.precondition):
                hits += 1
        out[rule.rule_id] = hits / len(pairs)
    return out


def plan_generation_time_budget(
    rules: RuleSet,
    costs: Mapping[Predicate, float],
    sps: Mapping[Predicate, float],
) -> dict[str, float]:
    """Wall time of ordering + tree build + scoring + compilation, with
    cost/selectivity inputs supplied (timing sampling excluded)."""
    universe = predicate_universe(rules)
    t0 = time.perf_counter()
    ordering = order_predicates(universe, costs, sps)
    t_order = time.perf_counter()
    tree = build_tree(rules, ordering)
    t_build = time.perf_counter()
    score_tree(tree, sps)
    t_score = time.perf_counter()
    path = compile_path(tree)
    t_compile = time.perf_counter()
    return {
        "order_s": t_order - t0,
        "build_s": t_build - t_order,
        "score_s": t_score - t_build,
        "compile_s": t_compile - t_score,
        "total_s": t_compile - t0,
        "n_rules": float(len(rules)),
        "n_predicates": float(len(universe)),
        "n_instructions": float(len(path.instructions)),
    }
