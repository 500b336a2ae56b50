"""Plan-derived hash partitioning.

Each root edge of the scored tree contributes one hash function, built
from its predicate: exact canonical values for equality edges, a minhash
band signature over tokens (or character 3-grams for the edit measure)
for similarity edges.  Every tuple lands in exactly one partition per
branch, so the duplication factor is the number of root edges.  A pair
that satisfies some rule agrees on that rule's root predicate, hence
meets inside that branch; similarity-keyed branches can still split a
true match across band boundaries, which cross-partition pulls recover.

Key groups larger than ``max_partition_size`` are split round-robin into
sibling sub-partitions marked for pairwise pulls, so no pair within the
group is lost.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ruleblock.errors import ConfigError
from ruleblock.hashing import minhash_signature, stable_hash64
from ruleblock.measures import fold_text, tokenize, value_text
from ruleblock.planner.plan import ExecutionTree
from ruleblock.relation import DataPartition, Kind, Relation, is_missing
from ruleblock.rules import Predicate

MISSING_KEY = "\x00missing"


@dataclass
class BandingConfig:
    rows: int = 4  # minhash values concatenated into one band signature
    seed: int = 0


@dataclass
class Partitioner:
    """Key function for one root edge of the plan tree."""

    branch_id: int
    predicate: Predicate
    banding: BandingConfig

    def key_for(self, value, numeric: bool) -> str:
        if is_missing(value):
            return MISSING_KEY
        p = self.predicate
        if p.comparator == "eq":
            if numeric:
                return f"n:{float(value)!r}"
            return f"v:{str(value).strip()}"
        text = fold_text(value_text(value))
        if p.measure == "edit":
            items = [text[i : i + 3] for i in range(max(1, len(text) - 2))] if text else []
        else:
            items = tokenize(text)
        if not items:
            return MISSING_KEY
        ids = np.array([stable_hash64(t, self.banding.seed) for t in items], dtype=np.uint64)
        sig = minhash_signature(ids, range(self.banding.seed, self.banding.seed + self.banding.rows))
        return "b:" + ":".join(f"{v:x}" for v in sig)

    def keys(self, relation: Relation) -> list[str]:
        """One partition key per tuple.

        Cross-attribute predicates have no single-copy key that
        co-locates both sides, so the whole branch degrades to one key
        group (sibling splits plus pulls keep it correct).
        """
        p = self.predicate
        if p.is_cross_attr:
            return ["x:all"] * len(relation)
        numeric = relation.schema.kind_of(p.lhs_attr) is Kind.NUMERIC
        return [self.key_for(v, numeric) for v in relation.column(p.lhs_attr)]


def derive_partitioners(tree: ExecutionTree, banding: Optional[BandingConfig] = None) -> list[Partitioner]:
    """One partitioner per root edge, branch ids in descending score
    order (matching DFS priority)."""
    if not tree.scored:
        raise ConfigError("tree must be scored before deriving partitioners")
    banding = banding or BandingConfig()
    out = []
    for branch_id, edge in enumerate(tree.root_edges()):
        out.append(Partitioner(branch_id=branch_id, predicate=edge.predicate, banding=banding))
    return out


def iter_partitions(
    relation: Relation,
    partitioners: list[Partitioner],
    max_partition_size: int = 512,
):
    """Yield partitions branch by branch: a cheap branch's partitions
    start flowing while later branches are still hashing, which is what
    lets the pipelined dispatcher overlap partitioning with execution."""
    if not partitioners:
        raise ConfigError("at least one partitioner required")
    if max_partition_size < 1:
        raise ConfigError("max_partition_size must be >= 1")
    pid = 0
    sibling_counter = 0
    # Equality branches key in microseconds while similarity branches
    # hash tokens; emitting the cheap branches first fills the device
    # pipeline before the expensive hashing starts.  Branch ids keep
    # their score order regardless.
    for part in sorted(partitioners, key=lambda p: p.predicate.comparator != "eq"):
        groups: dict[str, list[int]] = {}
        for tid, key in enumerate(part.keys(relation)):
            groups.setdefault(key, []).append(tid)
        for key in sorted(groups):
            refs = groups[key]
            if len(refs) <= max_partition_size:
                yield DataPartition(pid=pid, tuple_refs=tuple(refs), branch_id=part.branch_id, key_group=key)
                pid += 1
                continue
            n_parts = -(-len(refs) // max_partition_size)
            sibling_counter += 1
            for sub in range(n_parts):
                yield DataPartition(
                    pid=pid,
                    tuple_refs=tuple(refs[sub::n_parts]),
                    branch_id=part.branch_id,
                    key_group=key,
                    sibling_group=sibling_counter,
                )
                pid += 1


def partition_relation(
    relation: Relation,
    partitioners: list[Partitioner],
    max_partition_size: int = 512,
) -> list[DataPartition]:
    """Group tuples by each partitioner's key; oversize groups split
    round-robin into sibling sub-partitions flagged for cross pulls."""
    return list(iter_partitions(relation, partitioners, max_partition_size))


def sibling_pull_pairs(partitions: list[DataPartition]) -> list[tuple[int, int]]:
    """Pid pairs that need a cross-partition pull: all unordered pairs
    of sub-partitions split from one oversize key group."""
    groups: dict[int, list[int]] = {}
    for p in partitions:
        if p.sibling_group is not None:
            groups.setdefault(p.sibling_group, []).append(p.pid)
    out = []
    for pids in groups.values():
        pids.sort()
        for i in range(len(pids)):
            for j in range(i + 1, len(pids)):
                out.append((pids[i], pids[j]))
    return out
