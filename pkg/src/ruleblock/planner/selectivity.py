"""Satisfaction-probability estimates from hash-bucket evenness.

For a predicate comparing attribute values, hash every tuple's value
into k buckets with a family that sends similar values to the same
bucket (exact hashing for equality, minhash over token sets or character
3-grams for similarities).  If the bucket histogram is lopsided, many
pairs collide and the predicate is likely to be satisfied; if it is
even, the predicate discriminates well.  The score is the root mean
squared deviation from a uniform histogram, normalized by its
theoretical maximum (everything in one bucket) so it lands in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ruleblock.errors import ConfigError
from ruleblock.hashing import minhash_value, stable_hash64
from ruleblock.measures import fold_text, tokenize
from ruleblock.relation import AttrValue, Relation, is_missing
from ruleblock.rules import Predicate

_EMPTY_MARKER = "\x00missing"


@dataclass(frozen=True)
class SelectivityProfile:
    predicate: Predicate
    k: int
    bucket_counts: tuple[int, ...]
    raw_evenness: float
    sp: float
    warning: Optional[str] = None


def _canonical_text(value: AttrValue) -> str:
    if is_missing(value):
        return _EMPTY_MARKER
    if isinstance(value, float):
        return repr(value)
    return fold_text(str(value))


def _char_3grams(text: str) -> list[str]:
    if len(text) < 3:
        return [text] if text else []
    return [text[i : i + 3] for i in range(len(text) - 2)]


def _bucket_of(p: Predicate, value: AttrValue, k: int, seed: int) -> int:
    """LSH family per comparator: exact value hash for equality, token
    minhash for jaccard/exact_token, 3-gram minhash for edit."""
    text = _canonical_text(value)
    if p.comparator == "eq" or text == _EMPTY_MARKER:
        return stable_hash64(text, seed) % k
    if p.measure == "edit":
        items = _char_3grams(text)
    else:
        items = tokenize(text)
    ids = np.array([stable_hash64(t, seed) for t in items], dtype=np.uint64)
    return minhash_value(ids, seed + 1) % k


def estimate_selectivity(p: Predicate, relation: Relation, k: int = 64, rng_seed: int = 0) -> SelectivityProfile:
    """Bucket-evenness estimate of the probability that p is satisfied.

    Cross-attribute predicates hash the union of both columns' values
    into the same buckets.  An entirely missing attribute gets sp = 0
    with a warning: the predicate can never be satisfied.
    """
    if k < 2:
        raise ConfigError(f"bucket count must be >= 2, got {k}")
    values = list(relation.column(p.lhs_attr))
    if p.is_cross_attr:
        values += list(relation.column(p.rhs_attr))  # type: ignore[arg-type]
    n = len(values)
    if n == 0:
        raise ConfigError("cannot estimate selectivity on an empty relation")

    if all(is_missing(v) for v in values):
        return SelectivityProfile(
            predicate=p,
            k=k,
            bucket_counts=tuple([0] * k),
            raw_evenness=0.0,
            sp=0.0,
            warning=f"attribute {p.lhs_attr!r} is entirely missing; predicate can never hold",
        )

    counts = np.zeros(k, dtype=np.int64)
    for v in values:
        counts[_bucket_of(p, v, k, rng_seed)] += 1

    raw = float(np.sqrt(np.mean((counts - n / k) ** 2)))
    max_raw = n * np.sqrt(k - 1) / k
    sp = float(raw / max_raw) if max_raw > 0 else 0.0
    sp = min(max(sp, 0.0), 1.0)
    return SelectivityProfile(predicate=p, k=k, bucket_counts=tuple(int(c) for c in counts), raw_evenness=raw, sp=sp)


def estimate_selectivities(
    universe: list[Predicate], relation: Relation, k: int = 64, rng_seed: int = 0
) -> dict[Predicate, SelectivityProfile]:
    return {p: estimate_selectivity(p, relation, k=k, rng_seed=rng_seed) for p in universe}
