"""Comparison measures: exact equality and thresholded similarities.

All similarity scorers return a similarity in [0, 1] (higher = more
similar); a similarity predicate holds when the score reaches its
threshold.  Any missing operand makes a predicate false: blocking must
not manufacture matches from absent data.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ruleblock import _kernels
from ruleblock.errors import ConfigError
from ruleblock.relation import AttrValue, Kind, Schema, TupleRecord, is_missing, parse_number
from ruleblock.rules import Predicate

_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def fold_text(text: str) -> str:
    return text.strip().casefold()


def tokenize(text: str, fold: bool = True) -> list[str]:
    """Whitespace tokens after case folding and punctuation stripping."""
    if fold:
        text = text.casefold()
    text = text.translate(_PUNCT_TABLE)
    return text.split()


def codepoints(text: str) -> np.ndarray:
    return np.frombuffer(text.encode("utf-32-le"), dtype=np.uint32)


def levenshtein(a: str, b: str) -> int:
    return int(_kernels.levenshtein_u32(codepoints(a), codepoints(b)))


def edit_score(a: str, b: str, fold: bool = True) -> float:
    """1 - edit_distance / max(length); 1.0 when both strings are empty."""
    if fold:
        a, b = fold_text(a), fold_text(b)
    longest = max(len(a), len(b))
    if longest == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / longest


def jaccard_score(a: str, b: str, fold: bool = True) -> float:
    """Token-set Jaccard similarity; 0.0 when both token sets are empty."""
    ta = set(tokenize(a, fold=fold))
    tb = set(tokenize(b, fold=fold))
    if not ta and not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def exact_token_score(a: str, b: str, fold: bool = True) -> float:
    """1.0 when the two token sets are identical and non-empty, else 0.0."""
    ta = set(tokenize(a, fold=fold))
    tb = set(tokenize(b, fold=fold))
    if not ta and not tb:
        return 0.0
    return 1.0 if ta == tb else 0.0


@dataclass(frozen=True)
class Measure:
    measure_id: str
    scorer: Callable[[str, str], float]
    symmetric: bool = True
    fold: bool = True


@dataclass
class MeasureRegistry:
    """Named similarity measures usable from rule documents."""

    entries: dict[str, Measure] = field(default_factory=dict)

    def register(self, measure: Measure) -> None:
        self.entries[measure.measure_id] = measure

    def get(self, measure_id: str) -> Measure:
        try:
            return self.entries[measure_id]
        except KeyError:
            raise ConfigError(f"unregistered measure {measure_id!r}") from None

    def score(self, measure_id: str, a: str, b: str) -> float:
        m = self.get(measure_id)
        return m.scorer(a, b, fold=m.fold)  # type: ignore[call-arg]

    def __contains__(self, measure_id: str) -> bool:
        return measure_id in self.entries


def default_registry() -> MeasureRegistry:
    reg = MeasureRegistry()
    reg.register(Measure("edit", edit_score, symmetric=True))
    reg.register(Measure("jaccard", jaccard_score, symmetric=True))
    reg.register(Measure("exact_token", exact_token_score, symmetric=True))
    return reg


def value_text(value: AttrValue) -> str:
    """Canonical text form of a cell for similarity scoring; integral
    floats render without the trailing '.0'."""
    if isinstance(value, float):
        return repr(value) if value != int(value) else str(int(value))
    return str(value)


def eval_equality(a: AttrValue, b: AttrValue, numeric_kind: bool = False) -> bool:
    """Equality on compatible values.

    False if either side is missing.  Numeric kinds compare by parsed
    decimal value; text compares byte-exact after trimming surrounding
    whitespace.
    """
    if is_missing(a) or is_missing(b):
        return False
    if numeric_kind or (isinstance(a, float) and isinstance(b, float)):
        na = a if isinstance(a, float) else parse_number(str(a))
        nb = b if isinstance(b, float) else parse_number(str(b))
        if na is None or nb is None:
            return False
        return na == nb
    if isinstance(a, float) or isinstance(b, float):
        # Mixed typed columns: compare numerically when both sides parse.
        na = a if isinstance(a, float) else parse_number(str(a))
        nb = b if isinstance(b, float) else parse_number(str(b))
        if na is not None and nb is not None:
            return na == nb
        return False
    return str(a).strip() == str(b).strip()


def eval_predicate(
    p: Predicate,
    t: TupleRecord,
    s: TupleRecord,
    reg: MeasureRegistry,
    schema: Schema,
) -> bool:
    """Truth value of one predicate at a tuple pair.

    Missing operands yield False; similarity predicates hold when the
    measure's score reaches the threshold.
    """
    lhs = t.values[schema.index_of(p.lhs_attr)]
    if p.rhs_attr is not None:
        rhs: AttrValue = s.values[schema.index_of(p.rhs_attr)]
        rhs_numeric = schema.kind_of(p.rhs_attr) is Kind.NUMERIC
    else:
        rhs = p.const if p.const is not None else ""
        rhs_numeric = isinstance(p.const, (int, float))
    if is_missing(lhs) or is_missing(rhs):
        return False
    if p.comparator == "eq":
        lhs_numeric = schema.kind_of(p.lhs_attr) is Kind.NUMERIC
        numeric = lhs_numeric if p.rhs_attr is None else (lhs_numeric and rhs_numeric)
        if isinstance(rhs, (int, float)) and not isinstance(rhs, bool):
            rhs = float(rhs)
        return eval_equality(lhs, rhs, numeric_kind=numeric)
    measure = reg.get(p.measure or "")
    score = measure.scorer(value_text(lhs), value_text(rhs), fold=measure.fold)  # type: ignore[call-arg]
    return score >= (p.threshold or 0.0)
