"""Column encodings for fast predicate evaluation.

The engine never re-parses cell values in its inner loops.  Each
attribute referenced by the plan is encoded once, relation-wide:

- equality codes: dictionary codes over canonical values (parsed
  decimals for numeric columns, trimmed text otherwise); missing = -1.
  Same-code comparison is then a single integer compare and vectorizes
  over a whole comparison range with numpy.
- token ids: sorted unique ids of folded, punctuation-stripped tokens
  per row (jaccard / exact-token measures).
- character arrays: folded codepoints per row (edit measure), stored as
  uint8 when the whole column is ASCII.

Encoding happens in the host before worker processes fork, so workers
share the arrays copy-on-write.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ruleblock import _kernels
from ruleblock.errors import ConfigError
from ruleblock.measures import MeasureRegistry, eval_predicate, fold_text, tokenize, value_text
from ruleblock.relation import Kind, Relation, is_missing
from ruleblock.rules import Predicate


def _canonical_key(value, numeric: bool):
    if is_missing(value):
        return None
    if numeric:
        return float(value) if isinstance(value, float) else value
    return str(value).strip()


@dataclass
class _Ragged:
    offsets: np.ndarray
    flat: np.ndarray

    def row(self, i: int) -> np.ndarray:
        return self.flat[self.offsets[i] : self.offsets[i + 1]]


def _ragged(rows: list[np.ndarray], dtype) -> _Ragged:
    offsets = np.zeros(len(rows) + 1, dtype=np.int64)
    for i, r in enumerate(rows):
        offsets[i + 1] = offsets[i] + len(r)
    flat = np.concatenate(rows) if rows else np.empty(0, dtype=dtype)
    return _Ragged(offsets=offsets, flat=flat.astype(dtype, copy=False))


class EncodedRelation:
    """Lazy per-attribute encodings over one relation."""

    def __init__(self, relation: Relation):
        self.relation = relation
        self.schema = relation.schema
        self._eq_codes: dict[str, np.ndarray] = {}
        self._cross_codes: dict[tuple[str, str], Optional[tuple[np.ndarray, np.ndarray]]] = {}
        self._missing: dict[str, np.ndarray] = {}
        self._tokens: dict[str, _Ragged] = {}
        self._chars: dict[str, _Ragged] = {}
        self._const_masks: dict[tuple[str, object], np.ndarray] = {}

    def missing_mask(self, attr: str) -> np.ndarray:
        if attr not in self._missing:
            col = self.relation.column(attr)
            self._missing[attr] = np.array([is_missing(v) for v in col], dtype=bool)
        return self._missing[attr]

    def eq_codes(self, attr: str) -> np.ndarray:
        if attr not in self._eq_codes:
            numeric = self.schema.kind_of(attr) is Kind.NUMERIC
            mapping: dict = {}
            codes = np.empty(len(self.relation), dtype=np.int64)
            for i, v in enumerate(self.relation.column(attr)):
                key = _canonical_key(v, numeric)
                if key is None:
                    codes[i] = -1
                else:
                    codes[i] = mapping.setdefault(key, len(mapping))
            self._eq_codes[attr] = codes
        return self._eq_codes[attr]

    def cross_eq_codes(self, lhs: str, rhs: str) -> Optional[tuple[np.ndarray, np.ndarray]]:
        """Shared dictionary codes for t.lhs = s.rhs across two columns;
        None when the columns' kinds don't admit a shared key space."""
        key = (lhs, rhs)
        if key not in self._cross_codes:
            lhs_num = self.schema.kind_of(lhs) is Kind.NUMERIC
            rhs_num = self.schema.kind_of(rhs) is Kind.NUMERIC
            if lhs_num != rhs_num:
                self._cross_codes[key] = None
            else:
                mapping: dict = {}

                def encode(attr: str) -> np.ndarray:
                    out = np.empty(len(self.relation), dtype=np.int64)
                    for i, v in enumerate(self.relation.column(attr)):
                        k = _canonical_key(v, lhs_num)
                        out[i] = -1 if k is None else mapping.setdefault(k, len(mapping))
                    return out

                self._cross_codes[key] = (encode(lhs), encode(rhs))
        return self._cross_codes[key]

    def const_mask(self, attr: str, const) -> np.ndarray:
        key = (attr, const)
        if key not in self._const_masks:
            from ruleblock.measures import eval_equality

            numeric = self.schema.kind_of(attr) is Kind.NUMERIC
            rhs = float(const) if isinstance(const, (int, float)) and not isinstance(const, bool) else const
            col = self.relation.column(attr)
            self._const_masks[key] = np.array(
                [not is_missing(v) and eval_equality(v, rhs, numeric_kind=numeric) for v in col], dtype=bool
            )
        return self._const_masks[key]

    def tokens(self, attr: str) -> _Ragged:
        if attr not in self._tokens:
            interning: dict[str, int] = {}
            rows: list[np.ndarray] = []
            for v in self.relation.column(attr):
                if is_missing(v):
                    rows.append(np.empty(0, dtype=np.int64))
                    continue
                toks = tokenize(value_text(v))
                ids = sorted({interning.setdefault(t, len(interning)) for t in toks})
                rows.append(np.array(ids, dtype=np.int64))
            self._tokens[attr] = _ragged(rows, np.int64)
        return self._tokens[attr]

    def chars(self, attr: str) -> _Ragged:
        if attr not in self._chars:
            texts = []
            for v in self.relation.column(attr):
                if is_missing(v):
                    texts.append("")
                else:
                    texts.append(fold_text(value_text(v)))
            if all(t.isascii() for t in texts):
                rows = [np.frombuffer(t.encode("ascii"), dtype=np.uint8) for t in texts]
                self._chars[attr] = _ragged(rows, np.uint8)
            else:
                rows = [np.frombuffer(t.encode("utf-32-le"), dtype=np.uint32) for t in texts]
                self._chars[attr] = _ragged(rows, np.uint32)
        return self._chars[attr]

    def prepare(self, predicates: list[Predicate]) -> None:
        """Force every encoding the given predicates will touch (call
        before forking workers so children inherit the arrays)."""
        for p in predicates:
            self.missing_mask(p.lhs_attr)
            if p.rhs_attr is not None:
                self.missing_mask(p.rhs_attr)
            if p.comparator == "eq":
                if p.rhs_attr is None:
                    self.const_mask(p.lhs_attr, p.const)
                elif p.is_cross_attr:
                    self.cross_eq_codes(p.lhs_attr, p.rhs_attr)
                else:
                    self.eq_codes(p.lhs_attr)
            elif p.measure == "edit":
                self.chars(p.lhs_attr)
                self.chars(p.rhs_attr or p.lhs_attr)
            else:
                self.tokens(p.lhs_attr)
                self.tokens(p.rhs_attr or p.lhs_attr)


@dataclass
class SlotEval:
    """Callable pair/vector evaluators for one predicate slot.

    ``pair(i, j)`` takes relation tids.  ``vector(i, js)`` evaluates the
    slot for one lane tuple against an array of tids at once; it is only
    available for code-comparable equality slots.
    """

    pair: Callable[[int, int], bool]
    vector: Optional[Callable[[int, np.ndarray], np.ndarray]] = None


def _eq_code_slot(ca: np.ndarray, cb: np.ndarray) -> SlotEval:
    # A lane value that occurs nowhere on the probe side can never
    # match, so its whole range scan is skipped.  For same-column
    # comparisons the tuple itself accounts for one occurrence.
    n_codes = int(max(ca.max(initial=-1), cb.max(initial=-1))) + 1
    counts = np.bincount(cb[cb >= 0], minlength=n_codes)
    matchable = counts >= (2 if ca is cb else 1)

    def pair(i: int, j: int) -> bool:
        x = ca[i]
        return x >= 0 and x == cb[j]

    def vector(i: int, js: np.ndarray) -> np.ndarray:
        x = ca[i]
        if x < 0 or not matchable[x]:
            return np.zeros(len(js), dtype=bool)
        return cb[js] == x

    return SlotEval(pair=pair, vector=vector)


def _eq_const_slot(mask: np.ndarray) -> SlotEval:
    def pair(i: int, j: int) -> bool:
        return bool(mask[i])

    def vector(i: int, js: np.ndarray) -> np.ndarray:
        return np.full(len(js), bool(mask[i]), dtype=bool)

    return SlotEval(pair=pair, vector=vector)


def _edit_slot(a: _Ragged, b: _Ragged, miss_a: np.ndarray, miss_b: np.ndarray, delta: float) -> SlotEval:
    lev = _kernels.levenshtein_u32
    a_off, a_flat = a.offsets, a.flat
    b_off, b_flat = b.offsets, b.flat

    def pair(i: int, j: int) -> bool:
        if miss_a[i] or miss_b[j]:
            return False
        xa = a_flat[a_off[i] : a_off[i + 1]]
        xb = b_flat[b_off[j] : b_off[j + 1]]
        la, lb = len(xa), len(xb)
        longest = la if la >= lb else lb
        if longest == 0:
            return True  # two genuinely empty strings are identical
        if longest - min(la, lb) > (1.0 - delta) * longest:
            return False  # length gap alone already breaks the threshold
        return 1.0 - lev(xa, xb) / longest >= delta

    return SlotEval(pair=pair)


def _jaccard_slot(a: _Ragged, b: _Ragged, miss_a: np.ndarray, miss_b: np.ndarray, delta: float) -> SlotEval:
    jac = _kernels.jaccard_sorted
    a_off, a_flat = a.offsets, a.flat
    b_off, b_flat = b.offsets, b.flat

    def pair(i: int, j: int) -> bool:
        if miss_a[i] or miss_b[j]:
            return False
        xa = a_flat[a_off[i] : a_off[i + 1]]
        xb = b_flat[b_off[j] : b_off[j + 1]]
        la, lb = len(xa), len(xb)
        if la == 0 and lb == 0:
            return False  # blank fields never match
        small, big = (la, lb) if la <= lb else (lb, la)
        if small < delta * big:
            return False  # |A∩B|/|A∪B| <= min/max
        return jac(xa, xb) >= delta

    return SlotEval(pair=pair)


def _exact_token_slot(a: _Ragged, b: _Ragged, miss_a: np.ndarray, miss_b: np.ndarray) -> SlotEval:
    eq = _kernels.sorted_equal
    a_off, a_flat = a.offsets, a.flat
    b_off, b_flat = b.offsets, b.flat

    def pair(i: int, j: int) -> bool:
        if miss_a[i] or miss_b[j]:
            return False
        xa = a_flat[a_off[i] : a_off[i + 1]]
        xb = b_flat[b_off[j] : b_off[j + 1]]
        if len(xa) == 0 and len(xb) == 0:
            return False
        return bool(eq(xa, xb))

    return SlotEval(pair=pair)


def _fallback_slot(p: Predicate, relation: Relation, reg: MeasureRegistry) -> SlotEval:
    tuples = relation.tuples
    schema = relation.schema

    def pair(i: int, j: int) -> bool:
        return eval_predicate(p, tuples[i], tuples[j], reg, schema)

    return SlotEval(pair=pair)


def compile_slot(p: Predicate, enc: EncodedRelation, reg: MeasureRegistry) -> SlotEval:
    relation = enc.relation
    if p.comparator == "eq":
        if p.rhs_attr is None:
            return _eq_const_slot(enc.const_mask(p.lhs_attr, p.const))
        if p.is_cross_attr:
            codes = enc.cross_eq_codes(p.lhs_attr, p.rhs_attr)
            if codes is None:
                return _fallback_slot(p, relation, reg)
            return _eq_code_slot(codes[0], codes[1])
        codes_arr = enc.eq_codes(p.lhs_attr)
        return _eq_code_slot(codes_arr, codes_arr)

    rhs = p.rhs_attr or p.lhs_attr
    miss_a = enc.missing_mask(p.lhs_attr)
    miss_b = enc.missing_mask(rhs)
    if p.measure == "edit":
        a, b = enc.chars(p.lhs_attr), enc.chars(rhs)
        if a.flat.dtype != b.flat.dtype:
            return _fallback_slot(p, relation, reg)
        return _edit_slot(a, b, miss_a, miss_b, float(p.threshold or 0.0))
    if p.measure == "jaccard":
        if p.is_cross_attr:
            # Token ids are interned per attribute; cross-attribute
            # jaccard needs a shared vocabulary, handled in Python.
            return _fallback_slot(p, relation, reg)
        return _jaccard_slot(enc.tokens(p.lhs_attr), enc.tokens(rhs), miss_a, miss_b, float(p.threshold or 0.0))
    if p.measure == "exact_token":
        if p.is_cross_attr:
            return _fallback_slot(p, relation, reg)
        return _exact_token_slot(enc.tokens(p.lhs_attr), enc.tokens(rhs), miss_a, miss_b)
    if p.measure is None:
        raise ConfigError(f"similarity predicate without measure: {p.describe()}")
    return _fallback_slot(p, relation, reg)
