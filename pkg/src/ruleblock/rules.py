"""Predicates, matching rules, and rule-set parsing.

A rule is a conjunction of predicates over two tuple variables ``t`` and
``s`` with the fixed consequence that the two tuples name the same
entity.  A pair is a blocking candidate when at least one rule's whole
precondition holds, so evaluating a rule set is a disjunction of
conjunctions.

Rule documents are JSON::

    [{"id": "r1",
      "when": [{"t_attr": "color", "op": "eq", "s_attr": "color"},
               {"t_attr": "pname", "op": "sim", "s_attr": "pname",
                "measure": "edit", "threshold": 0.55},
               {"t_attr": "kind", "op": "eq", "const": "laptop"}]}]

``op`` is ``eq`` or ``sim``; a predicate compares ``t_attr`` against
either another attribute (``s_attr``) or a constant (``const``).  ``sim``
entries carry a ``measure`` name registered in
:mod:`ruleblock.measures` and a ``threshold`` in (0, 1].
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

from ruleblock.errors import RuleParseError, ValidationError
from ruleblock.relation import Kind, Schema

BUILTIN_MEASURES = ("edit", "jaccard", "exact_token")


@dataclass(frozen=True)
class Predicate:
    """One comparison: t.lhs_attr (=|~) (s.rhs_attr | constant).

    ``comparator`` is "eq" or "sim"; similarity predicates carry the
    measure id and the threshold.  Two predicates are the same slot only
    if all five fields coincide; the same measure at two thresholds has
    different selectivity and must not share evaluation.
    """

    lhs_attr: str
    comparator: str  # "eq" | "sim"
    rhs_attr: Optional[str] = None
    const: Optional[Union[str, float]] = None
    measure: Optional[str] = None
    threshold: Optional[float] = None

    def __post_init__(self) -> None:
        if self.comparator not in ("eq", "sim"):
            raise RuleParseError(f"unknown comparator {self.comparator!r}")
        if (self.rhs_attr is None) == (self.const is None):
            raise RuleParseError("predicate needs exactly one of s_attr or const")
        if self.comparator == "sim":
            if self.measure is None:
                raise RuleParseError("sim predicate needs a measure")
            if self.threshold is None:
                raise RuleParseError("sim predicate needs a threshold")
            if not (0.0 < self.threshold <= 1.0):
                raise RuleParseError(f"threshold out of range (0, 1]: {self.threshold}")
            if self.const is not None:
                raise RuleParseError("sim predicates compare attributes, not constants")
        elif self.measure is not None or self.threshold is not None:
            raise RuleParseError("eq predicate must not carry measure/threshold")

    @property
    def is_cross_attr(self) -> bool:
        return self.rhs_attr is not None and self.rhs_attr != self.lhs_attr

    def describe(self) -> str:
        rhs = f"s.{self.rhs_attr}" if self.rhs_attr is not None else repr(self.const)
        if self.comparator == "eq":
            return f"t.{self.lhs_attr} = {rhs}"
        return f"t.{self.lhs_attr} ~{self.measure}({self.threshold:g}) {rhs}"


@dataclass(frozen=True)
class MDRule:
    """A conjunctive precondition with the implied same-entity consequence."""

    rule_id: str
    precondition: tuple[Predicate, ...]

    def __post_init__(self) -> None:
        if not self.precondition:
            raise RuleParseError(f"rule {self.rule_id!r}: empty precondition")
        if len(set(self.precondition)) != len(self.precondition):
            raise RuleParseError(f"rule {self.rule_id!r}: duplicate predicate in precondition")

    def __len__(self) -> int:
        return len(self.precondition)


@dataclass(frozen=True)
class RuleSet:
    rules: tuple[MDRule, ...]

    def __post_init__(self) -> None:
        ids = [r.rule_id for r in self.rules]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise RuleParseError(f"duplicate rule ids: {dupes}")

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def by_id(self, rule_id: str) -> MDRule:
        for rule in self.rules:
            if rule.rule_id == rule_id:
                return rule
        raise KeyError(rule_id)


def _parse_predicate(entry: dict, where: str) -> Predicate:
    if not isinstance(entry, dict):
        raise RuleParseError(f"{where}: predicate entry must be an object")
    unknown = set(entry) - {"t_attr", "op", "s_attr", "const", "measure", "threshold"}
    if unknown:
        raise RuleParseError(f"{where}: unknown predicate keys {sorted(unknown)}")
    try:
        t_attr = entry["t_attr"]
        op = entry["op"]
    except KeyError as exc:
        raise RuleParseError(f"{where}: predicate needs {exc.args[0]!r}") from None
    if op == "sim":
        measure = entry.get("measure")
        if measure not in BUILTIN_MEASURES:
            raise RuleParseError(f"{where}: unknown measure {measure!r}")
    return Predicate(
        lhs_attr=t_attr,
        comparator=op,
        rhs_attr=entry.get("s_attr"),
        const=entry.get("const"),
        measure=entry.get("measure"),
        threshold=entry.get("threshold"),
    )


def parse_ruleset(text: str) -> RuleSet:
    """Parse a JSON rule document, preserving written predicate order."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise RuleParseError(f"rule document is not valid JSON: {exc}") from None
    if not isinstance(doc, list):
        raise RuleParseError("rule document must be a top-level list of rules")
    rules = []
    for i, item in enumerate(doc):
        if not isinstance(item, dict) or "id" not in item or "when" not in item:
            raise RuleParseError(f"rule #{i}: each rule needs 'id' and 'when'")
        where = f"rule {item['id']!r}"
        preds = tuple(_parse_predicate(p, where) for p in item["when"])
        if not preds:
            raise RuleParseError(f"{where}: empty precondition")
        rules.append(MDRule(rule_id=str(item["id"]), precondition=preds))
    return RuleSet(rules=tuple(rules))


def serialize_ruleset(rs: RuleSet) -> str:
    doc = []
    for rule in rs.rules:
        entries = []
        for p in rule.precondition:
            entry: dict = {"t_attr": p.lhs_attr, "op": p.comparator}
            if p.rhs_attr is not None:
                entry["s_attr"] = p.rhs_attr
            else:
                entry["const"] = p.const
            if p.comparator == "sim":
                entry["measure"] = p.measure
                entry["threshold"] = p.threshold
            entries.append(entry)
        doc.append({"id": rule.rule_id, "when": entries})
    return json.dumps(doc, indent=2)


def validate_ruleset(rs: RuleSet, schema: Schema) -> list[str]:
    """Check a rule set against a schema.

    Unknown attributes are hard errors (raised together, naming every
    offender); similarity over numeric columns only warns.
    """
    errors = []
    warnings = []
    names = set(schema.names)
    for rule in rs.rules:
        for p in rule.precondition:
            for attr in filter(None, (p.lhs_attr, p.rhs_attr)):
                if attr not in names:
                    errors.append(f"rule {rule.rule_id!r}: unknown attribute {attr!r}")
            if p.comparator == "sim":
                for attr in dict.fromkeys(filter(None, (p.lhs_attr, p.rhs_attr))):
                    if attr in names and schema.kind_of(attr) is Kind.NUMERIC:
                        warnings.append(
                            f"rule {rule.rule_id!r}: similarity measure {p.measure!r} over numeric column {attr!r}"
                        )
    if errors:
        raise ValidationError("; ".join(errors))
    return warnings


def predicate_universe(rs: RuleSet) -> list[Predicate]:
    """Distinct predicates across the rule set, in first-appearance order."""
    seen: dict[Predicate, None] = {}
    for rule in rs.rules:
        for p in rule.precondition:
            seen.setdefault(p, None)
    return list(seen)
