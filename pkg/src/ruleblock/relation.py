"""Schema-typed relations, tuples, partitions, and CSV ingestion.

A relation is an immutable list of rows over a typed schema.  Attribute
kinds ({categorical, numeric, short_text, long_text}) are inferred at
load time and feed the cost model later; they never change evaluation
semantics on their own.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

from ruleblock.errors import DataParseError, SchemaError

DEFAULT_MISSING_MARKERS = ("", "-", "NULL")

# Tokens treated as numeric decoration, stripped before a numeric parse.
_CURRENCY_RE = re.compile(r"^[\s$€£¥]+|[\s]+$")
_THOUSANDS_RE = re.compile(r",(?=\d{3}(\D|$))")

# Median whitespace-token count above which a column is typed long_text.
LONG_TEXT_TOKEN_THRESHOLD = 8


class Kind(str, Enum):
    CATEGORICAL = "categorical"
    NUMERIC = "numeric"
    SHORT_TEXT = "short_text"
    LONG_TEXT = "long_text"


class Missing:
    """Singleton marker for an absent cell; distinct from empty text."""

    _instance: Optional["Missing"] = None

    def __new__(cls) -> "Missing":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "Missing"

    def __bool__(self) -> bool:
        return False


MISSING = Missing()

#: A cell value: the missing marker, a text, or a finite float.
AttrValue = Union[Missing, str, float]


def is_missing(value: AttrValue) -> bool:
    return value is MISSING or isinstance(value, Missing)


def parse_number(text: str) -> Optional[float]:
    """Parse ``text`` as a finite decimal, tolerating currency glyphs
    and thousands separators. Returns None when it does not parse."""
    cleaned = _CURRENCY_RE.sub("", text.strip())
    cleaned = _THOUSANDS_RE.sub("", cleaned)
    if not cleaned:
        return None
    try:
        value = float(cleaned)
    except ValueError:
        return None
    if value != value or value in (float("inf"), float("-inf")):
        return None
    return value


@dataclass(frozen=True)
class Schema:
    """Ordered attribute list with kinds and an optional entity-id column."""

    attributes: tuple[tuple[str, Kind], ...]
    eid_attr: Optional[str] = None

    def __post_init__(self) -> None:
        names = [name for name, _ in self.attributes]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError(f"duplicate attribute names: {dupes}")
        if self.eid_attr is not None and self.eid_attr not in names:
            raise SchemaError(f"eid attribute {self.eid_attr!r} not in schema")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.attributes)

    def index_of(self, attr: str) -> int:
        try:
            return self.names.index(attr)
        except ValueError:
            raise SchemaError(f"unknown attribute {attr!r}") from None

    def kind_of(self, attr: str) -> Kind:
        return self.attributes[self.index_of(attr)][1]

    @property
    def arity(self) -> int:
        return len(self.attributes)


@dataclass(frozen=True)
class TupleRecord:
    """One row: a dense 0-based id, an optional entity label, and one
    value per schema attribute."""

    tid: int
    eid: Optional[str]
    values: tuple[AttrValue, ...]


@dataclass(frozen=True)
class Relation:
    schema: Schema
    tuples: tuple[TupleRecord, ...]

    def __post_init__(self) -> None:
        for expected, rec in enumerate(self.tuples):
            if rec.tid != expected:
                raise SchemaError(f"tuple ids must be dense 0..n-1, found {rec.tid} at {expected}")
            if len(rec.values) != self.schema.arity:
                raise SchemaError(f"tuple {rec.tid} has {len(rec.values)} values, schema arity is {self.schema.arity}")

    def __len__(self) -> int:
        return len(self.tuples)

    def column(self, attr: str) -> list[AttrValue]:
        idx = self.schema.index_of(attr)
        return [rec.values[idx] for rec in self.tuples]


@dataclass
class DataPartition:
    """A slice of a relation identified by tuple ids.

    ``branch_id`` names the plan root edge whose hash function produced
    the partition; round-robin splits leave it None.
    """

    pid: int
    tuple_refs: tuple[int, ...]
    branch_id: Optional[int] = None
    key_group: Optional[str] = None
    sibling_group: Optional[int] = None

    def __post_init__(self) -> None:
        if not self.tuple_refs:
            raise SchemaError(f"partition {self.pid} is empty")
        if len(set(self.tuple_refs)) != len(self.tuple_refs):
            raise SchemaError(f"partition {self.pid} has duplicate tuple refs")

    def __len__(self) -> int:
        return len(self.tuple_refs)


def _infer_kind(cells: Sequence[Optional[str]]) -> Kind:
    """Column typing: numeric if every non-missing cell parses as a
    number; long_text if the median token count exceeds the threshold;
    short_text otherwise. Categorical is opt-in via schema hints."""
    present = [c for c in cells if c is not None]
    if present and all(parse_number(c) is not None for c in present):
        return Kind.NUMERIC
    token_counts = sorted(len(c.split()) for c in present)
    if token_counts:
        mid = len(token_counts) // 2
        if len(token_counts) % 2:
            median = float(token_counts[mid])
        else:
            median = (token_counts[mid - 1] + token_counts[mid]) / 2.0
        if median > LONG_TEXT_TOKEN_THRESHOLD:
            return Kind.LONG_TEXT
    return Kind.SHORT_TEXT


def load_relation(
    path: Union[str, Path],
    fmt: str = "csv_with_header",
    schema_hints: Optional[Mapping[str, Union[Kind, str]]] = None,
    missing_markers: Iterable[str] = DEFAULT_MISSING_MARKERS,
    eid_attr: Optional[str] = "eid",
) -> Relation:
    """Load a header-ed CSV file into a relation.

    Cells equal to any missing marker become the missing value.  Numeric
    columns are parsed to decimals; everything else stays text.  The
    ``eid_attr`` column, when present in the header, is lifted out as
    the entity label of each row (it remains an ordinary attribute too).
    """
    if fmt != "csv_with_header":
        raise DataParseError(f"unsupported format {fmt!r}")
    path = Path(path)
    if not path.exists():
        raise DataParseError(f"no such file: {path}")
    markers = set(missing_markers)
    hints = dict(schema_hints or {})

    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataParseError(f"{path}: empty file, header row required") from None
        if len(set(header)) != len(header):
            dupes = sorted({h for h in header if header.count(h) > 1})
            raise SchemaError(f"{path}: duplicate header names {dupes}")
        raw_rows: list[list[str]] = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataParseError(f"{path}: line {lineno}: expected {len(header)} fields, found {len(row)}")
            raw_rows.append(row)

    # Missing-marker substitution before type inference.
    cells: list[list[Optional[str]]] = [[None if c in markers else c for c in row] for row in raw_rows]

    kinds: list[Kind] = []
    for col, name in enumerate(header):
        if name in hints:
            kinds.append(Kind(hints[name]))
        else:
            kinds.append(_infer_kind([row[col] for row in cells]))

    schema = Schema(
        attributes=tuple(zip(header, kinds)),
        eid_attr=eid_attr if eid_attr in header else None,
    )
    eid_col = header.index(eid_attr) if eid_attr in header else None

    records = []
    for tid, row in enumerate(cells):
        values: list[AttrValue] = []
        for kind, cell in zip(kinds, row):
            if cell is None:
                values.append(MISSING)
            elif kind is Kind.NUMERIC:
                number = parse_number(cell)
                if number is None:
                    raise DataParseError(f"{path}: row {tid}: non-numeric cell {cell!r} in numeric column")
                values.append(number)
            else:
                values.append(cell)
        eid = None
        if eid_col is not None and cells[tid][eid_col] is not None:
            eid = cells[tid][eid_col]
        records.append(TupleRecord(tid=tid, eid=eid, values=tuple(values)))

    return Relation(schema=schema, tuples=tuple(records))


def save_relation(relation: Relation, path: Union[str, Path], missing_marker: str = "-") -> None:
    """Write a relation back to CSV; the inverse of :func:`load_relation`
    up to numeric formatting."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(relation.schema.names)
        for rec in relation.tuples:
            row = []
            for value in rec.values:
                if is_missing(value):
                    row.append(missing_marker)
                elif isinstance(value, float):
                    row.append(repr(value) if value != int(value) else str(int(value)))
                else:
                    row.append(value)
            writer.writerow(row)


def split_fixed(relation: Relation, m: int) -> list[DataPartition]:
    """Round-robin fallback splitter: m partitions whose sizes differ by
    at most one and whose refs cover every tuple exactly once."""
    if m < 1:
        raise SchemaError(f"partition count must be >= 1, got {m}")
    if len(relation) == 0:
        raise SchemaError("cannot split an empty relation")
    n = len(relation)
    base, extra = divmod(n, m)
    partitions = []
    start = 0
    pid = 0
    for i in range(m):
        size = base + (1 if i < extra else 0)
        if size == 0:
            continue
        refs = tuple(range(start, start + size))
        partitions.append(DataPartition(pid=pid, tuple_refs=refs))
        start += size
        pid += 1
    return partitions
