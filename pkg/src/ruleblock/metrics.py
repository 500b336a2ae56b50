"""Quality metrics against ground truth.

Precision and recall treat candidate pairs as unordered; the candidate
set size ratio (CSSR) relates the surviving pair count to the squared
universe size, so a smaller value means a more aggressive blocker.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Union

from ruleblock.engine import CandidateSet
from ruleblock.errors import DataParseError
from ruleblock.relation import Relation


def canonical_pair(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class GroundTruth:
    match_pairs: frozenset[tuple[int, int]]

    def __post_init__(self) -> None:
        for a, b in self.match_pairs:
            if a == b:
                raise DataParseError(f"ground truth contains a self-pair ({a}, {b})")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]]) -> "GroundTruth":
        return cls(match_pairs=frozenset(canonical_pair(a, b) for a, b in pairs))

    @classmethod
    def from_eids(cls, relation: Relation) -> "GroundTruth":
        """All same-entity pairs derived from the relation's eid labels."""
        groups: dict[str, list[int]] = {}
        for rec in relation.tuples:
            if rec.eid is not None:
                groups.setdefault(rec.eid, []).append(rec.tid)
        pairs = set()
        for tids in groups.values():
            for i in range(len(tids)):
                for j in range(i + 1, len(tids)):
                    pairs.add(canonical_pair(tids[i], tids[j]))
        return cls(match_pairs=frozenset(pairs))

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "GroundTruth":
        """Pair list CSV with a header and two id columns."""
        pairs = []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            next(reader, None)
            for lineno, row in enumerate(reader, start=2):
                if len(row) < 2:
                    raise DataParseError(f"{path}: line {lineno}: need two id columns")
                pairs.append((int(row[0]), int(row[1])))
        return cls.from_pairs(pairs)

    def __len__(self) -> int:
        return len(self.match_pairs)


@dataclass
class MetricsReport:
    precision: float
    recall: float
    f1: float
    cssr: float
    n_candidates: int
    n_truth: int
    wall_time_s: float = 0.0
    stage_timings: dict[str, float] = field(default_factory=dict)
    steal_counts: dict[int, int] = field(default_factory=dict)

    def describe(self) -> str:
        lines = [
            f"precision {self.precision:.4f}",
            f"recall    {self.recall:.4f}",
            f"f1        {self.f1:.4f}",
            f"cssr      {self.cssr:.6g} ({self.cssr * 10_000:.3f} per 10k)",
            f"pairs     {self.n_candidates} candidates vs {self.n_truth} truth",
        ]
        if self.wall_time_s:
            lines.append(f"wall_s    {self.wall_time_s:.3f}")
        for stage, secs in self.stage_timings.items():
            lines.append(f"  {stage:<12} {secs:.3f}s")
        return "\n".join(lines)


def compute_metrics(
    ca: Union[CandidateSet, Iterable[tuple[int, int]]],
    gt: GroundTruth,
    universe_size: int,
    wall_time_s: float = 0.0,
    stage_timings: Optional[dict[str, float]] = None,
) -> MetricsReport:
    """Precision/recall/F1 over unordered pairs plus CSSR.

    Empty candidates score precision 1 against an empty truth set and 0
    otherwise; an empty truth set makes recall vacuously 1.
    """
    if isinstance(ca, CandidateSet):
        cand = {canonical_pair(t, s) for t, s in ca.pair_set()}
    else:
        cand = {canonical_pair(a, b) for a, b in ca}
    truth = gt.match_pairs
    hit = len(cand & truth)
    if cand:
        precision = hit / len(cand)
    else:
        precision = 1.0 if not truth else 0.0
    recall = hit / len(truth) if truth else 1.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    cssr = len(cand) / (universe_size * universe_size) if universe_size else 0.0
    return MetricsReport(
        precision=precision,
        recall=recall,
        f1=f1,
        cssr=cssr,
        n_candidates=len(cand),
        n_truth=len(truth),
        wall_time_s=wall_time_s,
        stage_timings=dict(stage_timings or {}),
    )
