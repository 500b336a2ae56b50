"""Parallel evaluation of a compiled path over one data partition.

Execution model: the partition's tuples are cut into fixed-size
intervals; intervals are statically assigned to worker blocks through
sliding windows over the interval sequence.  Within a block, lane slots
each own one tuple at a time and compare it against a remaining range of
partition positions, claimed chunk by chunk.  Two balancing moves exist:
idle blocks claim whole unprocessed intervals through a shared status
table (inter-interval stealing), and when no interval is left they split
the remaining ranges of the busiest block's lanes at the midpoint
(intra-interval stealing).  Results go through a per-block two-half
buffer; a full half reserves a contiguous region of the shared sink with
one fetch-and-add and is copied out while the other half keeps filling.

Blocks are threads; every hot kernel (equality scans, similarity
scorers) runs with the GIL released, so blocks overlap on real cores.
The candidate *set* is deterministic for fixed inputs regardless of
interleaving; per-block statistics are not.
"""

from __future__ import annotations

import os
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ruleblock.encode import EncodedRelation, SlotEval, compile_slot
from ruleblock.errors import ConfigError
from ruleblock.measures import MeasureRegistry, default_registry, eval_predicate
from ruleblock.planner.plan import Checkpoint, ExecutionPath
from ruleblock.relation import DataPartition, Relation, Schema, TupleRecord

STEALING_MODES = ("off", "inter", "inter+intra")


@dataclass
class EngineConfig:
    n_t: int = 256
    n_w: int = 1024
    lanes_per_block: int = 32
    num_blocks: Optional[int] = None  # None: one block per available core
    symmetric_mode: bool = True
    stealing: str = "inter+intra"
    buffer_half_capacity: int = 4096
    chunk_size: int = 4096  # positions a lane claims per lock acquisition
    enumerate_witnesses: bool = False

    def __post_init__(self) -> None:
        if self.n_t < 1 or self.n_w < 1 or self.lanes_per_block < 1:
            raise ConfigError("n_t, n_w and lanes_per_block must all be >= 1")
        if self.stealing not in STEALING_MODES:
            raise ConfigError(f"stealing must be one of {STEALING_MODES}, got {self.stealing!r}")
        if self.buffer_half_capacity < 1 or self.chunk_size < 1:
            raise ConfigError("buffer_half_capacity and chunk_size must be >= 1")

    def resolved_blocks(self) -> int:
        return self.num_blocks if self.num_blocks else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Pair-level evaluation (the sequential reference path)


@dataclass
class PairBitmaps:
    """Per-pair reuse/value bits, one of each per predicate slot, plus a
    scorer-invocation counter for reuse auditing."""

    reuse: np.ndarray
    value: np.ndarray
    scorer_calls: np.ndarray

    @classmethod
    def for_path(cls, path: ExecutionPath) -> "PairBitmaps":
        n = path.n_slots
        return cls(
            reuse=np.zeros(n, dtype=bool),
            value=np.zeros(n, dtype=bool),
            scorer_calls=np.zeros(n, dtype=np.int64),
        )

    def reset(self) -> None:
        self.reuse[:] = False
        self.value[:] = False
        self.scorer_calls[:] = 0


def evaluate_pair(
    path: ExecutionPath,
    t: TupleRecord,
    s: TupleRecord,
    bitmaps: PairBitmaps,
    reg: MeasureRegistry,
    schema: Schema,
    all_witnesses: bool = False,
):
    """Interpret the instruction path for one tuple pair.

    Bit-mapped reuse guarantees each predicate slot is checked at most
    once per pair; a checkpoint returns its rule immediately (or is
    collected when ``all_witnesses`` is on, for diagnostics).
    """
    instructions = path.instructions
    table = path.predicate_table
    witnesses: list[str] = []
    ip = 0
    n = len(instructions)
    while ip < n:
        ins = instructions[ip]
        if isinstance(ins, Checkpoint):
            if not all_witnesses:
                return ins.rule_id
            witnesses.append(ins.rule_id)
            ip += 1
            continue
        slot = ins.slot
        if bitmaps.reuse[slot]:
            truth = bool(bitmaps.value[slot])
        else:
            truth = eval_predicate(table[slot], t, s, reg, schema)
            bitmaps.reuse[slot] = True
            bitmaps.value[slot] = truth
            bitmaps.scorer_calls[slot] += 1
        ip = ip + 1 if truth else ins.fail_jump
    if all_witnesses:
        return witnesses
    return None


# ---------------------------------------------------------------------------
# Interval table and lane ranges


class IntervalTable:
    """Claim ledger for intervals: static window assignment plus a
    shared status bitmap for stealing.  Claims are test-and-set under
    one lock, so each interval is processed exactly once."""

    def __init__(self, n_intervals: int, num_blocks: int, n_w: int, stealing: str):
        self.n_intervals = n_intervals
        self.num_blocks = num_blocks
        self.stealing = stealing
        self.claimed = np.zeros(n_intervals, dtype=bool)
        # Window w covers intervals [w*n_w, (w+1)*n_w); within a window
        # assignment round-robins over blocks.
        self.assigned: list[list[int]] = [[] for _ in range(num_blocks)]
        for iv in range(n_intervals):
            self.assigned[(iv % n_w) % num_blocks].append(iv)
        self._next = [0] * num_blocks
        self.lock = threading.Lock()
        self.claims: list[list[int]] = [[] for _ in range(num_blocks)]
        self.stolen_counts = [0] * num_blocks

    def remaining(self) -> int:
        return int((~self.claimed).sum())


def claim_interval(table: IntervalTable, block_id: int) -> Optional[int]:
    """Next interval for a block: its own assignment first, then (when
    inter-interval stealing is on) any unclaimed interval found by
    scanning the status bitmap."""
    with table.lock:
        assigned = table.assigned[block_id]
        while table._next[block_id] < len(assigned):
            iv = assigned[table._next[block_id]]
            table._next[block_id] += 1
            if not table.claimed[iv]:
                table.claimed[iv] = True
                table.claims[block_id].append(iv)
                return iv
        if table.stealing in ("inter", "inter+intra"):
            unclaimed = np.nonzero(~table.claimed)[0]
            if len(unclaimed):
                iv = int(unclaimed[0])
                table.claimed[iv] = True
                table.claims[block_id].append(iv)
                table.stolen_counts[block_id] += 1
                return iv
    return None


@dataclass
class LaneRange:
    """Remaining comparison range (inclusive) of one lane's tuple."""

    tuple_pos: int
    start: int
    end: int

    def remaining(self) -> int:
        return max(0, self.end - self.start + 1)


def split_range(victim: LaneRange) -> Optional[tuple[LaneRange, LaneRange]]:
    """Midpoint split: victim keeps [start, mid], thief takes
    [mid+1, end].  No split when fewer than two comparisons remain."""
    if victim.remaining() < 2:
        return None
    mid = (victim.start + victim.end) // 2
    kept = LaneRange(tuple_pos=victim.tuple_pos, start=victim.start, end=mid)
    stolen = LaneRange(tuple_pos=victim.tuple_pos, start=mid + 1, end=victim.end)
    return kept, stolen


# ---------------------------------------------------------------------------
# Result buffering


class CandidateSink:
    """Shared result sink: a fetch-and-add offset counter hands each
    flushed buffer half a contiguous region; segments are stitched back
    in offset order at the end."""

    def __init__(self):
        self._lock = threading.Lock()
        self._offset = 0
        self._segments: list[tuple[int, list[tuple[int, int, int]]]] = []

    def reserve(self, count: int) -> int:
        with self._lock:
            offset = self._offset
            self._offset += count
            return offset

    def accept(self, offset: int, rows: list[tuple[int, int, int]]) -> None:
        with self._lock:
            self._segments.append((offset, rows))

    def finalize(self) -> list[tuple[int, int, int]]:
        with self._lock:
            segments = sorted(self._segments, key=lambda seg: seg[0])
            out: list[tuple[int, int, int]] = []
            expected = 0
            for offset, rows in segments:
                if offset != expected:
                    raise ConfigError("result sink regions are not contiguous")
                out.extend(rows)
                expected = offset + len(rows)
            if expected != self._offset:
                raise ConfigError("result sink lost rows")
            return out


class BlockBuffer:
    """Two-half local buffer: lanes fill the active half; a full half is
    flushed to the sink while the other half keeps accepting."""

    def __init__(self, half_capacity: int):
        self.half_capacity = half_capacity
        self.halves: list[list[tuple[int, int, int]]] = [[], []]
        self.active = 0
        self.flushes = 0

    def add(self, row: tuple[int, int, int], sink: CandidateSink) -> None:
        half = self.halves[self.active]
        half.append(row)
        if len(half) >= self.half_capacity:
            flush_results(self, sink)

    def drain(self, sink: CandidateSink) -> None:
        if self.halves[self.active]:
            flush_results(self, sink)


def flush_results(local: BlockBuffer, sink: CandidateSink) -> None:
    """Reserve a contiguous global region for the active half, hand it
    off, and swap halves.  No-op when the active half is empty."""
    half = local.halves[local.active]
    if not half:
        return
    offset = sink.reserve(len(half))
    sink.accept(offset, half)
    local.halves[local.active] = []
    local.active = 1 - local.active
    local.flushes += 1


# ---------------------------------------------------------------------------
# Candidate set and statistics


@dataclass
class BlockStats:
    block_id: int
    intervals_processed: int = 0
    intervals_stolen: int = 0
    range_steals: int = 0
    comparisons: int = 0
    index_jumps: int = 0
    busy_s: float = 0.0
    slot_evals: Optional[np.ndarray] = None
    emitted: int = 0


@dataclass
class RunStats:
    blocks: list[BlockStats] = field(default_factory=list)
    wall_s: float = 0.0
    n_intervals: int = 0

    def total_comparisons(self) -> int:
        return sum(b.comparisons for b in self.blocks)

    def describe(self) -> str:
        lines = [f"wall_s={self.wall_s:.4f} intervals={self.n_intervals}"]
        for b in self.blocks:
            lines.append(
                f"block {b.block_id}: intervals={b.intervals_processed} (stolen {b.intervals_stolen}) "
                f"range_steals={b.range_steals} comparisons={b.comparisons} "
                f"jumps={b.index_jumps} busy_s={b.busy_s:.4f} emitted={b.emitted}"
            )
        return "\n".join(lines)


@dataclass
class CandidateSet:
    """Blocking output: surviving pairs with the rule that certified
    each, plus run statistics."""

    pairs: list[tuple[int, int, str]]
    stats: RunStats = field(default_factory=RunStats)

    def pair_set(self) -> set[tuple[int, int]]:
        return {(t, s) for t, s, _ in self.pairs}

    def sorted_pairs(self) -> list[tuple[int, int, str]]:
        return sorted(self.pairs)

    def __len__(self) -> int:
        return len(self.pairs)


# ---------------------------------------------------------------------------
# The block worker


class PathProgram:
    """Path compiled against one encoded relation: flat instruction
    arrays plus per-slot pair/vector evaluators."""

    def __init__(self, path: ExecutionPath, enc: EncodedRelation, reg: MeasureRegistry):
        self.path = path
        self.n_slots = path.n_slots
        self.is_checkpoint: list[bool] = []
        self.slot: list[int] = []
        self.fail: list[int] = []
        self.rule: list[Optional[str]] = []
        for ins in path.instructions:
            if isinstance(ins, Checkpoint):
                self.is_checkpoint.append(True)
                self.slot.append(-1)
                self.fail.append(-1)
                self.rule.append(ins.rule_id)
            else:
                self.is_checkpoint.append(False)
                self.slot.append(ins.slot)
                self.fail.append(ins.fail_jump)
                self.rule.append(None)
        self.rule_index = {rid: i for i, rid in enumerate(path.rule_ids)}
        self.slots: list[SlotEval] = [compile_slot(p, enc, reg) for p in path.predicate_table]
        self.root_slots = list(dict.fromkeys(path.root_slots))
        self.vector_root_slots = [s for s in self.root_slots if self.slots[s].vector is not None]
        self.all_roots_vectorized = len(self.vector_root_slots) == len(self.root_slots)


class _Block:
    def __init__(self, runner: "_PartitionRun", block_id: int):
        self.runner = runner
        self.block_id = block_id
        self.lock = threading.Lock()
        self.lanes: list[LaneRange] = []
        self.pending: deque[int] = deque()
        self.buffer = BlockBuffer(runner.cfg.buffer_half_capacity)
        self.stats = BlockStats(block_id=block_id, slot_evals=np.zeros(runner.program.n_slots, dtype=np.int64))
        self._last_interval: Optional[int] = None

    # -- work accounting ----------------------------------------------------

    def remaining_reach(self) -> int:
        with self.lock:
            return sum(lane.remaining() for lane in self.lanes)

    # -- main loop ----------------------------------------------------------

    def run(self) -> None:
        started = time.perf_counter()
        runner = self.runner
        while True:
            interval = claim_interval(runner.table, self.block_id)
            if interval is not None:
                if self._last_interval is not None and interval != self._last_interval + 1:
                    self.stats.index_jumps += 1
                self._last_interval = interval
                self._load_interval(interval)
                self._drain_lanes()
                self.stats.intervals_processed += 1
                continue
            if runner.cfg.stealing == "inter+intra" and self._steal_ranges():
                self._drain_lanes()
                continue
            break
        self.buffer.drain(runner.sink)
        self.stats.intervals_stolen = runner.table.stolen_counts[self.block_id]
        self.stats.busy_s = time.perf_counter() - started

    def _load_interval(self, interval: int) -> None:
        runner = self.runner
        lo = interval * runner.cfg.n_t
        hi = min(lo + runner.cfg.n_t, runner.n)
        with self.lock:
            self.pending = deque(range(lo, hi))
            self.lanes = []
            self._refill_locked()

    def _refill_locked(self) -> None:
        n = self.runner.n
        symmetric = self.runner.cfg.symmetric_mode
        limit = self.runner.cfg.lanes_per_block
        while self.pending and len(self.lanes) < limit:
            pos = self.pending.popleft()
            start = pos + 1 if symmetric else 0
            if start > n - 1:
                continue
            self.lanes.append(LaneRange(tuple_pos=pos, start=start, end=n - 1))

    def _drain_lanes(self) -> None:
        runner = self.runner
        chunk = runner.cfg.chunk_size
        cursor = 0
        while True:
            with self.lock:
                self.lanes = [l for l in self.lanes if l.remaining() > 0]
                if not self.lanes and self.pending:
                    self._refill_locked()
                if not self.lanes:
                    break
                cursor = cursor % len(self.lanes)
                lane = self.lanes[cursor]
                cursor += 1
                s = lane.start
                e = min(s + chunk - 1, lane.end)
                lane.start = e + 1
                pos = lane.tuple_pos
            self._evaluate_chunk(pos, s, e)

    def _steal_ranges(self) -> bool:
        runner = self.runner
        victims = [b for b in runner.blocks if b is not self]
        victims.sort(key=lambda b: -b.remaining_reach())
        for victim in victims:
            stolen: list[LaneRange] = []
            with victim.lock:
                for lane in victim.lanes:
                    pieces = split_range(lane)
                    if pieces is None:
                        continue
                    kept, taken = pieces
                    lane.start, lane.end = kept.start, kept.end
                    stolen.append(taken)
            if stolen:
                with self.lock:
                    self.lanes = stolen
                    self.pending = deque()
                self.stats.range_steals += 1
                return True
        return False

    # -- chunk evaluation ---------------------------------------------------

    def _evaluate_chunk(self, pos: int, s: int, e: int) -> None:
        runner = self.runner
        program = runner.program
        n_local = e - s + 1
        if n_local <= 0:
            return
        js_pos = runner.positions[s : e + 1]
        if not runner.cfg.symmetric_mode:
            js_pos = js_pos[js_pos != pos]
            if len(js_pos) == 0:
                return
        self.stats.comparisons += len(js_pos)
        tid_i = int(runner.refs[pos])
        tids_j = js_pos if runner.identity_refs else runner.refs[js_pos]

        seeds: list[tuple[int, np.ndarray]] = []
        for slot_idx in program.vector_root_slots:
            mask = program.slots[slot_idx].vector(tid_i, tids_j)  # type: ignore[misc]
            self.stats.slot_evals[slot_idx] += len(tids_j)
            seeds.append((slot_idx, mask))

        if program.all_roots_vectorized and seeds:
            any_mask = seeds[0][1]
            for _, mask in seeds[1:]:
                any_mask = any_mask | mask
            if not any_mask.any():
                return
            survivor_idx = np.nonzero(any_mask)[0]
        else:
            survivor_idx = np.arange(len(tids_j))

        self._walk_survivors(tid_i, tids_j, survivor_idx, seeds)

    def _walk_survivors(
        self,
        tid_i: int,
        tids_j: np.ndarray,
        survivor_idx: np.ndarray,
        seeds: list[tuple[int, np.ndarray]],
    ) -> None:
        runner = self.runner
        program = runner.program
        is_cp = program.is_checkpoint
        slot_of = program.slot
        fail_of = program.fail
        rule_of = program.rule
        slots = program.slots
        n_ins = len(is_cp)
        n_slots = program.n_slots
        slot_evals = self.stats.slot_evals
        base_reuse = [False] * n_slots
        sink = runner.sink
        symmetric = runner.cfg.symmetric_mode
        emit = self.buffer.add
        enumerate_all = runner.cfg.enumerate_witnesses

        for k in survivor_idx:
            tid_j = int(tids_j[k])
            reuse = base_reuse.copy()
            values = base_reuse.copy()
            for slot_idx, mask in seeds:
                reuse[slot_idx] = True
                values[slot_idx] = bool(mask[k])
            ip = 0
            while ip < n_ins:
                if is_cp[ip]:
                    rid = rule_of[ip]
                    a, b = (tid_i, tid_j)
                    if symmetric and a > b:
                        a, b = b, a
                    emit((a, b, program.rule_index[rid]), sink)
                    self.stats.emitted += 1
                    if not enumerate_all:
                        break
                    ip += 1
                    continue
                slot_idx = slot_of[ip]
                if reuse[slot_idx]:
                    truth = values[slot_idx]
                else:
                    truth = slots[slot_idx].pair(tid_i, tid_j)
                    reuse[slot_idx] = True
                    values[slot_idx] = truth
                    slot_evals[slot_idx] += 1
                ip = ip + 1 if truth else fail_of[ip]


class _PartitionRun:
    def __init__(
        self,
        partition: DataPartition,
        relation: Relation,
        program: PathProgram,
        cfg: EngineConfig,
    ):
        self.cfg = cfg
        self.program = program
        self.refs = np.asarray(partition.tuple_refs, dtype=np.int64)
        self.n = len(self.refs)
        self.positions = np.arange(self.n, dtype=np.int64)
        self.identity_refs = bool(np.array_equal(self.refs, self.positions))
        num_blocks = cfg.resolved_blocks()
        n_intervals = max(1, -(-self.n // cfg.n_t))
        self.table = IntervalTable(n_intervals, num_blocks, cfg.n_w, cfg.stealing)
        self.sink = CandidateSink()
        self.blocks = [_Block(self, b) for b in range(num_blocks)]

    def execute(self) -> RunStats:
        started = time.perf_counter()
        if len(self.blocks) == 1:
            self.blocks[0].run()
        else:
            threads = [threading.Thread(target=b.run, name=f"block-{b.block_id}", daemon=True) for b in self.blocks]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
        stats = RunStats(
            blocks=[b.stats for b in self.blocks],
            wall_s=time.perf_counter() - started,
            n_intervals=self.table.n_intervals,
        )
        return stats


def _dedup_witnesses(
    rows: list[tuple[int, int, int]],
    rule_ids: list[str],
    symmetric: bool,
    enumerate_all: bool,
) -> list[tuple[int, int, str]]:
    if enumerate_all:
        return [(t, s, rule_ids[ridx]) for t, s, ridx in dict.fromkeys(rows)]
    if symmetric:
        best: dict[tuple[int, int], int] = {}
        for t, s, ridx in rows:
            key = (t, s)
            prev = best.get(key)
            if prev is None or ridx < prev:
                best[key] = ridx
        return [(t, s, rule_ids[ridx]) for (t, s), ridx in best.items()]
    return [(t, s, rule_ids[ridx]) for t, s, ridx in rows]


def run_partition(
    partition: DataPartition,
    relation: Relation,
    path: ExecutionPath,
    cfg: Optional[EngineConfig] = None,
    reg: Optional[MeasureRegistry] = None,
    encoded: Optional[EncodedRelation] = None,
    program: Optional[PathProgram] = None,
) -> CandidateSet:
    """Evaluate the path over all pairs of one partition.

    Symmetric mode compares each unordered pair once (j > i);
    asymmetric mode evaluates both ordered pairs.  Pass a prebuilt
    ``encoded``/``program`` to share encodings across many partitions.
    """
    cfg = cfg or EngineConfig()
    if partition is None or len(partition.tuple_refs) == 0:
        return CandidateSet(pairs=[])
    reg = reg or default_registry()
    if program is None:
        encoded = encoded or EncodedRelation(relation)
        encoded.prepare(list(path.predicate_table))
        program = PathProgram(path, encoded, reg)
    runner = _PartitionRun(partition, relation, program, cfg)
    stats = runner.execute()
    rows = runner.sink.finalize()
    pairs = _dedup_witnesses(rows, path.rule_ids, cfg.symmetric_mode, cfg.enumerate_witnesses)
    return CandidateSet(pairs=pairs, stats=stats)


def run_cross(
    left: DataPartition,
    right: DataPartition,
    relation: Relation,
    path: ExecutionPath,
    cfg: Optional[EngineConfig] = None,
    reg: Optional[MeasureRegistry] = None,
    encoded: Optional[EncodedRelation] = None,
    program: Optional[PathProgram] = None,
) -> CandidateSet:
    """Evaluate the path across two partitions: every (t in left,
    s in right) pair.  Used by cross-partition pulls when similarity
    keyed hashing may have separated true matches."""
    cfg = cfg or EngineConfig()
    reg = reg or default_registry()
    if program is None:
        encoded = encoded or EncodedRelation(relation)
        encoded.prepare(list(path.predicate_table))
        program = PathProgram(path, encoded, reg)

    # A bipartite run is a plain run over the concatenated refs where
    # each left lane's range covers only the right side.
    combined = DataPartition(
        pid=-1,
        tuple_refs=tuple(left.tuple_refs) + tuple(right.tuple_refs),
        branch_id=left.branch_id,
    )
    runner = _PartitionRun(combined, relation, program, cfg)
    _bipartite_patch(runner, split_at=len(left.tuple_refs))
    stats = runner.execute()
    rows = runner.sink.finalize()
    pairs = _dedup_witnesses(rows, path.rule_ids, cfg.symmetric_mode, cfg.enumerate_witnesses)
    return CandidateSet(pairs=pairs, stats=stats)


def _bipartite_patch(runner: _PartitionRun, split_at: int) -> None:
    """Restrict a combined run to left-vs-right comparisons: only
    intervals below the split hold lane owners, and every lane's range
    starts at the split."""
    n = runner.n
    cfg = runner.cfg

    n_left_intervals = max(1, -(-split_at // cfg.n_t))
    table = IntervalTable(n_left_intervals, len(runner.blocks), cfg.n_w, cfg.stealing)
    runner.table = table

    def make_load(block: _Block):
        def _load(interval: int) -> None:
            lo = interval * cfg.n_t
            hi = min(lo + cfg.n_t, split_at)
            with block.lock:
                block.pending = deque(range(lo, hi))
                block.lanes = []
                while block.pending and len(block.lanes) < cfg.lanes_per_block:
                    pos = block.pending.popleft()
                    block.lanes.append(LaneRange(tuple_pos=pos, start=split_at, end=n - 1))

        return _load

    for block in runner.blocks:
        block._load_interval = make_load(block)  # type: ignore[method-assign]
        # Refills after steals must keep the bipartite range too.
        def make_refill(blk: _Block):
            def _refill() -> None:
                while blk.pending and len(blk.lanes) < cfg.lanes_per_block:
                    pos = blk.pending.popleft()
                    blk.lanes.append(LaneRange(tuple_pos=pos, start=split_at, end=n - 1))

            return _refill

        block._refill_locked = make_refill(block)  # type: ignore[method-assign]
