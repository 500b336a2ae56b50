"""Device scheduling and the pipelined end-to-end run.

Devices are simulated worker pools, one OS process each.  Partitions are
placed on a unit circle together with the devices (consistent hashing);
a partition walks clockwise from its own position to the first device
with queue headroom, overflowing past devices at capacity, with a
least-loaded fallback when everything is full.

The asynchronous pipeline overlaps four stages over bounded queues:
partitioning, scheduling/dispatch, device execution, and result
collection.  Synchronous mode submits one partition at a time and waits
for its result before the next, which serializes transfer and compute;
the candidate set is identical either way.
"""

from __future__ import annotations

import json
import multiprocessing as mp
import queue
import threading
import time
from bisect import bisect_left
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

from ruleblock.encode import EncodedRelation
from ruleblock.engine import CandidateSet, EngineConfig, PathProgram, RunStats, run_cross, run_partition
from ruleblock.errors import ConfigError
from ruleblock.hashing import unit_position
from ruleblock.measures import MeasureRegistry, default_registry
from ruleblock.partitioning import BandingConfig, derive_partitioners, iter_partitions, sibling_pull_pairs
from ruleblock.planner.plan import ExecutionPath, PlanBundle, PlannerConfig, generate_plan
from ruleblock.relation import DataPartition, Relation
from ruleblock.rules import RuleSet


@dataclass
class Device:
    """One simulated execution device."""

    device_id: int
    capacity: int = 8
    lanes: int = 32

    def position(self, rng_seed: int = 0) -> float:
        return unit_position(f"device:{self.device_id}", rng_seed)


def make_devices(count: int, capacity: int = 8, lanes: int = 32) -> list[Device]:
    if count < 1:
        raise ConfigError("need at least one device")
    return [Device(device_id=i, capacity=capacity, lanes=lanes) for i in range(count)]


def load_devices(path: Union[str, Path]) -> list[Device]:
    """Device topology from a JSON config: either {"count": n,
    "capacity": c, "lanes": l} or a list of per-device objects."""
    doc = json.loads(Path(path).read_text())
    if isinstance(doc, dict):
        return make_devices(int(doc["count"]), int(doc.get("capacity", 8)), int(doc.get("lanes", 32)))
    return [
        Device(device_id=int(d["device_id"]), capacity=int(d.get("capacity", 8)), lanes=int(d.get("lanes", 32)))
        for d in doc
    ]


@dataclass
class PipelineConfig:
    async_mode: bool = True
    stage_queue_bound: int = 8
    max_partition_size: int = 512
    enable_pulls: bool = False
    banding: BandingConfig = field(default_factory=BandingConfig)
    rng_seed: int = 0
    # Relations at most this large run as one partition (hash
    # partitioning would only lose similarity-keyed recall).  None
    # follows max_partition_size; 0 forces hash partitioning.
    single_partition_threshold: Optional[int] = None


# ---------------------------------------------------------------------------
# Scheduling (consistent hashing with bounded loads)


def _clockwise_order(devices: Sequence[Device], positions: list[float], start_pos: float) -> list[int]:
    idx = bisect_left(positions, start_pos) % len(devices)
    return [(idx + k) % len(devices) for k in range(len(devices))]


def schedule(
    partitions: Sequence[DataPartition],
    devices: Sequence[Device],
    rng_seed: int = 0,
) -> tuple[dict[int, int], list[str]]:
    """Assign partitions to devices on the unit circle.

    Walk clockwise from the partition's position to the first device
    whose queue is below capacity; when every device is full, fall back
    to the least-loaded one (logged).  Returns pid -> device_id plus the
    fallback log.
    """
    if not devices:
        raise ConfigError("need at least one device")
    order = sorted(range(len(devices)), key=lambda i: devices[i].position(rng_seed))
    sorted_devices = [devices[i] for i in order]
    positions = [d.position(rng_seed) for d in sorted_devices]
    loads = {d.device_id: 0 for d in devices}
    assignment: dict[int, int] = {}
    log: list[str] = []
    for p in partitions:
        pos = unit_position(f"partition:{p.pid}", rng_seed)
        chosen: Optional[Device] = None
        for k in _clockwise_order(sorted_devices, positions, pos):
            d = sorted_devices[k]
            if loads[d.device_id] < d.capacity:
                chosen = d
                break
        if chosen is None:
            chosen = min(devices, key=lambda d: (loads[d.device_id], d.device_id))
            log.append(f"partition {p.pid}: all devices at capacity, least-loaded fallback -> device {chosen.device_id}")
        loads[chosen.device_id] += 1
        assignment[p.pid] = chosen.device_id
    return assignment, log


class _LiveScheduler:
    """The same clockwise walk, but against live in-flight counts so the
    pipelined dispatcher respects capacity as results drain."""

    def __init__(self, devices: Sequence[Device], rng_seed: int):
        self.devices = list(devices)
        order = sorted(range(len(self.devices)), key=lambda i: self.devices[i].position(rng_seed))
        self.sorted_devices = [self.devices[i] for i in order]
        self.positions = [d.position(rng_seed) for d in self.sorted_devices]
        self.rng_seed = rng_seed
        self.inflight = {d.device_id: 0 for d in self.devices}
        self.lock = threading.Lock()
        self.fallbacks = 0

    def pick(self, pid: int) -> Device:
        pos = unit_position(f"partition:{pid}", self.rng_seed)
        with self.lock:
            for k in _clockwise_order(self.sorted_devices, self.positions, pos):
                d = self.sorted_devices[k]
                if self.inflight[d.device_id] < d.capacity:
                    self.inflight[d.device_id] += 1
                    return d
            d = min(self.devices, key=lambda dev: (self.inflight[dev.device_id], dev.device_id))
            self.inflight[d.device_id] += 1
            self.fallbacks += 1
            return d

    def release(self, device_id: int) -> None:
        with self.lock:
            self.inflight[device_id] -= 1


# ---------------------------------------------------------------------------
# Device worker


def _pack_pairs(pairs: list[tuple[int, int, str]], rule_pos: dict[str, int]) -> "np.ndarray":
    """Rows as one (n, 3) int64 array: numpy pickles an order of
    magnitude cheaper than a list of tuples."""
    import numpy as np

    arr = np.empty((len(pairs), 3), dtype=np.int64)
    for i, (t, s, rid) in enumerate(pairs):
        arr[i, 0] = t
        arr[i, 1] = s
        arr[i, 2] = rule_pos[rid]
    return arr


def _device_worker(
    device: Device,
    task_q,
    result_q,
    relation: Relation,
    path: ExecutionPath,
    encoded: EncodedRelation,
    engine_cfg: EngineConfig,
) -> None:
    reg = default_registry()
    program = PathProgram(path, encoded, reg)
    cfg = replace(
        engine_cfg,
        num_blocks=max(1, engine_cfg.num_blocks or 1),
        lanes_per_block=device.lanes,
    )
    rule_pos = {rid: i for i, rid in enumerate(path.rule_ids)}
    while True:
        task = task_q.get()
        if task is None:
            break
        kind = task[0]
        started = time.perf_counter()
        if kind == "run":
            partition: DataPartition = task[1]
            cs = run_partition(partition, relation, path, cfg, reg=reg, program=program)
            tag = partition.pid
        else:
            left, right = task[1], task[2]
            cs = run_cross(left, right, relation, path, cfg, reg=reg, program=program)
            tag = left.pid
        busy = time.perf_counter() - started
        result_q.put((device.device_id, tag, _pack_pairs(cs.pairs, rule_pos), busy, cs.stats.total_comparisons()))


# ---------------------------------------------------------------------------
# Pipeline


@dataclass
class PipelineResult:
    candidates: CandidateSet
    timings: dict[str, float]
    assignment: dict[int, int]
    n_partitions: int
    device_busy_s: dict[int, float]
    plan: Optional[PlanBundle] = None


def cross_partition_pull(
    left: DataPartition,
    right: DataPartition,
    relation: Relation,
    path: ExecutionPath,
    cfg: Optional[EngineConfig] = None,
    reg: Optional[MeasureRegistry] = None,
    encoded: Optional[EncodedRelation] = None,
) -> CandidateSet:
    """Evaluate the plan across two same-branch partitions (all pairs
    t in left, s in right).  Distinct partitions only; the intra-pair
    case is run_partition's job."""
    if left.branch_id != right.branch_id:
        raise ConfigError(f"cross pull needs one branch, got {left.branch_id} and {right.branch_id}")
    if left.pid == right.pid:
        raise ConfigError("cross pull of a partition with itself is covered by run_partition")
    return run_cross(left, right, relation, path, cfg, reg=reg, encoded=encoded)


def pipeline_run(
    relation: Relation,
    rules: RuleSet,
    pipe_cfg: Optional[PipelineConfig] = None,
    engine_cfg: Optional[EngineConfig] = None,
    devices: Optional[Sequence[Device]] = None,
    planner_cfg: Optional[PlannerConfig] = None,
    plan: Optional[PlanBundle] = None,
) -> PipelineResult:
    """Plan once, partition, schedule, execute per device, collect.

    Stages overlap over bounded queues in async mode; sync mode keeps a
    single partition in flight end to end.  The candidate set is the
    deduplicated union over partitions (first rule in rule-set order
    wins witness attribution for a duplicated pair).
    """
    pipe_cfg = pipe_cfg or PipelineConfig()
    engine_cfg = engine_cfg or EngineConfig(num_blocks=1)
    planner_cfg = planner_cfg or PlannerConfig()
    devices = list(devices) if devices else make_devices(1)
    timings: dict[str, float] = {}
    wall0 = time.perf_counter()

    t0 = time.perf_counter()
    bundle = plan or generate_plan(relation, rules, planner_cfg)
    timings["plan_s"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    encoded = EncodedRelation(relation)
    encoded.prepare(list(bundle.path.predicate_table))
    timings["encode_s"] = time.perf_counter() - t0

    threshold = pipe_cfg.single_partition_threshold
    if threshold is None:
        threshold = pipe_cfg.max_partition_size
    partition_clock = {"s": 0.0}

    def produce_partitions():
        # Generator so the async dispatcher can overlap partitioning
        # with device execution; time spent producing is accumulated.
        t_start = time.perf_counter()
        if len(relation) <= threshold:
            partition_clock["s"] += time.perf_counter() - t_start
            yield DataPartition(pid=0, tuple_refs=tuple(range(len(relation))))
            return
        partitioners = derive_partitioners(bundle.tree, banding=pipe_cfg.banding)
        for p in iter_partitions(relation, partitioners, max_partition_size=pipe_cfg.max_partition_size):
            partition_clock["s"] += time.perf_counter() - t_start
            yield p
            t_start = time.perf_counter()

    def is_workload(p: DataPartition) -> bool:
        # A single tuple cannot pair with itself; skip the dispatch
        # round trip (the partition still exists and counts).
        return len(p.tuple_refs) > 1 or not engine_cfg.symmetric_mode

    ctx = mp.get_context("fork")
    result_q = ctx.Queue()
    task_queues = {d.device_id: ctx.Queue(maxsize=max(1, d.capacity)) for d in devices}
    workers = [
        ctx.Process(
            target=_device_worker,
            args=(d, task_queues[d.device_id], result_q, relation, bundle.path, encoded, engine_cfg),
            daemon=True,
        )
        for d in devices
    ]
    for w in workers:
        w.start()

    live = _LiveScheduler(devices, pipe_cfg.rng_seed)
    assignment: dict[int, int] = {}
    result_blocks: list = []
    device_busy: dict[int, float] = {d.device_id: 0.0 for d in devices}
    total_emitted = 0

    def merge_result(res) -> None:
        nonlocal total_emitted
        device_id, _tag, packed, busy, _comparisons = res
        device_busy[device_id] += busy
        total_emitted += len(packed)
        if len(packed):
            result_blocks.append(packed)

    device_by_id = {d.device_id: d for d in devices}

    def route(task) -> Device:
        pid = task[1].pid
        if task[0] == "pull" and pid in assignment:
            # The device owning the left partition executes the pull.
            d = device_by_id[assignment[pid]]
            with live.lock:
                live.inflight[d.device_id] += 1
            return d
        d = live.pick(pid)
        assignment[pid] = d.device_id
        return d

    partitions: list[DataPartition] = []

    def pull_tasks_for(parts: list[DataPartition]) -> list[tuple]:
        if not pipe_cfg.enable_pulls:
            return []
        by_pid = {p.pid: p for p in parts}
        return [("pull", by_pid[a], by_pid[b]) for a, b in sibling_pull_pairs(parts)]

    t_exec0 = time.perf_counter()
    if pipe_cfg.async_mode:
        dispatched = {"count": 0}
        dispatch_done = threading.Event()

        def dispatch() -> None:
            try:
                for p in produce_partitions():
                    partitions.append(p)
                    if not is_workload(p):
                        continue
                    task = ("run", p)
                    d = route(task)
                    task_queues[d.device_id].put(task)
                    dispatched["count"] += 1
                for task in pull_tasks_for(partitions):
                    d = route(task)
                    task_queues[d.device_id].put(task)
                    dispatched["count"] += 1
            finally:
                dispatch_done.set()

        dispatcher = threading.Thread(target=dispatch, daemon=True)
        dispatcher.start()
        received = 0
        while True:
            if dispatch_done.is_set() and received >= dispatched["count"]:
                break
            try:
                res = result_q.get(timeout=0.05)
            except queue.Empty:
                continue
            received += 1
            live.release(res[0])
            merge_result(res)
        dispatcher.join()
    else:
        partitions = list(produce_partitions())
        tasks = [("run", p) for p in partitions if is_workload(p)]
        tasks.extend(pull_tasks_for(partitions))
        for task in tasks:
            d = route(task)
            task_queues[d.device_id].put(task)
            res = result_q.get()
            live.release(res[0])
            merge_result(res)
    timings["execute_s"] = time.perf_counter() - t_exec0
    timings["partition_s"] = partition_clock["s"]

    for d in devices:
        task_queues[d.device_id].put(None)
    for w in workers:
        w.join(timeout=30)
        if w.is_alive():
            w.terminate()

    t0 = time.perf_counter()
    rule_ids = bundle.path.rule_ids
    pairs: list[tuple[int, int, str]] = []
    if result_blocks:
        import numpy as np

        stacked = np.concatenate(result_blocks, axis=0)
        # First occurrence per unordered pair under (t, s, rule-position)
        # ordering = the earliest rule in rule-set order wins.
        order = np.lexsort((stacked[:, 2], stacked[:, 1], stacked[:, 0]))
        stacked = stacked[order]
        keep = np.ones(len(stacked), dtype=bool)
        keep[1:] = (stacked[1:, 0] != stacked[:-1, 0]) | (stacked[1:, 1] != stacked[:-1, 1])
        stacked = stacked[keep]
        pairs = [(int(t), int(s), rule_ids[int(pos)]) for t, s, pos in stacked]
    timings["collect_s"] = time.perf_counter() - t0
    timings["total_s"] = time.perf_counter() - wall0

    stats = RunStats(wall_s=timings["total_s"])
    return PipelineResult(
        candidates=CandidateSet(pairs=pairs, stats=stats),
        timings=timings,
        assignment=assignment,
        n_partitions=len(partitions),
        device_busy_s=device_busy,
        plan=bundle,
    )
