"""Benchmark and verification suites behind the ``bench`` command.

Each suite returns a list of row dicts (one per measurement) so the CLI
can render a machine-readable table and the acceptance tests can assert
on the same numbers.  The brute-force oracle lives here too: a plain
nested-loop evaluation of the rule disjunction, deliberately independent
of the planner and the engine.
"""

from __future__ import annotations

import json
import os
import tempfile
import time
from typing import Optional, Sequence

from ruleblock import _kernels
from ruleblock.datasets import (
    CITATION_HEADER,
    citation_benchmark,
    grouped_workload,
    ordering_workload,
    random_instance,
    rows_to_relation,
    skewed_partition_workload,
)
from ruleblock.encode import EncodedRelation
from ruleblock.engine import EngineConfig, PathProgram, run_partition
from ruleblock.measures import default_registry, eval_predicate
from ruleblock.metrics import GroundTruth, compute_metrics
from ruleblock.pipeline import PipelineConfig, make_devices, pipeline_run
from ruleblock.planner.plan import PlannerConfig, generate_plan, plan_generation_time_budget
from ruleblock.relation import DataPartition, Relation
from ruleblock.rules import MDRule, Predicate, RuleSet, parse_ruleset, predicate_universe

FAST_PLANNER = PlannerConfig(n_timing_samples=8, cost_sample_pairs=500, epochs=80, k_buckets=32)


def brute_force_candidates(
    relation: Relation,
    rules: RuleSet,
    refs: Optional[Sequence[int]] = None,
    symmetric: bool = True,
) -> set[tuple[int, int]]:
    """Nested-loop DNF oracle: try every rule on every pair, any order."""
    reg = default_registry()
    schema = relation.schema
    ids = list(refs) if refs is not None else [rec.tid for rec in relation.tuples]
    out: set[tuple[int, int]] = set()
    for a in range(len(ids)):
        for b in range(len(ids)):
            if symmetric and b <= a:
                continue
            if not symmetric and a == b:
                continue
            t = relation.tuples[ids[a]]
            s = relation.tuples[ids[b]]
            for rule in rules:
                if all(eval_predicate(p, t, s, reg, schema) for p in rule.precondition):
                    out.add((ids[a], ids[b]) if not symmetric else tuple(sorted((ids[a], ids[b]))))
                    break
    return out


def _load_instance(rows, rules_doc, tmpdir, header=None):
    header = header or ["cat", "num", "stext", "ltext"]
    relation = rows_to_relation(rows, header, tmpdir)
    rules = parse_ruleset(json.dumps(rules_doc))
    return relation, rules


def _whole_partition(relation: Relation) -> DataPartition:
    return DataPartition(pid=0, tuple_refs=tuple(range(len(relation))))


def suite_oracle(seeds: Sequence[int] = range(100), verbose: bool = False) -> list[dict]:
    """Exact equivalence between the engine and the nested-loop oracle
    on randomized instances, rotating engine configurations."""
    _kernels.warmup()
    rows_out = []
    stealing_modes = ("off", "inter", "inter+intra")
    with tempfile.TemporaryDirectory() as tmp:
        for seed in seeds:
            rows, rules_doc = random_instance(seed)
            relation, rules = _load_instance(rows, rules_doc, tmp)
            symmetric = seed % 5 != 4
            cfg = EngineConfig(
                n_t=(16, 32, 64)[seed % 3],
                n_w=8,
                num_blocks=1 + seed % 3,
                lanes_per_block=(4, 32)[seed % 2],
                stealing=stealing_modes[seed % 3],
                symmetric_mode=symmetric,
                buffer_half_capacity=(1, 64, 4096)[seed % 3],
                chunk_size=(7, 64, 4096)[seed % 3],
            )
            bundle = generate_plan(relation, rules, FAST_PLANNER)
            got = run_partition(_whole_partition(relation), relation, bundle.path, cfg)
            want = brute_force_candidates(relation, rules, symmetric=symmetric)
            have = got.pair_set()
            ok = have == want
            rows_out.append(
                {
                    "seed": seed,
                    "n_tuples": len(relation),
                    "n_rules": len(rules),
                    "engine_pairs": len(have),
                    "oracle_pairs": len(want),
                    "symmetric": symmetric,
                    "ok": ok,
                }
            )
            if verbose and not ok:
                missing = sorted(want - have)[:5]
                extra = sorted(have - want)[:5]
                rows_out[-1]["missing"] = str(missing)
                rows_out[-1]["extra"] = str(extra)
    return rows_out


def suite_plan_invariance(seeds: Sequence[int] = range(20)) -> list[dict]:
    """Candidate sets must not depend on predicate ordering."""
    _kernels.warmup()
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        for seed in seeds:
            rows, rules_doc = random_instance(seed + 1000)
            relation, rules = _load_instance(rows, rules_doc, tmp)
            part = _whole_partition(relation)
            cfg = EngineConfig(n_t=32, n_w=8, num_blocks=2)
            sets = []
            for mode in ("epg", "random", "reversed"):
                planner = PlannerConfig(
                    n_timing_samples=FAST_PLANNER.n_timing_samples,
                    cost_sample_pairs=FAST_PLANNER.cost_sample_pairs,
                    epochs=FAST_PLANNER.epochs,
                    k_buckets=FAST_PLANNER.k_buckets,
                    ordering_mode=mode,
                    rng_seed=seed,
                )
                bundle = generate_plan(relation, rules, planner)
                sets.append(run_partition(part, relation, bundle.path, cfg).pair_set())
            out.append(
                {
                    "seed": seed,
                    "n_tuples": len(relation),
                    "pairs": len(sets[0]),
                    "ok": sets[0] == sets[1] == sets[2],
                }
            )
    return out


def suite_stealing(
    n: int = 50_000,
    num_blocks: Optional[int] = None,
    heavy_intervals: int = 18,
    repeats: int = 3,
    seed: int = 11,
) -> list[dict]:
    """Wall time and per-block balance with stealing off vs on, over an
    adversarially skewed partition.

    Each mode runs ``repeats`` times interleaved and reports the minimum
    wall time: the sandbox shares its cores, so single measurements
    carry heavy scheduler noise.
    """
    _kernels.warmup()
    blocks = num_blocks or max(2, min(os.cpu_count() or 2, 8))
    n_t, n_w = 256, 1024
    rows, rules_doc = skewed_partition_workload(
        n=n, n_t=n_t, n_w=n_w, num_blocks=blocks, heavy_intervals=heavy_intervals, seed=seed
    )
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        relation, rules = _load_instance(rows, rules_doc, tmp, header=["group", "text"])
        bundle = generate_plan(relation, rules, FAST_PLANNER)
        part = _whole_partition(relation)
        encoded = EncodedRelation(relation)
        encoded.prepare(list(bundle.path.predicate_table))
        program = PathProgram(bundle.path, encoded, default_registry())
        reference: Optional[set] = None
        modes = ("off", "inter", "inter+intra")
        runs: dict[str, list[dict]] = {m: [] for m in modes}
        for rep in range(repeats):
            for mode in modes:
                if mode == "inter" and rep > 0:
                    continue  # the mid mode is informational only
                cfg = EngineConfig(n_t=n_t, n_w=n_w, num_blocks=blocks, stealing=mode, chunk_size=65536)
                started = time.perf_counter()
                cs = run_partition(part, relation, bundle.path, cfg, program=program)
                wall = time.perf_counter() - started
                if reference is None:
                    reference = cs.pair_set()
                busy = [b.busy_s for b in cs.stats.blocks]
                runs[mode].append(
                    {
                        "wall_s": wall,
                        "pairs": len(cs.pairs),
                        "identical": cs.pair_set() == reference,
                        "busy_max_s": max(busy),
                        "busy_min_s": min(busy),
                        "claims": ",".join(str(b.intervals_processed) for b in cs.stats.blocks),
                        "range_steals": sum(b.range_steals for b in cs.stats.blocks),
                        "intervals_stolen": sum(b.intervals_stolen for b in cs.stats.blocks),
                    }
                )
        for mode in modes:
            best = min(runs[mode], key=lambda r: r["wall_s"])
            row = {"stealing": mode, "wall_s": round(best["wall_s"], 4)}
            row.update({k: (round(v, 4) if isinstance(v, float) else v) for k, v in best.items() if k != "wall_s"})
            row["walls"] = [round(r["wall_s"], 4) for r in runs[mode]]
            out.append(row)
    return out


def paired_ratio(numerators: Sequence[float], denominators: Sequence[float]) -> float:
    """Median of elementwise ratios: repeats run back to back share the
    host's noise window, so pairing cancels most of it."""
    import statistics

    pairs = list(zip(numerators, denominators))
    return statistics.median(a / b for a, b in pairs)


def suite_ordering(n: int = 1200, seed: int = 7) -> list[dict]:
    """Execution time under the cost-effectiveness ordering vs the
    worst-case (reversed) ordering."""
    _kernels.warmup()
    rows, rules_doc = ordering_workload(n=n, seed=seed)
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        relation, rules = _load_instance(rows, rules_doc, tmp, header=["key", "text"])
        part = _whole_partition(relation)
        cfg = EngineConfig(num_blocks=min(2, os.cpu_count() or 1))
        encoded = EncodedRelation(relation)
        reference = None
        for mode in ("epg", "reversed"):
            planner = PlannerConfig(
                n_timing_samples=30,
                cost_sample_pairs=2000,
                epochs=150,
                ordering_mode=mode,
                rng_seed=seed,
            )
            bundle = generate_plan(relation, rules, planner)
            encoded.prepare(list(bundle.path.predicate_table))
            program = PathProgram(bundle.path, encoded, default_registry())
            started = time.perf_counter()
            cs = run_partition(part, relation, bundle.path, cfg, program=program)
            wall = time.perf_counter() - started
            if reference is None:
                reference = cs.pair_set()
            out.append(
                {
                    "ordering": mode,
                    "wall_s": round(wall, 4),
                    "pairs": len(cs.pairs),
                    "identical": cs.pair_set() == reference,
                    "first_predicate": bundle.ordering.entries[0].predicate.describe(),
                }
            )
    return out


def suite_scaling(
    device_counts: Sequence[int] = (1, 8),
    n_groups: int = 2000,
    group_size: int = 50,
    seed: int = 3,
) -> list[dict]:
    """End-to-end pipeline wall time as simulated devices scale."""
    _kernels.warmup()
    rows, rules_doc = grouped_workload(
        n_groups=n_groups, group_size=group_size, seed=seed, edit_threshold=0.8, perturb_divisor=3
    )
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        relation, rules = _load_instance(rows, rules_doc, tmp, header=["group", "text"])
        bundle = generate_plan(relation, rules, FAST_PLANNER)
        reference = None
        for count in device_counts:
            devices = make_devices(count, capacity=8)
            started = time.perf_counter()
            result = pipeline_run(
                relation,
                rules,
                PipelineConfig(async_mode=True),
                EngineConfig(num_blocks=1),
                devices,
                plan=bundle,
            )
            wall = time.perf_counter() - started
            if reference is None:
                reference = result.candidates.pair_set()
            out.append(
                {
                    "devices": count,
                    "wall_s": round(wall, 4),
                    "execute_s": round(result.timings["execute_s"], 4),
                    "partitions": result.n_partitions,
                    "pairs": len(result.candidates.pairs),
                    "identical": result.candidates.pair_set() == reference,
                }
            )
    if len(out) > 1:
        base = out[0]["wall_s"]
        for row in out:
            row["speedup"] = round(base / row["wall_s"], 3) if row["wall_s"] > 0 else float("inf")
    return out


def suite_async(
    n_groups: int = 600,
    group_size: int = 40,
    n_devices: int = 4,
    repeats: int = 3,
    seed: int = 5,
) -> list[dict]:
    """Asynchronous pipelined run vs strictly serialized submission.

    Modes alternate back to back per repeat; the summary speedup is the
    median of paired sync/async ratios (shared noise windows cancel)."""
    _kernels.warmup()
    rows, rules_doc = grouped_workload(
        n_groups=n_groups,
        group_size=group_size,
        text_len=150,
        seed=seed,
        edit_threshold=0.8,
        perturb_divisor=3,
    )
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        relation, rules = _load_instance(rows, rules_doc, tmp, header=["group", "text"])
        bundle = generate_plan(relation, rules, FAST_PLANNER)
        results = {}
        walls: dict[bool, list[float]] = {False: [], True: []}
        n_partitions = 0
        for rep in range(repeats):
            for mode_async in (False, True):
                devices = make_devices(n_devices, capacity=8)
                started = time.perf_counter()
                result = pipeline_run(
                    relation,
                    rules,
                    PipelineConfig(async_mode=mode_async),
                    EngineConfig(num_blocks=1),
                    devices,
                    plan=bundle,
                )
                walls[mode_async].append(time.perf_counter() - started)
                results[mode_async] = result.candidates.pair_set()
                n_partitions = result.n_partitions
                if rep == 0:
                    out.append(
                        {
                            "mode": "async" if mode_async else "sync",
                            "wall_s": round(walls[mode_async][-1], 4),
                            "partitions": result.n_partitions,
                            "pairs": len(result.candidates.pairs),
                        }
                    )
        speedup = paired_ratio(walls[False], walls[True])
        out.append(
            {
                "mode": "summary",
                "speedup_async": round(speedup, 3),
                "identical": results[False] == results[True],
                "sync_walls": [round(w, 3) for w in walls[False]],
                "async_walls": [round(w, 3) for w in walls[True]],
                "partitions": n_partitions,
            }
        )
    return out


def suite_benchmark(seed: int = 2024) -> list[dict]:
    """Recall/CSSR sanity on the bundled citation-style benchmark."""
    _kernels.warmup()
    rows, rules_doc, truth = citation_benchmark(seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        relation = rows_to_relation(rows, CITATION_HEADER, tmp)
        rules = parse_ruleset(json.dumps(rules_doc))
        started = time.perf_counter()
        result = pipeline_run(
            relation,
            rules,
            PipelineConfig(async_mode=True, enable_pulls=True),
            EngineConfig(num_blocks=min(2, os.cpu_count() or 1)),
            make_devices(1, capacity=8),
            planner_cfg=PlannerConfig(n_timing_samples=20, cost_sample_pairs=2000, epochs=150),
        )
        wall = time.perf_counter() - started
        gt = GroundTruth.from_pairs(truth)
        report = compute_metrics(result.candidates, gt, universe_size=len(relation), wall_time_s=wall)
        return [
            {
                "n_tuples": len(relation),
                "n_truth": len(gt),
                "recall": round(report.recall, 4),
                "precision": round(report.precision, 4),
                "cssr_per_10k": round(report.cssr * 10_000, 4),
                "candidates": report.n_candidates,
                "wall_s": round(wall, 3),
            }
        ]


def ndcg(ranked: Sequence, relevance: dict) -> float:
    """Normalized discounted cumulative gain of a ranking against graded
    relevance scores (ideal = descending relevance)."""
    import math

    def dcg(order):
        return sum(relevance[item] / math.log2(i + 2) for i, item in enumerate(order))

    ideal = sorted(ranked, key=lambda item: -relevance[item])
    denom = dcg(ideal)
    return dcg(ranked) / denom if denom > 0 else 1.0


def _ndcg_universe(seed: int):
    """A 10-predicate universe over data with clearly tiered true costs:
    equalities, short-text sims, long-text sims."""
    import random as _random

    rng = _random.Random(seed)
    rows = []
    words = [f"w{i}" for i in range(60)]
    for i in range(120):
        rows.append(
            [
                rng.choice("abcde"),
                str(rng.randint(0, 40)),
                " ".join(rng.choices(words, k=rng.randint(2, 4))),
                "".join(rng.choices("abcdefghij ", k=rng.randint(160, 260))),
            ]
        )
    sim = lambda attr, m, th: Predicate(lhs_attr=attr, comparator="sim", rhs_attr=attr, measure=m, threshold=th)
    eq = lambda attr: Predicate(lhs_attr=attr, comparator="eq", rhs_attr=attr)
    universe = [
        eq("cat"),
        eq("num"),
        eq("stext"),
        sim("stext", "jaccard", 0.5),
        sim("stext", "exact_token", 1.0),
        sim("stext", "edit", 0.6),
        sim("ltext", "jaccard", 0.4),
        sim("ltext", "edit", 0.5),
        sim("ltext", "edit", 0.7),
        sim("ltext", "jaccard", 0.7),
    ]
    return rows, universe


def suite_ndcg(n_universes: int = 10, seed: int = 0) -> list[dict]:
    """Ranking fidelity of model-estimated costs against measured
    per-predicate evaluation times (median over a probe sample, so a
    single scheduler hiccup cannot corrupt the reference ranking)."""
    import numpy as np

    from ruleblock.planner.cost import estimate_costs, sample_timings, train_cost_model

    _kernels.warmup()
    out = []
    with tempfile.TemporaryDirectory() as tmp:
        for u in range(n_universes):
            rows, universe = _ndcg_universe(seed + u)
            relation = rows_to_relation(rows, ["cat", "num", "stext", "ltext"], tmp, name=f"u{u}.csv")
            train_log = sample_timings(relation, universe, n_samples=150, rng_seed=seed + u)
            model = train_cost_model(train_log, epochs=400, lr=0.02, rng_seed=seed + u)
            costs = estimate_costs(universe, relation, model, n_pairs=3000, rng_seed=seed + u + 1)

            probe = sample_timings(relation, universe, n_samples=400, rng_seed=seed + u + 7)
            measured: dict[Predicate, float] = {}
            times = probe.targets()
            for p in universe:
                idx = [i for i, q in enumerate(probe.predicates) if q == p]
                measured[p] = float(np.median(times[idx]))

            predicted_rank = sorted(universe, key=lambda p: -costs[p])
            score = ndcg(predicted_rank, measured)
            out.append({"universe": u, "ndcg": round(score, 4)})
    return out


def suite_plan_budget(n_rules: int = 50, n_predicates: int = 100, seed: int = 0) -> list[dict]:
    """Plan-generation wall time on a large synthetic rule set, with
    cost/selectivity inputs supplied."""
    import random as _random

    rng = _random.Random(seed)
    attrs = [f"a{i}" for i in range(20)]
    universe: list[Predicate] = []
    while len(universe) < n_predicates:
        attr = rng.choice(attrs)
        if rng.random() < 0.5:
            p = Predicate(lhs_attr=attr, comparator="eq", rhs_attr=attr)
        else:
            p = Predicate(
                lhs_attr=attr,
                comparator="sim",
                rhs_attr=attr,
                measure=rng.choice(("edit", "jaccard")),
                threshold=round(rng.uniform(0.3, 0.95), 3),
            )
        if p not in universe:
            universe.append(p)
    rules = []
    for r in range(n_rules):
        k = rng.randint(2, 6)
        rules.append(MDRule(rule_id=f"r{r}", precondition=tuple(rng.sample(universe, k))))
    rs = RuleSet(rules=tuple(rules))
    costs = {p: rng.uniform(0.01, 1.0) for p in predicate_universe(rs)}
    sps = {p: rng.uniform(0.0, 1.0) for p in predicate_universe(rs)}
    report = plan_generation_time_budget(rs, costs, sps)
    return [{k: (round(v, 6) if isinstance(v, float) else v) for k, v in report.items()}]


SUITES = {
    "oracle": suite_oracle,
    "invariance": suite_plan_invariance,
    "stealing": suite_stealing,
    "ordering": suite_ordering,
    "scaling": suite_scaling,
    "async": suite_async,
    "benchmark": suite_benchmark,
    "budget": suite_plan_budget,
    "ndcg": suite_ndcg,
}
