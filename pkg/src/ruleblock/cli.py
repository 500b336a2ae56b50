"""Command line interface.

Three subcommands:

- ``run``: block a CSV relation with a rule file, write candidate pairs,
  and print metrics when ground truth is available.
- ``explain``: print the predicate ordering, the scored tree, and the
  compiled instruction path for a dataset/rule pair.
- ``bench``: run one of the built-in benchmark/verification suites and
  emit a TSV table.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from ruleblock.bench import SUITES
from ruleblock.engine import EngineConfig
from ruleblock.errors import RuleBlockError
from ruleblock.metrics import GroundTruth, compute_metrics
from ruleblock.pipeline import PipelineConfig, load_devices, make_devices, pipeline_run
from ruleblock.planner.plan import PlannerConfig, generate_plan
from ruleblock.relation import load_relation
from ruleblock.rules import parse_ruleset, validate_ruleset


def _add_common_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nt", type=int, default=256, help="interval size in tuples")
    p.add_argument("--nw", type=int, default=1024, help="sliding window size in intervals")
    p.add_argument("--blocks", type=int, default=1, help="worker blocks per device")
    p.add_argument("--stealing", choices=("off", "inter", "inter+intra"), default="inter+intra")
    p.add_argument("--symmetric", dest="symmetric", action="store_true", default=True)
    p.add_argument("--asymmetric", dest="symmetric", action="store_false", help="evaluate both ordered pairs")
    p.add_argument("--seed", type=int, default=0)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ruleblock", description="Rule-based blocking for entity resolution")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="block a dataset and write candidate pairs")
    run_p.add_argument("--config", default=None, help="JSON file of defaults for any run flag (dashes or underscores)")
    run_p.add_argument("--data", help="input CSV with header")
    run_p.add_argument("--rules", help="rule document (JSON)")
    run_p.add_argument("--out", help="output CSV of candidate pairs")
    run_p.add_argument("--ground-truth", default=None, help="pair-list CSV, or 'eid' to derive from the eid column")
    run_p.add_argument("--partitions", type=int, default=None, help="fixed round-robin partition count (skips hash partitioning)")
    run_p.add_argument("--max-partition-size", type=int, default=512)
    run_p.add_argument("--devices", type=int, default=1)
    run_p.add_argument("--device-config", default=None, help="JSON device topology file (overrides --devices)")
    run_p.add_argument("--sync", action="store_true", help="serialize the pipeline stages")
    run_p.add_argument("--pulls", action="store_true", help="enable cross-partition pulls")
    run_p.add_argument("--wp-labels", default=None,
                       help="labeled pair CSV; witness probabilities come from these pairs instead of the independence product")
    _add_common_engine_flags(run_p)

    explain_p = sub.add_parser("explain", help="print the generated execution plan")
    explain_p.add_argument("--data", required=True)
    explain_p.add_argument("--rules", required=True)
    explain_p.add_argument("--order", choices=("epg", "random", "reversed"), default="epg")
    explain_p.add_argument("--seed", type=int, default=0)

    bench_p = sub.add_parser("bench", help="run a benchmark/verification suite")
    bench_p.add_argument("--suite", required=True, choices=sorted(SUITES))
    bench_p.add_argument("--out", default=None, help="write the TSV table here instead of stdout")
    return parser


def _load_inputs(data_path: str, rules_path: str):
    relation = load_relation(data_path)
    text = Path(rules_path).read_text()
    if not text.strip() or not json.loads(text or "[]"):
        raise RuleBlockError("empty rule set")
    rules = parse_ruleset(text)
    warnings = validate_ruleset(rules, relation.schema)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    return relation, rules


def _apply_config_defaults(args: argparse.Namespace, parser_defaults: dict) -> None:
    """Config-file values fill any flag left at its parser default;
    explicit command line flags win."""
    doc = json.loads(Path(args.config).read_text())
    for key, value in doc.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise RuleBlockError(f"config file: unknown option {key!r}")
        if getattr(args, attr) == parser_defaults.get(attr):
            setattr(args, attr, value)


_RUN_DEFAULTS = {
    "data": None, "rules": None, "out": None, "ground_truth": None, "partitions": None,
    "max_partition_size": 512, "devices": 1, "device_config": None, "sync": False,
    "pulls": False, "wp_labels": None, "nt": 256, "nw": 1024, "blocks": 1,
    "stealing": "inter+intra", "symmetric": True, "seed": 0,
}


def cmd_run(args: argparse.Namespace) -> int:
    if args.config:
        _apply_config_defaults(args, _RUN_DEFAULTS)
    for required in ("data", "rules", "out"):
        if getattr(args, required) is None:
            raise RuleBlockError(f"missing required option --{required}")
    relation, rules = _load_inputs(args.data, args.rules)
    engine_cfg = EngineConfig(
        n_t=args.nt,
        n_w=args.nw,
        num_blocks=args.blocks,
        stealing=args.stealing,
        symmetric_mode=args.symmetric,
    )
    if args.device_config:
        devices = load_devices(args.device_config)
    else:
        devices = make_devices(args.devices)
    pipe_cfg = PipelineConfig(
        async_mode=not args.sync,
        max_partition_size=args.max_partition_size,
        enable_pulls=args.pulls,
        rng_seed=args.seed,
    )
    planner_cfg = PlannerConfig(rng_seed=args.seed)
    if args.wp_labels:
        from ruleblock.planner.plan import wp_from_labeled_pairs

        labeled = GroundTruth.from_csv(args.wp_labels)
        planner_cfg.wp_override = wp_from_labeled_pairs(rules, relation, sorted(labeled.match_pairs))

    if args.partitions:
        # Round-robin split instead of plan-derived hashing.
        from ruleblock.engine import run_partition
        from ruleblock.relation import split_fixed

        bundle = generate_plan(relation, rules, planner_cfg)
        merged: dict[tuple[int, int], str] = {}
        import time as _time

        t0 = _time.perf_counter()
        for part in split_fixed(relation, args.partitions):
            cs = run_partition(part, relation, bundle.path, engine_cfg)
            for t, s, rid in cs.pairs:
                merged.setdefault((t, s), rid)
        pairs = [(t, s, rid) for (t, s), rid in merged.items()]
        timings = {"total_s": _time.perf_counter() - t0}
    else:
        result = pipeline_run(relation, rules, pipe_cfg, engine_cfg, devices, planner_cfg)
        pairs = result.candidates.pairs
        timings = result.timings

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t_tid", "s_tid", "witness_rule_id"])
        for t, s, rid in sorted(pairs):
            writer.writerow([t, s, rid])
    print(f"wrote {len(pairs)} candidate pairs to {out}")

    if args.ground_truth:
        gt = GroundTruth.from_eids(relation) if args.ground_truth == "eid" else GroundTruth.from_csv(args.ground_truth)
        report = compute_metrics(
            {(t, s) for t, s, _ in pairs},
            gt,
            universe_size=len(relation),
            wall_time_s=timings.get("total_s", 0.0),
            stage_timings=timings,
        )
        print(report.describe())
    return 0


def cmd_explain(args: argparse.Namespace) -> int:
    relation, rules = _load_inputs(args.data, args.rules)
    planner_cfg = PlannerConfig(ordering_mode=args.order, rng_seed=args.seed)
    bundle = generate_plan(relation, rules, planner_cfg)

    print("# predicate ordering (descending cost-effectiveness)")
    for e in bundle.ordering:
        print(f"  ce={e.cost_effectiveness:8.4f}  cost={e.est_cost:6.4f}  sp={e.sp:6.4f}  {e.predicate.describe()}")

    print("\n# execution tree")

    def walk(node, depth: int) -> None:
        for rid in node.leaf_rules:
            print(f"{'  ' * depth}* rule {rid} (wp={bundle.tree.wp[rid]:.6g})")
        for edge in node.edges:
            print(f"{'  ' * depth}- [{edge.score:.6g}] {edge.predicate.describe()}")
            walk(edge.child, depth + 1)

    walk(bundle.tree.root, 1)

    print("\n# instruction path")
    print(bundle.path.describe())
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    suite = SUITES[args.suite]
    rows = suite()
    if not rows:
        print("no results")
        return 1
    columns: list[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    lines = ["\t".join(columns)]
    for row in rows:
        lines.append("\t".join(str(row.get(c, "")) for c in columns))
    table = "\n".join(lines)
    if args.out:
        Path(args.out).write_text(table + "\n")
        print(f"wrote {len(rows)} rows to {args.out}")
    else:
        print(table)
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return cmd_run(args)
        if args.command == "explain":
            return cmd_explain(args)
        return cmd_bench(args)
    except RuleBlockError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
