"""Benchmark CLI: generate data, build indexes, run workloads, trace reorgs.

Exit codes: 0 success, 2 usage error, 3 data error, 4 verification
failure.  HERMIT_SEED overrides --seed for every subcommand.  Each run
emits one versioned JSON report (to --json FILE, else to stdout after
the human-readable summary).
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import threading
from time import perf_counter
from typing import Dict, List, Optional

import numpy as np

from hermit import datagen, kernels
from hermit.engine import (
    Engine,
    baseline_lookup_metrics,
    cm_lookup_metrics,
)
from hermit.table import (
    LOGICAL,
    PHYSICAL,
    DataFileError,
    Predicate,
    Table,
    TableError,
    read_table,
    scan_oracle,
    write_table,
)
from hermit.trstree import TrsParams

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_VERIFY = 4

_WARMUP_FRACTION = 0.1


def _effective_seed(args) -> int:
    env = os.environ.get("HERMIT_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise DataFileError(f"HERMIT_SEED must be an integer, got {env!r}")
    return getattr(args, "seed", 0)


def _parse_params(pairs: Optional[List[str]]) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for pair in pairs or []:
        key, sep, val = pair.partition("=")
        if not sep:
            raise DataFileError(f"bad --params entry {pair!r} (expected key=value)")
        out[key] = float(val)
    return out


def _trs_params(overrides: Dict[str, float]) -> TrsParams:
    params = TrsParams()
    for key, val in overrides.items():
        if key in ("target_width", "host_width"):
            continue
        if not hasattr(params, key):
            raise DataFileError(f"unknown tree parameter {key!r}")
        current = getattr(params, key)
        setattr(params, key, type(current)(val) if not isinstance(current, bool) else val != 0.0)
    params.validate()
    return params


def _emit_report(args, command: str, config: dict, results: dict, summary_lines: List[str]) -> None:
    for line in summary_lines:
        print(line)
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": config,
        "results": results,
    }
    text = json.dumps(report, indent=2, sort_keys=True)
    out = getattr(args, "json", None)
    if out:
        with open(out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _build_engine_indexes(engine: Engine, args, overrides: Dict[str, float], seed: int) -> dict:
    """Create --indexes copies of the chosen index kind; returns handles."""
    table = engine.table
    host = table.column_ordinal(args.host) if args.host is not None else None
    target = table.column_ordinal(args.target) if args.target is not None else None
    count = getattr(args, "indexes", 1)
    targets = _pick_targets(table, target, host, count)
    handles = {"kind": args.index, "hermit": [], "baseline": [], "cm": []}
    if args.index == "hermit":
        if host is None:
            raise DataFileError("--host is required for hermit indexes")
        params = _trs_params(overrides)
        for i, tcol in enumerate(targets):
            handles["hermit"].append(
                engine.create_hermit_index(tcol, host, params=params, seed=seed + i)
            )
    elif args.index == "baseline":
        for tcol in targets:
            handles["baseline"].append(engine.create_baseline_index(tcol))
    else:
        if host is None:
            raise DataFileError("--host is required for cm indexes")
        tw = overrides.get("target_width", 64.0)
        hw = overrides.get("host_width", 64.0)
        for tcol in targets:
            handles["cm"].append(engine.create_cm_index(tcol, host, tw, hw))
    return handles


def _pick_targets(table: Table, target: Optional[int], host: Optional[int], count: int) -> List[int]:
    if target is not None:
        return [target] * count
    if count <= 1:
        raise DataFileError("--target is required")
    candidates = [
        c
        for c in range(table.ncols)
        if c != table.primary_key_column and c != host
    ]
    return [candidates[i % len(candidates)] for i in range(count)]


def _lookup_fn(engine: Engine, handles: dict):
    kind = handles["kind"]
    if kind == "hermit":
        index = handles["hermit"][0]
        return lambda pred: index.lookup_metrics(pred)
    if kind == "baseline":
        index = handles["baseline"][0]
        return lambda pred: baseline_lookup_metrics(index, pred, engine.table)
    cm = handles["cm"][0]
    host = engine.cm_host(cm)
    return lambda pred: cm_lookup_metrics(cm, pred, host, engine.table)


# -- subcommands ---------------------------------------------------------------


def cmd_generate(args) -> int:
    seed = _effective_seed(args)
    spec = datagen.WorkloadSpec(
        kind=args.kind,
        row_count=args.rows,
        noise_pct=args.noise,
        seed=seed,
        stocks=args.stocks,
        sensors=args.sensors,
    )
    table = datagen.generate(spec)
    write_table(table, args.out)
    print(f"wrote {table.live_count} rows ({args.kind}, noise={args.noise}) to {args.out}")
    return EXIT_OK


def cmd_build(args) -> int:
    seed = _effective_seed(args)
    table = read_table(args.data, id_scheme=args.scheme)
    engine = Engine(table)
    overrides = _parse_params(args.params)
    t0 = perf_counter()
    handles = _build_engine_indexes(engine, args, overrides, seed)
    build_s = perf_counter() - t0
    summary = [f"built {args.index} index(es) in {build_s:.3f}s on {table.live_count} rows"]
    stats_text = None
    if args.index == "hermit":
        tree = handles["hermit"][0].tree
        leaves = tree.leaves()
        summary.append(
            f"tree: height={tree.height()} nodes={tree.build_stats.get('nodes_built')} "
            f"leaves={len(leaves)} buffered={sum(l.buffer_len for l in leaves)}"
        )
        if args.stats:
            stats_text = tree.stats_dump()
    elif args.index == "baseline":
        idx = handles["baseline"][0]
        summary.append(f"index entries={len(idx)} blocks={idx.map.block_count}")
    else:
        cm = handles["cm"][0]
        summary.append(f"cm buckets={len(cm.mapping)} entries={cm.entry_count()}")
    if stats_text:
        summary.append(stats_text)
    results = {
        "build_seconds": build_s,
        "rows": table.live_count,
        "memory": engine.memory_report(),
    }
    config = {"data": args.data, "index": args.index, "scheme": args.scheme, "seed": seed}
    _emit_report(args, "build", config, results, summary)
    return EXIT_OK


def _run_lookup_bench(engine: Engine, lookup, preds, args, seed: int) -> dict:
    warmup = math.ceil(len(preds) * _WARMUP_FRACTION)
    for pred in preds[:warmup]:
        lookup(pred)
    measured = preds[warmup:] or preds
    mismatches = 0
    step_totals: Dict[str, float] = {}
    candidates = 0
    results_n = 0
    threads = getattr(args, "threads", 1)
    verify = getattr(args, "verify", False)
    t0 = perf_counter()
    if threads > 1 and not verify:
        metrics_out = [None] * len(measured)

        def run_at(i: int) -> None:
            metrics_out[i] = lookup(measured[i])[1]

        pool: List[threading.Thread] = []
        chunk = math.ceil(len(measured) / threads)
        for t in range(threads):
            lo = t * chunk
            hi = min(len(measured), lo + chunk)

            def worker(lo=lo, hi=hi):
                for i in range(lo, hi):
                    run_at(i)

            th = threading.Thread(target=worker)
            th.start()
            pool.append(th)
        for th in pool:
            th.join()
        collected = [m for m in metrics_out if m is not None]
    else:
        collected = []
        for pred in measured:
            slots, metrics = lookup(pred)
            collected.append(metrics)
            if verify:
                expected = scan_oracle(engine.table, pred)
                if slots.shape != expected.shape or not np.array_equal(slots, expected):
                    mismatches += 1
    elapsed = perf_counter() - t0
    for metrics in collected:
        for key, val in metrics.steps.items():
            step_totals[key] = step_totals.get(key, 0.0) + val
        candidates += metrics.candidate_count
        results_n += metrics.result_count
    total_step = sum(step_totals.values())
    fractions = {k: (v / total_step if total_step > 0 else 0.0) for k, v in step_totals.items()}
    fp_ratio = (candidates - results_n) / candidates if candidates else 0.0
    return {
        "ops_measured": len(measured),
        "elapsed_s": elapsed,
        "throughput_ops_per_s": len(measured) / elapsed if elapsed > 0 else 0.0,
        "step_time_fractions": fractions,
        "candidate_count": candidates,
        "result_count": results_n,
        "false_positive_ratio": fp_ratio,
        "verify": {"enabled": bool(verify), "mismatches": mismatches},
    }


def _fresh_rows(table: Table, rng: np.random.Generator, count: int) -> List[list]:
    """Bootstrap new rows from existing ones, with fresh primary keys."""
    live = np.nonzero(table._live[: table.slot_count])[0]
    if live.shape[0] == 0:
        raise DataFileError("cannot synthesize inserts from an empty table")
    picks = rng.choice(live, size=count, replace=True)
    pk_col = table.primary_key_column
    next_pk = int(table.primary.max_key()) + 1
    rows = []
    for i, slot in enumerate(picks.tolist()):
        row = table.fetch(table.tuple_id_for_slot(slot))
        row[pk_col] = next_pk + i
        rows.append(row)
    return rows


def _run_insert_bench(engine: Engine, args, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    rows = _fresh_rows(engine.table, rng, args.ops)
    warmup = math.ceil(len(rows) * _WARMUP_FRACTION)
    for row in rows[:warmup]:
        engine.insert(row)
    measured = rows[warmup:] or rows
    t0 = perf_counter()
    for row in measured:
        engine.insert(row)
    elapsed = perf_counter() - t0
    return {
        "ops_measured": len(measured),
        "elapsed_s": elapsed,
        "throughput_ops_per_s": len(measured) / elapsed if elapsed > 0 else 0.0,
        "verify": {"enabled": False, "mismatches": 0},
    }


def _run_mixed_bench(engine: Engine, lookup, args, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    table = engine.table
    rows = _fresh_rows(table, rng, args.ops)
    preds = datagen.generate_queries(table, args.target, args.selectivity, args.ops, seed)
    live_pks = [table._cols[table.primary_key_column][s].item()
                for s in np.nonzero(table._live[: table.slot_count])[0].tolist()]
    rng.shuffle(live_pks)
    verify = getattr(args, "verify", False)
    mismatches = 0
    ops = rng.random(args.ops)
    insert_i = 0
    t0 = perf_counter()
    for i in range(args.ops):
        r = ops[i]
        if r < 0.4:
            slots, _ = lookup(preds[i])
            if verify:
                expected = scan_oracle(table, preds[i])
                if slots.shape != expected.shape or not np.array_equal(slots, expected):
                    mismatches += 1
        elif r < 0.8 and insert_i < len(rows):
            row = rows[insert_i]
            insert_i += 1
            engine.insert(row)
            live_pks.append(row[table.primary_key_column])
        elif live_pks:
            engine.delete(live_pks.pop())
    elapsed = perf_counter() - t0
    return {
        "ops_measured": args.ops,
        "elapsed_s": elapsed,
        "throughput_ops_per_s": args.ops / elapsed if elapsed > 0 else 0.0,
        "verify": {"enabled": bool(verify), "mismatches": mismatches},
    }


def cmd_bench(args) -> int:
    seed = _effective_seed(args)
    table = read_table(args.data, id_scheme=args.scheme)
    engine = Engine(table)
    overrides = _parse_params(args.params)
    handles = _build_engine_indexes(engine, args, overrides, seed)
    config = {
        "data": args.data,
        "index": args.index,
        "workload": args.workload,
        "selectivity": args.selectivity,
        "ops": args.ops,
        "scheme": args.scheme,
        "seed": seed,
        "indexes": args.indexes,
        "threads": args.threads,
        "params": overrides,
    }
    if args.workload in ("range", "point"):
        preds = datagen.generate_queries(
            table, args.target, args.selectivity, args.ops, seed, point=args.workload == "point"
        )
        results = _run_lookup_bench(engine, _lookup_fn(engine, handles), preds, args, seed)
    elif args.workload == "insert":
        results = _run_insert_bench(engine, args, seed)
    else:
        results = _run_mixed_bench(engine, _lookup_fn(engine, handles), args, seed)
    results["memory"] = engine.memory_report()
    if handles["hermit"]:
        results["tree_breakdown"] = {
            h.name: h.tree.memory_breakdown() for h in handles["hermit"]
        }
    summary = [
        f"{args.workload} workload on {args.index}: "
        f"{results['throughput_ops_per_s']:.1f} ops/s over {results['ops_measured']} ops",
        f"memory total: {results['memory']['total']} bytes",
    ]
    if results["verify"]["enabled"]:
        summary.append(f"verification mismatches: {results['verify']['mismatches']}")
    _emit_report(args, "bench", config, results, summary)
    if results["verify"]["enabled"] and results["verify"]["mismatches"]:
        return EXIT_VERIFY
    return EXIT_OK


def cmd_reorg_trace(args) -> int:
    seed = _effective_seed(args)
    full = read_table(args.data, id_scheme=args.scheme)
    prefix = max(1, int(full.live_count * args.build_fraction))
    schema = full.schema
    table = Table(schema, full.primary_key_column, args.scheme)
    all_slots = np.nonzero(full._live[: full.slot_count])[0]
    cols = [full._cols[c][all_slots] for c in range(full.ncols)]
    valids = [full._valid[c][all_slots] for c in range(full.ncols)]
    table.append_rows([c[:prefix] for c in cols], [v[:prefix] for v in valids])
    engine = Engine(table)
    overrides = _parse_params(args.params)
    params = _trs_params(overrides)
    index = engine.create_hermit_index(args.target, args.host, params=params, seed=seed)
    for i in range(prefix, all_slots.shape[0]):
        row = [cols[c][i].item() if valids[c][i] else None for c in range(full.ncols)]
        engine.insert(row)
    preds = datagen.generate_queries(table, args.target, args.selectivity, 512, seed)
    tree = index.tree
    initial_queue = len(tree.reorg_queue)
    batch = max(1, math.ceil(initial_queue * args.fraction)) if initial_queue else 0
    trace = []
    t_start = perf_counter()

    def sample(phase: str) -> None:
        ops = 0
        t0 = perf_counter()
        while perf_counter() - t0 < args.interval:
            index.lookup(preds[ops % len(preds)])
            ops += 1
        elapsed = perf_counter() - t0
        trace.append(
            {
                "t": perf_counter() - t_start,
                "phase": phase,
                "throughput_ops_per_s": ops / elapsed if elapsed > 0 else 0.0,
                "memory_total": engine.memory_report()["total"],
                "tree_bytes": tree.memory_bytes(),
                "queue_depth": len(tree.reorg_queue),
            }
        )

    sample("pre")
    stage = 0
    while tree.reorg_queue and (args.stages == 0 or stage < args.stages):
        tree.reorganize(table, batch_limit=batch or None)
        stage += 1
        sample(f"after-reorg-{stage}")
    config = {
        "data": args.data,
        "interval": args.interval,
        "fraction": args.fraction,
        "seed": seed,
        "scheme": args.scheme,
        "build_fraction": args.build_fraction,
    }
    results = {"trace": trace, "stages": stage, "initial_queue": initial_queue}
    summary = [
        f"reorg trace: {stage} stage(s), queue {initial_queue} -> {len(tree.reorg_queue)}",
        f"tree bytes {trace[0]['tree_bytes']} -> {trace[-1]['tree_bytes']}",
    ]
    _emit_report(args, "reorg-trace", config, results, summary)
    return EXIT_OK


def cmd_memory(args) -> int:
    seed = _effective_seed(args)
    overrides = _parse_params(args.params)
    params = _trs_params(overrides)
    hermit_table = read_table(args.data, id_scheme=args.scheme)
    baseline_table = read_table(args.data, id_scheme=args.scheme)
    hermit_engine = Engine(hermit_table)
    baseline_engine = Engine(baseline_table)
    host = hermit_table.column_ordinal(args.host)
    target = hermit_table.column_ordinal(args.target) if args.target is not None else None
    targets = _pick_targets(hermit_table, target, host, args.indexes)
    series = []
    for k, tcol in enumerate(targets, start=1):
        hermit_engine.create_hermit_index(tcol, host, params=params, seed=seed + k)
        baseline_engine.create_baseline_index(tcol)
        series.append(
            {
                "indexes": k,
                "hermit_total": hermit_engine.memory_report()["total"],
                "baseline_total": baseline_engine.memory_report()["total"],
            }
        )
    results = {
        "series": series,
        "hermit_memory": hermit_engine.memory_report(),
        "baseline_memory": baseline_engine.memory_report(),
    }
    config = {"data": args.data, "indexes": args.indexes, "scheme": args.scheme, "seed": seed}
    last = series[-1]
    summary = [
        f"{args.indexes} index(es): hermit {last['hermit_total']} bytes "
        f"vs baseline {last['baseline_total']} bytes "
        f"({100.0 * last['hermit_total'] / last['baseline_total']:.1f}%)"
    ]
    _emit_report(args, "memory", config, results, summary)
    return EXIT_OK


def cmd_kernels(args) -> int:
    seed = _effective_seed(args)
    rng = np.random.default_rng(seed)
    n = args.rows
    ms = np.sort(rng.uniform(0.0, 1e6, n))
    ns = 2.0 * ms + 1.0 + rng.normal(0.0, 10.0, n)
    bounds = np.linspace(0.0, 1e6, 9)[1:-1]
    results = {}
    for name, backend in kernels.available_backends().items():
        timings = {}
        for label, fn in (
            ("fit_line", lambda b=backend: b.fit_line(ms, ns)),
            ("scan_outliers", lambda b=backend: b.scan_outliers(ms, ns, 2.0, 1.0, 30.0, float("inf"))),
            ("route_values", lambda b=backend: b.route_values(ms, bounds)),
        ):
            fn()
            reps = max(1, args.repeats)
            t0 = perf_counter()
            for _ in range(reps):
                fn()
            timings[label] = (perf_counter() - t0) / reps
        results[name] = timings
    summary = [f"kernel backends: {', '.join(results)} (active: {kernels.BACKEND})"]
    for label in ("fit_line", "scan_outliers", "route_values"):
        parts = [f"{name} {timings[label] * 1e6:.1f}us" for name, timings in results.items()]
        if "native" in results and "python" in results and results["native"][label] > 0:
            parts.append(f"speedup x{results['python'][label] / results['native'][label]:.2f}")
        summary.append(f"  {label}: " + ", ".join(parts))
    config = {"rows": n, "seed": seed, "repeats": args.repeats}
    _emit_report(args, "kernels", config, {"timings": results, "active": kernels.BACKEND}, summary)
    return EXIT_OK


# -- parser ----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hermit-bench", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="write a synthetic ingestion file")
    gen.add_argument("--kind", required=True, choices=datagen.KINDS)
    gen.add_argument("--rows", type=int, required=True)
    gen.add_argument("--noise", type=float, default=0.01)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--stocks", type=int, default=4)
    gen.add_argument("--sensors", type=int, default=16)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_generate)

    def add_common(p, need_target=True):
        p.add_argument("--data", required=True)
        p.add_argument("--index", choices=("hermit", "baseline", "cm"), default="hermit")
        p.add_argument("--target", default=None, required=need_target)
        p.add_argument("--host", default=None)
        p.add_argument("--scheme", choices=(LOGICAL, PHYSICAL), default=PHYSICAL)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--params", nargs="*", default=None, metavar="K=V")
        p.add_argument("--json", default=None)

    build = sub.add_parser("build", help="build an index and report statistics")
    add_common(build)
    build.add_argument("--stats", action="store_true")
    build.add_argument("--indexes", type=int, default=1)
    build.set_defaults(func=cmd_build)

    bench = sub.add_parser("bench", help="run a query or mutation workload")
    add_common(bench)
    bench.add_argument("--workload", choices=("range", "point", "insert", "mixed"), default="range")
    bench.add_argument("--selectivity", default=0.001, type=float)
    bench.add_argument("--ops", type=int, default=1000)
    bench.add_argument("--verify", action="store_true")
    bench.add_argument("--threads", type=int, default=1)
    bench.add_argument("--indexes", type=int, default=1)
    bench.set_defaults(func=cmd_bench)

    trace = sub.add_parser("reorg-trace", help="throughput/memory series across staged reorganizations")
    add_common(trace)
    trace.add_argument("--interval", type=float, default=0.5)
    trace.add_argument("--fraction", type=float, default=0.25)
    trace.add_argument("--stages", type=int, default=0, help="0 = drain the queue")
    trace.add_argument("--selectivity", default=0.001, type=float)
    trace.add_argument("--build-fraction", type=float, default=0.05)
    trace.set_defaults(func=cmd_reorg_trace)

    mem = sub.add_parser("memory", help="memory breakdown as index count scales")
    add_common(mem, need_target=False)
    mem.add_argument("--indexes", type=int, default=1)
    mem.set_defaults(func=cmd_memory)

    kern = sub.add_parser("kernels", help="micro-benchmark compiled vs fallback kernels")
    kern.add_argument("--rows", type=int, default=200_000)
    kern.add_argument("--seed", type=int, default=0)
    kern.add_argument("--repeats", type=int, default=5)
    kern.add_argument("--json", default=None)
    kern.set_defaults(func=cmd_kernels)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DataFileError, TableError, FileNotFoundError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
