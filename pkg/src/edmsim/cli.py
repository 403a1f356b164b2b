"""Command-line front end: trace generation, single runs, parameter
sweeps, report plots, and the reference-latency self-check."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .core import ClusterConfig, MsgKind, REFERENCE_UNLOADED_NS
from .fabric import EdmFabric
from .metrics import (ExperimentSpec, emit_plots, make_trace,
                      read_summary_csv, run_experiment, sweep)
from . import workloads as wl


def _cluster_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--nodes", type=int, default=144,
                   help="number of fabric ports (default %(default)s)")
    p.add_argument("--link-gbps", type=float, default=100.0,
                   help="per-port link rate (default %(default)s)")
    p.add_argument("--chunk-bytes", type=int, default=256,
                   help="scheduler grant size (default %(default)s)")
    p.add_argument("--max-notifications", type=int, default=3,
                   help="outstanding requests per port pair "
                        "(default %(default)s)")
    p.add_argument("--policy", choices=("fcfs", "srpt"), default="srpt",
                   help="notification priority policy (default %(default)s)")
    p.add_argument("--seed", type=int, default=1,
                   help="RNG seed (default %(default)s)")


def _workload_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--workload", default="all-to-all",
                   help="all-to-all, a size profile name, kv-a/kv-b/kv-f, "
                        "or a trace CSV path (default %(default)s)")
    p.add_argument("--load", type=float, default=0.5,
                   help="offered load as a fraction of link rate "
                        "(default %(default)s)")
    p.add_argument("--messages", type=int, default=0,
                   help="trace length in messages (alternative to "
                        "--duration-ms)")
    p.add_argument("--duration-ms", type=float, default=0.0,
                   help="trace span in simulated milliseconds")
    p.add_argument("--read-fraction", type=float, default=0.5)
    p.add_argument("--read-bytes", type=int, default=64)
    p.add_argument("--write-bytes", type=int, default=64)
    p.add_argument("--split", type=float, default=0.5,
                   help="compute-port share for split-role workloads")


def _cluster_of(args) -> ClusterConfig:
    return ClusterConfig(n_ports=args.nodes, link_gbps=args.link_gbps,
                         chunk_bytes=args.chunk_bytes,
                         max_notifications=args.max_notifications,
                         priority_policy=args.policy, seed=args.seed)


def _spec_of(args, fabric: str | None = None) -> ExperimentSpec:
    workload = getattr(args, "trace", None) or args.workload
    messages = args.messages
    if not messages and not args.duration_ms and workload == "all-to-all":
        messages = 100_000
    return ExperimentSpec(
        fabric=fabric or getattr(args, "fabric", "edm"),
        workload=workload, load=args.load, seed=args.seed,
        n_messages=messages, duration_ms=args.duration_ms,
        read_fraction=args.read_fraction, read_bytes=args.read_bytes,
        write_bytes=args.write_bytes, split=args.split,
        cluster=_cluster_of(args))


def _cmd_gen_trace(args) -> int:
    spec = _spec_of(args)
    records = make_trace(spec)
    wl.write_trace(args.out, records, profile=spec.workload,
                   seed=spec.seed, n_ports=spec.cluster.n_ports,
                   link_gbps=spec.cluster.link_gbps)
    print(f"wrote {len(records)} records to {args.out}")
    return 0


def _cmd_run(args) -> int:
    if args.spec:
        spec = ExperimentSpec.from_ini(args.spec)
    else:
        spec = _spec_of(args)
    summary = run_experiment(spec, out_dir=args.out,
                             record_events=args.record_events)
    for key in ("fabric", "workload", "load", "n", "n_timeout", "mean_ns",
                "p99_ns", "slowdown_mean", "slowdown_p99", "util_mean"):
        print(f"{key} = {summary[key]}")
    if args.out:
        print(f"artifacts in {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    fabrics = args.fabrics.split(",")
    workloads = args.workloads.split(",")
    loads = [float(x) for x in args.loads.split(",")]
    specs = []
    for wk in workloads:
        for load in loads:
            for fab in fabrics:
                base = _spec_of(args, fabric=fab)
                specs.append(replace(base, workload=wk, load=load))
    rows = sweep(specs, out_csv=args.out, jobs=args.jobs)
    print(f"wrote {len(rows)} summary rows to {args.out}")
    return 0


def _cmd_plot(args) -> int:
    rows = read_summary_csv(args.summary)
    written = emit_plots(rows, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_verify_table1(args) -> int:
    cfg = ClusterConfig(n_ports=args.nodes)
    # The unloaded references exclude serialization: one request block and
    # its forwarded/granted copy, eight data blocks plus start/terminate,
    # and the one-slot cut-through skew between uplink and downlink.
    ser_ps = 13 * cfg.slot_ps
    failed = False
    for kind, key in ((MsgKind.RREQ, "read"), (MsgKind.WREQ, "write")):
        fab = EdmFabric(cfg)
        fab.submit_message(kind, 0, 1, 64)
        fab.drain()
        got_ns = (fab.completions[0].latency_ps - ser_ps) / 1000.0
        ref_ns = REFERENCE_UNLOADED_NS[key]
        ok = round(got_ns * 1000) == round(ref_ns * 1000)
        failed |= not ok
        print(f"{key:5s} fixed-path {got_ns:.2f} ns  "
              f"reference {ref_ns:.2f} ns  {'OK' if ok else 'FAIL'}")
    return 1 if failed else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="edmsim",
        description="Discrete-event simulator for a block-granular "
                    "memory-disaggregation fabric and its baselines.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-trace", help="generate a workload trace CSV")
    _cluster_flags(p)
    _workload_flags(p)
    p.add_argument("--out", required=True, help="output trace path")
    p.set_defaults(fn=_cmd_gen_trace)

    p = sub.add_parser("run", help="run one experiment cell")
    _cluster_flags(p)
    _workload_flags(p)
    p.add_argument("--fabric", default="edm",
                   help="fabric model name (default %(default)s)")
    p.add_argument("--trace", default=None,
                   help="run a pre-generated trace CSV instead of a "
                        "generated workload")
    p.add_argument("--spec", default=None,
                   help="load the full experiment from an INI file")
    p.add_argument("--record-events", action="store_true",
                   help="record the scheduler event log (block fabric only)")
    p.add_argument("--out", default=None, help="artifact directory")
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("sweep", help="run a fabric x workload x load grid")
    _cluster_flags(p)
    _workload_flags(p)
    p.add_argument("--fabrics", default="edm",
                   help="comma-separated fabric names (default %(default)s)")
    p.add_argument("--workloads", default="all-to-all",
                   help="comma-separated workload names")
    p.add_argument("--loads", default="0.1,0.3,0.5,0.7,0.9",
                   help="comma-separated load points (default %(default)s)")
    p.add_argument("--jobs", type=int, default=None,
                   help="parallel worker processes (default: all cores)")
    p.add_argument("--out", required=True, help="summary CSV path")
    p.set_defaults(fn=_cmd_sweep)

    p = sub.add_parser("plot", help="render figures from a sweep summary")
    p.add_argument("--summary", required=True, help="sweep summary CSV")
    p.add_argument("--out", default="plots", help="figure directory")
    p.set_defaults(fn=_cmd_plot)

    p = sub.add_parser("verify-table1",
                       help="check simulated unloaded latency against the "
                            "reference pipeline numbers")
    p.add_argument("--nodes", type=int, default=16)
    p.set_defaults(fn=_cmd_verify_table1)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
