"""Result accounting and experiment orchestration.

Latencies are normalized against the ideal unloaded completion time of
the block fabric's pipeline, giving one common slowdown scale for every
fabric model on the same trace.  An experiment is a declarative spec
(fabric, workload, load point, cluster shape) that can round-trip
through a flat INI file and always reproduces byte-identical results
for the same seed.
"""

from __future__ import annotations

import configparser
import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

from .baselines import build_fabric
from .core import ClusterConfig, ConfigError, LatencyProfile, MsgKind
from .fabric import CompletionRecord, FabricBase, ideal_completion_ps
from . import workloads as wl

UTIL_SAMPLE_PS = 1_000_000      # one utilization sample per microsecond

SUMMARY_FIELDS = [
    "fabric", "workload", "load", "seed", "n", "n_timeout",
    "mean_ns", "p50_ns", "p99_ns",
    "read_mean_ns", "read_p99_ns", "write_mean_ns", "write_p99_ns",
    "slowdown_mean", "slowdown_p50", "slowdown_p99", "util_mean",
]


def _percentile(sorted_vals: list[float], q: float) -> float:
    """Nearest-rank percentile of an already sorted sample."""
    if not sorted_vals:
        return math.nan
    rank = max(1, math.ceil(q * len(sorted_vals)))
    return sorted_vals[rank - 1]


def normalized_mct(completions: list[CompletionRecord],
                   cfg: ClusterConfig) -> list[float]:
    """Per-request slowdown: measured completion over the unloaded ideal.

    Timed-out requests carry no completion time and are excluded.
    """
    out = []
    for rec in completions:
        if rec.timed_out:
            continue
        ideal = ideal_completion_ps(rec.msg.kind, rec.msg.size_bytes, cfg)
        out.append(rec.latency_ps / ideal)
    return out


def summarize(completions: list[CompletionRecord],
              cfg: ClusterConfig) -> dict:
    """Latency and slowdown statistics for one finished run."""
    done = [r for r in completions if not r.timed_out]
    lat = sorted(r.latency_ps / 1000.0 for r in done)
    reads = sorted(r.latency_ps / 1000.0 for r in done
                   if r.msg.kind is not MsgKind.WREQ)
    writes = sorted(r.latency_ps / 1000.0 for r in done
                    if r.msg.kind is MsgKind.WREQ)
    slow = sorted(normalized_mct(completions, cfg))
    mean = lambda xs: sum(xs) / len(xs) if xs else math.nan
    return {
        "n": len(completions),
        "n_timeout": sum(1 for r in completions if r.timed_out),
        "mean_ns": mean(lat),
        "p50_ns": _percentile(lat, 0.50),
        "p99_ns": _percentile(lat, 0.99),
        "read_mean_ns": mean(reads),
        "read_p99_ns": _percentile(reads, 0.99),
        "write_mean_ns": mean(writes),
        "write_p99_ns": _percentile(writes, 0.99),
        "slowdown_mean": mean(slow),
        "slowdown_p50": _percentile(slow, 0.50),
        "slowdown_p99": _percentile(slow, 0.99),
    }


# ------------------------------------------------------------- experiments

KV_WORKLOADS = {"kv-a": "A", "kv-b": "B", "kv-f": "F"}


@dataclass
class ExperimentSpec:
    """One simulation cell: fabric model x workload x load point."""

    fabric: str = "edm"
    workload: str = "all-to-all"   # all-to-all | profile name | kv-a/b/f | trace path
    load: float = 0.5
    seed: int = 1
    n_messages: int = 0            # exactly one of these two must be set
    duration_ms: float = 0.0
    read_fraction: float = 0.5
    read_bytes: int = 64
    write_bytes: int = 64
    split: float = 0.5             # compute-port share for split-role mixes
    cluster: ClusterConfig = field(default_factory=ClusterConfig)

    # -- flat-file round trip ------------------------------------------------

    def to_ini(self, path) -> None:
        cp = configparser.ConfigParser()
        cp["experiment"] = {f.name: str(getattr(self, f.name))
                            for f in fields(self) if f.name != "cluster"}
        cp["cluster"] = {
            f.name: str(getattr(self.cluster, f.name))
            for f in fields(self.cluster)
            if f.name != "profile" and getattr(self.cluster, f.name) is not None
        }
        cp["latency"] = {f.name: str(getattr(self.cluster.profile, f.name))
                         for f in fields(self.cluster.profile)}
        with open(path, "w") as fh:
            cp.write(fh)

    @classmethod
    def from_ini(cls, path) -> "ExperimentSpec":
        cp = configparser.ConfigParser()
        if not cp.read(path):
            raise ConfigError(f"cannot read experiment file {path}")
        prof = LatencyProfile(**_coerce_section(
            cp, "latency", LatencyProfile()))
        cluster = ClusterConfig(profile=prof, **_coerce_section(
            cp, "cluster", ClusterConfig(), skip=("profile",)))
        spec = cls(cluster=cluster, **_coerce_section(
            cp, "experiment", cls(), skip=("cluster",)))
        return spec


def _coerce_section(cp: configparser.ConfigParser, section: str,
                    reference, skip: tuple = ()) -> dict:
    """Read one INI section, typing each key after the dataclass default."""
    out: dict = {}
    if not cp.has_section(section):
        return out
    for f in fields(reference):
        if f.name in skip or not cp.has_option(section, f.name):
            continue
        default = getattr(reference, f.name)
        raw = cp.get(section, f.name)
        if isinstance(default, bool):
            out[f.name] = cp.getboolean(section, f.name)
        elif isinstance(default, int):
            out[f.name] = int(raw)
        elif isinstance(default, float):
            out[f.name] = float(raw)
        elif default is None:
            out[f.name] = None if raw in ("", "None", "none") else int(raw)
        else:
            out[f.name] = raw
    return out


def make_trace(spec: ExperimentSpec) -> list[wl.TraceRecord]:
    """Generate (or load) the trace an experiment spec describes."""
    c = spec.cluster
    n_msgs = spec.n_messages or None
    dur = round(spec.duration_ms * 1e9) if spec.duration_ms else None
    name = spec.workload
    if name != "all-to-all" and (name.endswith(".csv") or os.sep in name):
        _, records = wl.read_trace(name)
        return records
    if n_msgs is None and dur is None:
        raise ConfigError("set n_messages or duration_ms")
    if n_msgs is not None and dur is not None:
        raise ConfigError("set only one of n_messages and duration_ms")
    common = dict(n_messages=n_msgs, duration_ps=dur,
                  link_gbps=c.link_gbps, chunk_bytes=c.chunk_bytes)
    if name == "all-to-all":
        return wl.gen_all_to_all(c.n_ports, spec.load, spec.read_fraction,
                                 spec.seed, read_bytes=spec.read_bytes,
                                 write_bytes=spec.write_bytes, **common)
    if name in KV_WORKLOADS:
        return wl.gen_kv_profile(KV_WORKLOADS[name], c.n_ports, spec.load,
                                 spec.seed, split=spec.split, **common)
    if name in wl.builtin_profile_names():
        return wl.gen_from_profile(wl.load_profile(name), c.n_ports,
                                   spec.load, spec.seed,
                                   read_fraction=spec.read_fraction,
                                   split=spec.split, **common)
    raise ConfigError(f"unknown workload {spec.workload!r}")


def run_experiment(spec: ExperimentSpec, out_dir=None, *,
                   record_events: bool = False,
                   fabric: FabricBase | None = None) -> dict:
    """Run one cell end to end; optionally write its artifacts."""
    if fabric is None:
        kwargs = {"record_events": True} if (
            record_events and spec.fabric == "edm") else {}
        fabric = build_fabric(spec.fabric, spec.cluster, **kwargs)
    trace = make_trace(spec)
    fabric.submit_trace(trace)
    fabric.sample_utilization(UTIL_SAMPLE_PS)
    fabric.drain()
    summary = summarize(fabric.completions, spec.cluster)
    utils = [u for _, u in fabric.util_series]
    summary["util_mean"] = (sum(utils) / len(utils)) if utils else 0.0
    summary.update(fabric=spec.fabric, workload=spec.workload,
                   load=spec.load, seed=spec.seed)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        spec.to_ini(out / "spec.ini")
        fabric.write_completions(out / "completions.csv")
        fabric.write_utilization(out / "utilization.csv")
        if hasattr(fabric, "write_audit"):
            fabric.write_audit(out / "audit.csv")
        if record_events and getattr(fabric, "switch", None) is not None \
                and getattr(fabric.switch, "events", None) is not None:
            fabric.write_event_log(out / "events.csv")
        with open(out / "summary.txt", "w") as fh:
            for key in SUMMARY_FIELDS:
                fh.write(f"{key} = {summary.get(key)}\n")
    return summary


def _sweep_cell(spec: ExperimentSpec) -> dict:
    return run_experiment(spec)


def sweep(specs: list[ExperimentSpec], out_csv=None,
          jobs: int | None = None) -> list[dict]:
    """Run many cells in parallel worker processes, one summary row each."""
    if jobs == 1 or len(specs) == 1:
        rows = [_sweep_cell(s) for s in specs]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_sweep_cell, specs))
    if out_csv is not None:
        write_summary_csv(out_csv, rows)
    return rows


def write_summary_csv(path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS,
                           extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def read_summary_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ plots

def emit_plots(rows: list[dict], out_dir) -> list[Path]:
    """Render the two standard report figures plus their backing CSVs."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [dict(r) for r in rows]
    for r in rows:
        r["load"] = float(r["load"])
        r["mean_ns"] = float(r["mean_ns"])
        r["slowdown_mean"] = float(r["slowdown_mean"])
    written = []

    by_fabric: dict[str, list[dict]] = {}
    for r in rows:
        by_fabric.setdefault(r["fabric"], []).append(r)

    # Mean latency against offered load, one curve per fabric.
    path = out / "latency_vs_load.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fabric", "load", "mean_ns", "slowdown_mean"])
        for fab in sorted(by_fabric):
            for r in sorted(by_fabric[fab], key=lambda r: r["load"]):
                w.writerow([fab, r["load"], f"{r['mean_ns']:.2f}",
                            f"{r['slowdown_mean']:.4f}"])
    written.append(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for fab in sorted(by_fabric):
        pts = sorted(by_fabric[fab], key=lambda r: r["load"])
        ax.plot([r["load"] for r in pts], [r["mean_ns"] for r in pts],
                marker="o", label=fab)
    ax.set_xlabel("offered load (fraction of link rate)")
    ax.set_ylabel("mean completion latency (ns)")
    ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "latency_vs_load.png", dpi=150)
    plt.close(fig)
    written.append(out / "latency_vs_load.png")

    # Mean slowdown per workload, grouped bars per fabric.
    workloads = sorted({r["workload"] for r in rows})
    fabrics = sorted(by_fabric)
    path = out / "slowdown_by_workload.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["workload", "fabric", "slowdown_mean"])
        for wk in workloads:
            for fab in fabrics:
                cell = [r for r in rows
                        if r["workload"] == wk and r["fabric"] == fab]
                if cell:
                    w.writerow([wk, fab, f"{cell[0]['slowdown_mean']:.4f}"])
    written.append(path)
    fig, ax = plt.subplots(figsize=(max(6, 1.2 * len(workloads)), 4))
    width = 0.8 / max(1, len(fabrics))
    for i, fab in enumerate(fabrics):
        xs, ys = [], []
        for j, wk in enumerate(workloads):
            cell = [r for r in rows
                    if r["workload"] == wk and r["fabric"] == fab]
            if cell:
                xs.append(j + (i - (len(fabrics) - 1) / 2) * width)
                ys.append(cell[0]["slowdown_mean"])
        ax.bar(xs, ys, width=width, label=fab)
    ax.set_xticks(range(len(workloads)))
    ax.set_xticklabels(workloads, rotation=20, ha="right")
    ax.set_ylabel("mean slowdown vs unloaded ideal")
    ax.set_yscale("log")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(out / "slowdown_by_workload.png", dpi=150)
    plt.close(fig)
    written.append(out / "slowdown_by_workload.png")
    return written
