"""Trace generation: load-controlled microbenchmarks and size-profile mixes.

"Load" everywhere means data-link occupancy: arrival rates are derived
from the traffic's wire footprint (66-bit blocks including per-chunk
delimiters and control blocks), so an offered load of 0.9 puts 0.9 of the
link's block slots in use on the busiest direction.  Every generator is a
pure function of its arguments and seed.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .core import BLOCK_BITS, ConfigError, MsgKind, chunked_block_count

READ_KINDS = (MsgKind.RREQ, MsgKind.RMWREQ)

#: Control blocks riding with one message, by kind: a write costs one
#: notification plus one grant per chunk; a read costs the request block,
#: its forwarded copy, and one grant per chunk beyond the first.
_REQUEST_BLOCKS = {MsgKind.RREQ: 1, MsgKind.WREQ: 1}


@dataclass(slots=True)
class TraceRecord:
    arrival_ps: int
    src: int
    dst: int
    kind: MsgKind
    size_bytes: int


def data_direction_bits(size_bytes: int, chunk_bytes: int) -> int:
    """Wire bits one message's data occupies on each link it crosses,
    plus the single control block that precedes it on that direction."""
    return BLOCK_BITS * (1 + chunked_block_count(size_bytes, chunk_bytes))


def _mean_direction_bits(read_fraction: float, read_bytes: float,
                         write_bytes: float, chunk_bytes: int) -> float:
    """Average per-direction wire bits of one transaction under a
    role-free uniform mix (every port both issues and serves)."""
    rb = data_direction_bits(round(read_bytes), chunk_bytes)
    wb = data_direction_bits(round(write_bytes), chunk_bytes)
    return read_fraction * rb + (1.0 - read_fraction) * wb


def _poisson_arrivals(rng: np.random.Generator, total_rate_per_ps: float,
                      n_messages: int | None,
                      duration_ps: int | None) -> np.ndarray:
    if (n_messages is None) == (duration_ps is None):
        raise ConfigError("give exactly one of n_messages / duration_ps")
    if n_messages is None:
        n_messages = max(1, round(total_rate_per_ps * duration_ps))
    gaps = rng.exponential(1.0 / total_rate_per_ps, size=n_messages)
    arrivals = np.cumsum(gaps)
    if duration_ps is not None:
        arrivals = arrivals[arrivals < duration_ps]
    return np.rint(arrivals).astype(np.int64)


def _uniform_pairs(rng: np.random.Generator, n: int, count: int
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Uniform (src, dst) pairs over n ports with src != dst."""
    src = rng.integers(0, n, size=count)
    dst = rng.integers(0, n - 1, size=count)
    dst = np.where(dst >= src, dst + 1, dst)
    return src, dst


def _records(arrivals, srcs, dsts, kinds, sizes) -> list[TraceRecord]:
    return [TraceRecord(int(a), int(s), int(d), k, int(z))
            for a, s, d, k, z in zip(arrivals, srcs, dsts, kinds, sizes)]


def gen_all_to_all(n_ports: int, load: float, read_fraction: float = 0.5,
                   seed: int = 1, *, n_messages: int | None = None,
                   duration_ps: int | None = None, link_gbps: float = 100.0,
                   chunk_bytes: int = 256, read_bytes: int = 64,
                   write_bytes: int = 64) -> list[TraceRecord]:
    """Fixed-size reads and writes between uniform random port pairs.

    Every port plays both roles, so each uplink and each downlink sees the
    same expected occupancy, equal to ``load``.
    """
    if not 0 <= load <= 1:
        raise ConfigError(f"load {load} outside [0, 1]")
    if load == 0:
        return []
    rng = np.random.default_rng(seed)
    mean_bits = _mean_direction_bits(read_fraction, read_bytes, write_bytes,
                                     chunk_bytes)
    rate_per_source = load * link_gbps / 1000.0 / mean_bits  # msgs per ps
    arrivals = _poisson_arrivals(rng, rate_per_source * n_ports,
                                 n_messages, duration_ps)
    count = len(arrivals)
    srcs, dsts = _uniform_pairs(rng, n_ports, count)
    is_read = rng.random(count) < read_fraction
    kinds = np.where(is_read, MsgKind.RREQ, MsgKind.WREQ)
    sizes = np.where(is_read, read_bytes, write_bytes)
    return _records(arrivals, srcs, dsts, kinds, sizes)


# ---------------------------------------------------------------- profiles

@dataclass(frozen=True)
class CdfProfile:
    """Piecewise log-linear message-size distribution."""

    name: str
    knots: tuple[tuple[int, float], ...]  # (size_bytes, cumulative prob)

    def __post_init__(self) -> None:
        last_p = 0.0
        last_s = 0
        for size, p in self.knots:
            if size <= last_s or p <= last_p:
                raise ConfigError(
                    f"profile {self.name}: knots must strictly increase")
            last_s, last_p = size, p
        if abs(last_p - 1.0) > 1e-9:
            raise ConfigError(f"profile {self.name}: CDF must end at 1.0")

    def sample_sizes(self, count: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-transform sampling, log-linear in size between knots."""
        probs = np.array([p for _, p in self.knots])
        logs = np.log([s for s, _ in self.knots])
        u = rng.random(count)
        sizes = np.exp(np.interp(u, probs, logs))
        return np.maximum(1, np.rint(sizes)).astype(np.int64)

    def mean_size(self) -> float:
        """Closed-form mean of the piecewise log-linear distribution."""
        total = self.knots[0][0] * self.knots[0][1]
        for (s0, p0), (s1, p1) in zip(self.knots, self.knots[1:]):
            total += (p1 - p0) * (s1 - s0) / np.log(s1 / s0)
        return float(total)


def _vector_direction_bits(sizes: np.ndarray, chunk_bytes: int) -> np.ndarray:
    full, rem = np.divmod(sizes, chunk_bytes)
    full_blocks = full * chunked_block_count(chunk_bytes, chunk_bytes)
    rem_blocks = np.where(rem == 0, 0,
                          np.where(rem <= 8, 1, 2 + (rem + 7) // 8))
    return BLOCK_BITS * (1 + full_blocks + rem_blocks)


def mean_profile_direction_bits(profile: CdfProfile, chunk_bytes: int,
                                quadrature: int = 100_000) -> float:
    """Expected per-direction wire bits of one profile-sized message,
    computed by quantile quadrature (deterministic, no sampling)."""
    u = (np.arange(quadrature) + 0.5) / quadrature
    probs = np.array([p for _, p in profile.knots])
    logs = np.log([s for s, _ in profile.knots])
    sizes = np.maximum(1, np.rint(np.exp(np.interp(u, probs, logs))))
    return float(_vector_direction_bits(sizes.astype(np.int64),
                                        chunk_bytes).mean())


def builtin_profile_names() -> list[str]:
    root = resources.files("edmsim") / "data"
    return sorted(p.name[:-4] for p in root.iterdir()
                  if p.name.endswith(".csv"))


def load_profile(name: str) -> CdfProfile:
    """Load a named built-in profile, or a knot CSV by path."""
    path = resources.files("edmsim") / "data" / f"{name}.csv"
    if not path.is_file():
        import os
        if os.path.exists(name):
            path = name
        else:
            raise ConfigError(
                f"unknown profile {name!r}; built-ins: "
                f"{', '.join(builtin_profile_names())}")
    knots = []
    with open(path) as fh:  # type: ignore[arg-type]
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            knots.append((int(row[0]), float(row[1])))
    base = name.rsplit("/", 1)[-1].removesuffix(".csv")
    return CdfProfile(base, tuple(knots))


def _split_pairs(rng: np.random.Generator, n_ports: int, split: float,
                 count: int) -> tuple[np.ndarray, np.ndarray]:
    """Compute-side sources to uniform memory-side destinations."""
    n_compute = max(1, min(n_ports - 1, round(n_ports * split)))
    srcs = rng.integers(0, n_compute, size=count)
    dsts = rng.integers(n_compute, n_ports, size=count)
    return srcs, dsts


def _split_rate(load: float, link_gbps: float, read_fraction: float,
                mean_read_bits: float, mean_write_bits: float,
                n_compute: int, n_memory: int) -> float:
    """Total message rate (per ps) that drives the busiest link-direction
    class to `load` under a compute->memory request pattern."""
    per_dir_cap = link_gbps / 1000.0  # bits per ps
    f, w = read_fraction, 1.0 - read_fraction
    # Bits per transaction on each direction class, for unit total rate.
    compute_up = (w * mean_write_bits + f * BLOCK_BITS) / n_compute
    memory_up = f * mean_read_bits / n_memory
    memory_down = (w * mean_write_bits + f * BLOCK_BITS) / n_memory
    compute_down = f * mean_read_bits / n_compute
    busiest = max(compute_up, memory_up, memory_down, compute_down)
    return load * per_dir_cap / busiest


def gen_from_profile(profile: CdfProfile, n_ports: int, load: float,
                     seed: int = 1, *, n_messages: int | None = None,
                     duration_ps: int | None = None,
                     read_fraction: float = 0.5, split: float = 0.5,
                     link_gbps: float = 100.0,
                     chunk_bytes: int = 256) -> list[TraceRecord]:
    """Equal-proportion reads and writes with profile-distributed sizes,
    issued by compute-side ports against memory-side ports."""
    if load <= 0:
        return []
    rng = np.random.default_rng(seed)
    n_compute = max(1, min(n_ports - 1, round(n_ports * split)))
    n_memory = n_ports - n_compute
    mean_bits = mean_profile_direction_bits(profile, chunk_bytes)
    total_rate = _split_rate(load, link_gbps, read_fraction,
                             mean_bits, mean_bits, n_compute, n_memory)
    arrivals = _poisson_arrivals(rng, total_rate, n_messages, duration_ps)
    count = len(arrivals)
    srcs, dsts = _split_pairs(rng, n_ports, split, count)
    kinds = np.where(rng.random(count) < read_fraction,
                     MsgKind.RREQ, MsgKind.WREQ)
    sizes = profile.sample_sizes(count, rng)
    return _records(arrivals, srcs, dsts, kinds, sizes)


KV_WRITE_FRACTION = {"A": 0.50, "B": 0.05, "F": 1.0 / 3.0}
KV_READ_BYTES = 1024
KV_WRITE_BYTES = 100


def gen_kv_profile(workload: str, n_ports: int, load: float, seed: int = 1,
                   *, n_messages: int | None = None,
                   duration_ps: int | None = None, split: float = 0.5,
                   link_gbps: float = 100.0,
                   chunk_bytes: int = 256) -> list[TraceRecord]:
    """Key-value store mixes: reads fetch 1 KB values, writes carry 100 B;
    the workload letter fixes the write fraction."""
    wf = KV_WRITE_FRACTION.get(workload.upper())
    if wf is None:
        raise ConfigError(f"unknown KV workload {workload!r}; use A, B, or F")
    if load <= 0:
        return []
    rng = np.random.default_rng(seed)
    n_compute = max(1, min(n_ports - 1, round(n_ports * split)))
    n_memory = n_ports - n_compute
    total_rate = _split_rate(
        load, link_gbps, 1.0 - wf,
        data_direction_bits(KV_READ_BYTES, chunk_bytes),
        data_direction_bits(KV_WRITE_BYTES, chunk_bytes),
        n_compute, n_memory)
    arrivals = _poisson_arrivals(rng, total_rate, n_messages, duration_ps)
    count = len(arrivals)
    srcs, dsts = _split_pairs(rng, n_ports, split, count)
    is_write = rng.random(count) < wf
    kinds = np.where(is_write, MsgKind.WREQ, MsgKind.RREQ)
    sizes = np.where(is_write, KV_WRITE_BYTES, KV_READ_BYTES)
    return _records(arrivals, srcs, dsts, kinds, sizes)


# ------------------------------------------------------------- trace files

def write_trace(path, records: list[TraceRecord], *, profile: str = "custom",
                seed: int = 0, n_ports: int = 0,
                link_gbps: float = 100.0) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {profile},{seed},{n_ports},{link_gbps}\n")
        w = csv.writer(fh)
        w.writerow(["arrival_ps", "src", "dst", "kind", "size_bytes"])
        for r in records:
            w.writerow([r.arrival_ps, r.src, r.dst, r.kind.value,
                        r.size_bytes])


def read_trace(path) -> tuple[dict, list[TraceRecord]]:
    with open(path) as fh:
        first = fh.readline().strip()
        meta = {}
        if first.startswith("#"):
            profile, seed, n_ports, gbps = first[1:].strip().split(",")
            meta = {"profile": profile, "seed": int(seed),
                    "n_ports": int(n_ports), "link_gbps": float(gbps)}
        else:
            fh.seek(0)
        records = []
        for row in csv.DictReader(fh):
            records.append(TraceRecord(
                int(row["arrival_ps"]), int(row["src"]), int(row["dst"]),
                MsgKind(row["kind"]), int(row["size_bytes"])))
    return meta, records


def offered_load(records: list[TraceRecord], n_ports: int,
                 link_gbps: float, chunk_bytes: int = 256) -> dict[str, float]:
    """Counting oracle: per-direction wire occupancy implied by a trace."""
    if not records:
        return {"max": 0.0, "mean_uplink": 0.0, "mean_downlink": 0.0}
    up = np.zeros(n_ports)
    down = np.zeros(n_ports)
    for r in records:
        data_bits = BLOCK_BITS * chunked_block_count(r.size_bytes,
                                                     chunk_bytes)
        if r.kind is MsgKind.WREQ:
            up[r.src] += BLOCK_BITS + data_bits  # notification + data
            down[r.src] += BLOCK_BITS            # the grant
            down[r.dst] += data_bits
        else:  # read: response data flows dst -> src
            up[r.src] += BLOCK_BITS              # the request
            down[r.dst] += BLOCK_BITS            # its forwarded copy
            up[r.dst] += data_bits
            down[r.src] += data_bits
    span_ps = max(r.arrival_ps for r in records) + 1
    cap_bits = span_ps * link_gbps / 1000.0
    return {"max": float(max(up.max(), down.max()) / cap_bits),
            "mean_uplink": float(up.mean() / cap_bits),
            "mean_downlink": float(down.mean() / cap_bits)}
