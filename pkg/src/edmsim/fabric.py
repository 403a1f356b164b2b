"""Cluster assembly: endpoint stacks around one switch, plus run bookkeeping.

The fabric owns the completion registry (one record per submitted request,
closed when the last byte lands), feeds traces into the hosts, and writes
the result files.  The analytic unloaded completion time lives here too,
because it is the denominator every loaded result is normalized by.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

from .core import (
    ClusterConfig,
    EdmError,
    MemoryMessage,
    MsgKind,
    ProtocolViolation,
    RMW_ARG_BYTES,
    RMW_RESULT_BYTES,
    RmwOpcode,
    SimTime,
    chunked_block_count,
    memory_block_count,
)
from .engine import Simulator
from .host import HostStack
from .switch import SwitchStack


@dataclass(slots=True)
class CompletionRecord:
    """Lifecycle of one request: submission to last-byte (or timeout)."""

    msg: MemoryMessage
    submit_ps: SimTime
    complete_ps: SimTime = -1
    timed_out: bool = False

    @property
    def done(self) -> bool:
        return self.complete_ps >= 0

    @property
    def latency_ps(self) -> SimTime:
        if not self.done:
            raise EdmError("message has not completed")
        return self.complete_ps - self.submit_ps


def ideal_completion_ps(kind: MsgKind, size_bytes: int, cfg: ClusterConfig,
                        opcode: RmwOpcode | None = None) -> int:
    """Unloaded completion time: pipeline constants plus serialization.

    The serialization term counts the request's blocks on the uplink, its
    forwarded/grant counterpart on a downlink, the data blocks streaming
    cut-through (one extra slot of skew between ingress and egress), all at
    one block per link slot.  Matches an idle-fabric simulation exactly.
    """
    prof = cfg.profile
    if kind is MsgKind.WREQ:
        fixed = prof.unloaded_write_fixed_ps()
        data = size_bytes
        req_blocks = 1  # the demand notification control block
    elif kind is MsgKind.RREQ:
        fixed = prof.unloaded_read_fixed_ps()
        data = size_bytes
        req_blocks = memory_block_count(8)
    elif kind is MsgKind.RMWREQ:
        op = opcode or RmwOpcode.CAS
        fixed = prof.unloaded_read_fixed_ps() + prof.dram_ps
        data = RMW_RESULT_BYTES[op]
        req_blocks = memory_block_count(RMW_ARG_BYTES[op])
    else:
        raise EdmError(f"no unloaded reference for {kind}")
    slots = 2 * req_blocks + chunked_block_count(data, cfg.chunk_bytes) + 1
    return fixed + cfg.slot_ps * slots


class FabricBase:
    """Shared run surface: completion registry, trace feeding, output files.

    Every fabric model (this one and the comparison fabrics) exposes the
    same lifecycle: construct with a ClusterConfig, ``submit_trace``,
    ``run``/``drain``, then read ``completions``.
    """

    name = "fabric"

    def __init__(self, cfg: ClusterConfig) -> None:
        self.cfg = cfg
        self.sim = Simulator(seed=cfg.seed)
        self.completions: list[CompletionRecord] = []
        self._open: dict[int, CompletionRecord] = {}
        self._fed = 0
        self.util_series: list[tuple[SimTime, float]] = []

    # --------------------------------------------------- completion registry

    def register(self, msg: MemoryMessage) -> None:
        self._open[id(msg)] = CompletionRecord(msg=msg,
                                               submit_ps=msg.submit_ps)

    def complete(self, msg: MemoryMessage, at: SimTime) -> None:
        rec = self._open.pop(id(msg), None)
        if rec is None:
            raise ProtocolViolation(
                f"completion for unregistered message {msg.kind} "
                f"{msg.src}->{msg.dst} id {msg.msg_id}")
        rec.complete_ps = at
        self.completions.append(rec)

    def read_timed_out(self, msg: MemoryMessage, at: SimTime) -> None:
        rec = self._open.pop(id(msg), None)
        if rec is None:
            raise ProtocolViolation("timeout for unregistered message")
        rec.complete_ps = at
        rec.timed_out = True
        self.completions.append(rec)

    def open_count(self) -> int:
        return len(self._open)

    # -------------------------------------------------------------- running

    def submit_message(self, kind: MsgKind, src: int, dst: int,
                       size_bytes: int) -> None:
        raise NotImplementedError

    def submit_trace(self, records) -> None:
        """Feed trace records (sorted by arrival) into the model lazily."""
        it = iter(records)
        self._feed_next(it)

    def _feed_next(self, it) -> None:
        rec = next(it, None)
        if rec is None:
            return
        at = max(self.sim.now, rec.arrival_ps)
        self.sim.schedule(at, self._submit_record, rec, it)

    def _submit_record(self, rec, it) -> None:
        kind = rec.kind if isinstance(rec.kind, MsgKind) else MsgKind(rec.kind)
        self.submit_message(kind, rec.src, rec.dst, rec.size_bytes)
        self._fed += 1
        self._feed_next(it)

    def run(self, until: SimTime | None = None) -> None:
        self.sim.run(until=until)

    def drain(self) -> None:
        """Run until every event has dispatched and no request is open."""
        self.sim.run()
        if self._open:
            raise EdmError(f"{len(self._open)} requests never completed")

    # ---------------------------------------------------------- utilization

    def _busy_links(self) -> list:
        """Links whose busy time contributes to the utilization series."""
        return []

    def sample_utilization(self, period_ps: int) -> None:
        """Periodically record mean link occupancy over the last period.

        The sampler re-arms only while other events remain, so it never
        keeps an otherwise-finished run alive.
        """
        links = self._busy_links()
        if not links:
            return
        state = {"busy": sum(l.busy_ps for l in links), "at": self.sim.now}

        def tick() -> None:
            busy = sum(l.busy_ps for l in links)
            span = (self.sim.now - state["at"]) * len(links)
            if span > 0:
                self.util_series.append(
                    (self.sim.now, (busy - state["busy"]) / span))
            state["busy"], state["at"] = busy, self.sim.now
            if self.sim.pending():
                self.sim.after(period_ps, tick)

        self.sim.after(period_ps, tick)

    # --------------------------------------------------------------- output

    def write_completions(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["submit_ps", "complete_ps", "kind", "src", "dst",
                        "id", "bytes"])
            for rec in self.completions:
                m = rec.msg
                w.writerow([rec.submit_ps, rec.complete_ps, m.kind.value,
                            m.src, m.dst, m.msg_id,
                            0 if rec.timed_out else m.size_bytes])

    def write_utilization(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ps", "mean_link_utilization"])
            for at, util in self.util_series:
                w.writerow([at, f"{util:.6f}"])


class EdmFabric(FabricBase):
    """All endpoint stacks and the switch of one cluster, one event loop."""

    name = "edm"

    def __init__(self, cfg: ClusterConfig, record_events: bool = False,
                 record_spans: bool = False) -> None:
        super().__init__(cfg)
        self.switch = SwitchStack(self.sim, cfg, record_events=record_events,
                                  record_spans=record_spans)
        self.hosts = [HostStack(self.sim, cfg, p, self.switch, self)
                      for p in range(cfg.n_ports)]
        self.switch.hosts = self.hosts
        self.frames: list[tuple[int, int, int, SimTime]] = []

    def host(self, port: int) -> HostStack:
        return self.hosts[port]

    def submit_message(self, kind: MsgKind, src: int, dst: int,
                       size_bytes: int) -> None:
        self.hosts[src].submit(kind, dst, size_bytes=size_bytes)

    def frame_delivered(self, src: int, dst: int, nbytes: int,
                        at: SimTime) -> None:
        self.frames.append((src, dst, nbytes, at))

    def _busy_links(self) -> list:
        return ([h.uplink for h in self.hosts]
                + list(self.switch.downlinks))

    # --------------------------------------------------------------- output

    def write_event_log(self, path) -> None:
        if self.switch.events is None:
            raise EdmError("run the fabric with record_events=True first")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time_ps", "event", "src", "dst", "id", "bytes"])
            w.writerows(self.switch.events)

    def write_audit(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["src", "dst", "granted_bytes", "forwarded_bytes"])
            w.writerows(self.switch.audit_rows())
