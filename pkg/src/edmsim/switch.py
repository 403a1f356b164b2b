"""Central switch: block classification, in-network matching, circuit forwarding.

Memory blocks are identified in one cycle.  Notification blocks and read
requests feed the matcher; granted data crosses on the ingress->egress
binding the grant installed, with a constant five-cycle pipeline and no
queueing decisions of its own.  Anything else takes the store-and-forward
layer-2 pipeline.

Grant timing: a round triggered by a fresh notification surfaces its
iteration-k grants (3(k-1)+2) cycles later.  Circuit releases are timers
armed at grant time, so the matcher pipelines rounds to complete exactly
on them: a release-triggered grant carries no extra matching latency.
"""

from __future__ import annotations

from collections import defaultdict

from .core import (
    ClusterConfig,
    Chunk,
    MemoryMessage,
    MsgKind,
    ProtocolViolation,
    RMW_RESULT_BYTES,
    SimTime,
    memory_block_count,
)
from .engine import Link, LinkPump, Simulator
from .phy import frame_block_count
from .scheduler import GrantDecision, Scheduler


class SwitchStack:
    """One non-blocking switch with per-port downlinks and a central matcher."""

    def __init__(self, sim: Simulator, cfg: ClusterConfig,
                 record_events: bool = False,
                 record_spans: bool = False) -> None:
        self.sim = sim
        self.cfg = cfg
        self.prof = cfg.profile
        self.sched = Scheduler(cfg.n_ports, cfg.chunk_bytes,
                               cfg.priority_policy, cfg.max_notifications)
        self.downlinks = [Link(cfg, name=f"down{p}", record_spans=record_spans)
                          for p in range(cfg.n_ports)]
        self.down_tx = [LinkPump(sim, link) for link in self.downlinks]
        self.hosts: list = []
        self.events: list[tuple] | None = [] if record_events else None
        self.granted_bytes: dict[tuple[int, int], int] = defaultdict(int)
        self.forwarded_bytes: dict[tuple[int, int], int] = defaultdict(int)
        self.chunks_forwarded = 0
        self.frames_forwarded = 0
        self.grants_emitted = 0
        self.grants_cancelled = 0
        self.iteration_counts: list[int] = []

    def _log(self, kind: str, src: int, dst: int, msg_id: int,
             nbytes: int) -> None:
        if self.events is not None:
            self.events.append((self.sim.now, kind, src, dst, msg_id, nbytes))

    # ------------------------------------------------------- control plane

    def _rx_sched_charge(self) -> SimTime:
        prof = self.prof
        return prof.pcs_ps + prof.cycles_ps(
            prof.classify_cycles + prof.ntf_insert_cycles)

    def on_notification(self, src: int, dst: int, msg_id: int,
                        size_bytes: int) -> None:
        """A write-demand notification block arrived on an uplink."""
        self.sim.after(self._rx_sched_charge(), self._insert,
                       src, dst, msg_id, size_bytes, None)

    def on_request(self, req: MemoryMessage) -> None:
        """A read or read-modify-write request arrived: buffer it and treat it
        as demand for the memory node's response data."""
        if req.kind is MsgKind.RREQ:
            size = req.size_bytes
        elif req.kind is MsgKind.RMWREQ:
            size = RMW_RESULT_BYTES[req.opcode]
        else:
            raise ProtocolViolation(f"{req.kind} does not belong to the scheduler")
        self.sim.after(self._rx_sched_charge(), self._insert,
                       req.dst, req.src, req.msg_id, size, req)

    def _insert(self, src: int, dst: int, msg_id: int, size: int,
                req: MemoryMessage | None) -> None:
        self.sched.on_notification(src, dst, msg_id, size, self.sim.now,
                                   implicit=req is not None, buffered_req=req)
        self._log("NTF", src, dst, msg_id, size)
        self._round(fresh=True)

    # ----------------------------------------------------------- matching

    def _round(self, fresh: bool) -> None:
        """Run matching to maximality and schedule the grant emissions."""
        decisions, iterations = self.sched.run_matching_round(self.sim.now)
        if iterations:
            self.iteration_counts.append(iterations)
        if fresh:
            for d in decisions:
                self.sim.after(self.prof.match_latency_ps(d.iteration),
                               self._emit_grant, d)
        else:
            # Release instants are known a round in advance, so a pipelined
            # round lands on each one and its grants carry no extra latency.
            for d in decisions:
                self._emit_grant(d)

    def _emit_grant(self, d: GrantDecision) -> None:
        g = d.grant
        if self.sched.ports[g.dst].paused:
            # The destination paused after the match: undo and requeue, and
            # rerun matching so the freed source is not stranded idle.
            self.sched.cancel_grant(d)
            self.grants_cancelled += 1
            self._round(fresh=True)
            return
        prof = self.prof
        self.granted_bytes[(g.src, g.dst)] += g.chunk_bytes
        self.grants_emitted += 1
        self._log("GRANT", g.src, g.dst, g.msg_id, g.chunk_bytes)
        ready = self.sim.now + prof.cycles_ps(prof.g_block_gen_cycles) \
            + prof.pcs_ps
        host = self.hosts[g.src]
        if g.first:
            req = d.record.buffered_req
            d.record.buffered_req = None  # later grants are plain /G/ blocks
            self.down_tx[g.src].send(
                ready, memory_block_count(req.data_bytes()),
                host.on_forwarded_request, req, g.chunk_bytes, ctrl=True)
        else:
            self.down_tx[g.src].send(ready, 1, host.on_grant,
                                     g.src, g.dst, g.msg_id, g.chunk_bytes,
                                     g.response, ctrl=True)
        # The circuit frees one chunk-serialization after the grant, letting
        # the next match overlap the transfer it just set up.  The timer
        # covers the chunk's whole wire footprint so successive grants to a
        # busy endpoint space exactly one chunk apart on the wire.
        self.sim.after(self.cfg.chunk_wire_ps(g.chunk_bytes), self._release,
                       g.src, g.dst, g.chunk_bytes)

    def _release(self, src: int, dst: int, take: int) -> None:
        self.sched.release(src, dst)
        self._log("RELEASE", src, dst, -1, take)
        self._round(fresh=False)

    # ---------------------------------------------------------- data plane

    def on_chunk(self, chunk: Chunk, data: bytes | None) -> None:
        """First block of a granted data chunk reached the switch."""
        msg = chunk.msg
        pair = (msg.src, msg.dst)
        self.forwarded_bytes[pair] += chunk.length
        if self.forwarded_bytes[pair] > self.granted_bytes[pair]:
            raise ProtocolViolation(
                f"data on {pair} exceeds granted bytes "
                f"({self.forwarded_bytes[pair]} > {self.granted_bytes[pair]})")
        self.chunks_forwarded += 1
        prof = self.prof
        ready = self.sim.now + 2 * prof.pcs_ps + prof.cycles_ps(
            prof.classify_cycles + prof.forward_cycles)
        self.down_tx[msg.dst].send(ready, memory_block_count(chunk.length),
                                   self.hosts[msg.dst].on_chunk, chunk, data)

    # ------------------------------------------------------- flow control

    def on_pause(self, port: int) -> None:
        self.sim.after(self.prof.pcs_ps
                       + self.prof.cycles_ps(self.prof.classify_cycles),
                       self._apply_pause, port)

    def _apply_pause(self, port: int) -> None:
        self.sched.pause(port)
        self._log("PAUSE", port, port, -1, 0)

    def on_resume(self, port: int) -> None:
        self.sim.after(self.prof.pcs_ps
                       + self.prof.cycles_ps(self.prof.classify_cycles),
                       self._apply_resume, port)

    def _apply_resume(self, port: int) -> None:
        self.sched.resume(port)
        self._log("RESUME", port, port, -1, 0)
        self._round(fresh=True)

    # ------------------------------------------------------ layer-2 frames

    def on_frame(self, src: int, dst: int, nbytes: int) -> None:
        """A fully received non-memory frame enters the layer-2 pipeline."""
        self.frames_forwarded += 1
        ready = self.sim.now + self.prof.l2_path_ps
        self.down_tx[dst].send(ready, frame_block_count(nbytes),
                               self.hosts[dst].on_frame, src, nbytes)

    # ------------------------------------------------------------- queries

    def audit_rows(self) -> list[tuple[int, int, int, int]]:
        """(src, dst, granted, forwarded) per pair, sorted."""
        pairs = sorted(set(self.granted_bytes) | set(self.forwarded_bytes))
        return [(s, d, self.granted_bytes[(s, d)],
                 self.forwarded_bytes[(s, d)]) for s, d in pairs]
