"""Endpoint stack: message queue, grant handling, data generation and receive.

Every port runs the same stack; a node acts as a compute node for requests
it submits and as a memory node for requests addressed to it.  Pipeline
stage costs are latency offsets at the configured clock; data generation
feeds the uplink at line rate once the pipeline is filled.

Write path: submit -> notification block -> (grant) -> data chunks.
Read path: submit -> request block (which doubles as the demand
notification) -> the buffered request comes back as the first grant at the
memory node -> response chunks flow under further grants.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .core import (
    Chunk,
    ClusterConfig,
    MAX_MSG_IDS,
    MemoryMessage,
    MsgKind,
    ProtocolViolation,
    RMW_ARG_BYTES,
    RMW_RESULT_BYTES,
    RmwOpcode,
    SimTime,
    memory_block_count,
)
from .engine import Link, LinkPump, Simulator
from .phy import frame_block_count


@dataclass(slots=True)
class _OutState:
    """A message this node is the data source for, awaiting grants."""

    msg: MemoryMessage
    next_offset: int = 0
    data: bytes | None = None


@dataclass(slots=True)
class _InState:
    """A message this node is receiving."""

    msg: MemoryMessage
    received: int = 0
    payload: list = field(default_factory=list)


@dataclass(slots=True)
class _PendingRead:
    msg: MemoryMessage
    expect_bytes: int
    epoch: int
    result: bytes | None = None
    timer: object = None         # armed failure-path timeout event
    timed_out: bool = False      # NULL already returned; awaiting drain


class HostStack:
    """One endpoint port: TX message queue, grant queue, RX reassembly."""

    def __init__(self, sim: Simulator, cfg: ClusterConfig, port: int,
                 switch, fabric) -> None:
        self.sim = sim
        self.cfg = cfg
        self.prof = cfg.profile
        self.port = port
        self.switch = switch
        self.fabric = fabric
        self.uplink = Link(cfg, name=f"up{port}", record_spans=False)
        self.tx = LinkPump(sim, self.uplink)
        self.msgq: deque[MemoryMessage] = deque()
        self._pump_scheduled = False
        # Sender-side state.  Writes this node initiated and responses it is
        # serving live in separate tables: a grant names (pair, id, class),
        # and ids are only unique within their class.
        self.out_table: dict[tuple[int, int], _OutState] = {}
        self.resp_table: dict[tuple[int, int], _OutState] = {}
        self.notified_writes: dict[int, int] = {}    # dst -> active records
        self.outstanding_reads: dict[int, int] = {}  # mem peer -> active reads
        self.pending_reads: dict[tuple[int, int], _PendingRead] = {}
        self._id_counter: dict[int, int] = {}        # peer -> next id
        self._ids_in_flight: dict[int, set[int]] = {}
        self._read_epoch = 0
        # Receiver-side state.
        self.in_table: dict[tuple[int, int], _InState] = {}
        self.mem_words: dict[int, int] = {}          # word-addressed memory
        self.rx_occupancy = 0
        self._rx_last_update: SimTime = 0
        self.rx_paused = False
        self.serve_reads = True                      # test hook: fail injection
        self.null_responses: list[tuple[SimTime, int, int]] = []
        self.dropped_late = 0

    # ------------------------------------------------------------------ API

    def submit(self, kind: MsgKind, dst: int, addr: int = 0,
               size_bytes: int = 64, opcode: RmwOpcode | None = None,
               payload: bytes | None = None) -> int:
        """Queue one memory message; returns its wire message id.

        Ids rotate per peer modulo the 8-bit id space; emission stalls in
        simulated time while the id is still in flight.
        """
        if kind is MsgKind.RRES:
            raise ProtocolViolation("responses are generated, not submitted")
        if kind is MsgKind.RMWREQ:
            if opcode is None:
                raise ProtocolViolation("RMW submit needs an opcode")
            size_bytes = RMW_ARG_BYTES[opcode]
            if payload is None:
                payload = addr.to_bytes(8, "big").ljust(size_bytes, b"\x00")
            elif len(payload) != size_bytes:
                raise ProtocolViolation(
                    f"{opcode.value} arguments must be {size_bytes} bytes")
        nxt = self._id_counter.get(dst, 0)
        self._id_counter[dst] = (nxt + 1) % MAX_MSG_IDS
        msg = MemoryMessage(kind=kind, src=self.port, dst=dst, msg_id=nxt,
                            size_bytes=size_bytes, addr=addr, opcode=opcode,
                            payload=payload, submit_ps=self.sim.now)
        self.fabric.register(msg)
        self.msgq.append(msg)
        self._pump()
        return nxt

    # ------------------------------------------------------------- TX pump

    def _pump(self) -> None:
        if not self._pump_scheduled:
            self._pump_scheduled = True
            self.sim.after(0, self._pump_now)

    def _pump_now(self) -> None:
        self._pump_scheduled = False
        blocked: set[int] = set()
        progressed = deque()
        while self.msgq:
            msg = self.msgq.popleft()
            if msg.dst in blocked or not self._can_emit(msg):
                blocked.add(msg.dst)
                progressed.append(msg)
                continue
            self._emit(msg)
        self.msgq.extend(progressed)

    def _can_emit(self, msg: MemoryMessage) -> bool:
        ids = self._ids_in_flight.setdefault(msg.dst, set())
        if msg.msg_id in ids:
            return False
        limit = self.cfg.max_notifications
        if msg.kind is MsgKind.WREQ:
            return self.notified_writes.get(msg.dst, 0) < limit
        return self.outstanding_reads.get(msg.dst, 0) < limit

    def _emit(self, msg: MemoryMessage) -> None:
        """Dequeue one message: generate its notification/request block."""
        prof = self.prof
        ready = self.sim.now + prof.cycles_ps(prof.ntf_gen_cycles)
        self._ids_in_flight[msg.dst].add(msg.msg_id)
        if msg.kind is MsgKind.WREQ:
            self.notified_writes[msg.dst] = self.notified_writes.get(msg.dst, 0) + 1
            self.out_table[(msg.dst, msg.msg_id)] = _OutState(
                msg, data=msg.payload)
            self.tx.send(ready + prof.pcs_ps, 1, self.switch.on_notification,
                         msg.src, msg.dst, msg.msg_id, msg.size_bytes,
                         ctrl=True)
        else:  # RREQ / RMWREQ ride ungranted; they are the demand signal
            self.outstanding_reads[msg.dst] = (
                self.outstanding_reads.get(msg.dst, 0) + 1)
            expect = (msg.size_bytes if msg.kind is MsgKind.RREQ
                      else RMW_RESULT_BYTES[msg.opcode])
            self._read_epoch += 1
            pend = _PendingRead(msg, expect, self._read_epoch)
            self.pending_reads[(msg.dst, msg.msg_id)] = pend
            nblocks = memory_block_count(msg.data_bytes())
            self.tx.send(ready + prof.pcs_ps, nblocks,
                         self.switch.on_request, msg, ctrl=True)
            pend.timer = self.sim.after(self.cfg.read_timeout_ps,
                                        self._read_timeout,
                                        msg.dst, msg.msg_id, pend.epoch)

    # -------------------------------------------------------- grant path

    def on_grant(self, src: int, dst: int, msg_id: int, chunk_bytes: int,
                 response: bool = False) -> None:
        """A grant block arrived; look up the message and push one chunk."""
        prof = self.prof
        if src != self.port:
            raise ProtocolViolation(f"grant for port {src} delivered to {self.port}")
        table = self.resp_table if response else self.out_table
        state = table.get((dst, msg_id))
        if state is None:
            raise ProtocolViolation(
                f"grant for unknown message ({src}->{dst} id {msg_id})")
        ready = self.sim.now + prof.pcs_ps + prof.cycles_ps(
            prof.g_block_proc_cycles + prof.grant_q_read_cycles
            + prof.mdata_gen_cycles)
        self._send_chunk(state, chunk_bytes, ready)

    def _send_chunk(self, state: _OutState, length: int,
                    ready: SimTime) -> None:
        msg = state.msg
        if state.next_offset + length > msg.data_bytes():
            raise ProtocolViolation("grant exceeds remaining payload")
        data = None
        if state.data is not None:
            data = state.data[state.next_offset:state.next_offset + length]
        chunk = Chunk(msg, state.next_offset, length)
        state.next_offset += length
        self.tx.send(ready + self.prof.pcs_ps, memory_block_count(length),
                     self.switch.on_chunk, chunk, data, at_first=True)
        if state.next_offset == msg.data_bytes():
            if msg.kind is MsgKind.RRES:
                self.resp_table.pop((msg.dst, msg.msg_id), None)
            else:
                del self.out_table[(msg.dst, msg.msg_id)]
                n = self.notified_writes.get(msg.dst, 0) - 1
                self.notified_writes[msg.dst] = max(0, n)
                self._free_id(msg.dst, msg.msg_id, if_sender_done=True)
                self._pump()

    def _free_id(self, peer: int, msg_id: int, *, if_sender_done: bool) -> None:
        ids = self._ids_in_flight.get(peer)
        if ids is not None:
            ids.discard(msg_id)

    # ---------------------------------------------------- memory-node side

    def on_forwarded_request(self, req: MemoryMessage,
                             first_chunk_bytes: int) -> None:
        """The buffered request arrives, acting as the response's first grant."""
        prof = self.prof
        if req.dst != self.port:
            raise ProtocolViolation("request forwarded to the wrong port")
        base = self.sim.now + prof.pcs_ps + prof.cycles_ps(
            prof.g_block_proc_cycles + prof.rreq_to_memctrl_extra_cycles)
        if not self.serve_reads:
            return  # fail-injection hook: the response never materializes
        if req.kind is MsgKind.RREQ:
            size = req.size_bytes
            data = None
            base += prof.dram_ps
        elif req.kind is MsgKind.RMWREQ:
            size = RMW_RESULT_BYTES[req.opcode]
            data = self._execute_rmw(req)
            base += 2 * prof.dram_ps
        else:
            raise ProtocolViolation(f"{req.kind} is not a forwardable request")
        rres = MemoryMessage(kind=MsgKind.RRES, src=self.port, dst=req.src,
                             msg_id=req.msg_id, size_bytes=size,
                             addr=req.addr, payload=data,
                             submit_ps=self.sim.now)
        state = _OutState(rres, data=data)
        if first_chunk_bytes < size:
            self.resp_table[(req.src, req.msg_id)] = state
        ready = base + prof.cycles_ps(
            prof.grant_q_read_cycles + prof.mdata_gen_cycles)
        self._send_chunk(state, min(first_chunk_bytes, size), ready)

    def _execute_rmw(self, req: MemoryMessage) -> bytes:
        """Atomically apply one read-modify-write; node-serial by event order."""
        if req.opcode is RmwOpcode.CAS:
            # Argument payload layout: address, expected, new (8 B each).
            expected = int.from_bytes(req.payload[8:16], "big")
            new = int.from_bytes(req.payload[16:24], "big")
            cur = self.mem_words.get(req.addr, 0)
            if cur == expected:
                self.mem_words[req.addr] = new
                return b"\x01"
            return b"\x00"
        if req.opcode is RmwOpcode.FETCH_ADD:
            addend = int.from_bytes(req.payload[8:16], "big")
            cur = self.mem_words.get(req.addr, 0)
            self.mem_words[req.addr] = (cur + addend) % (1 << 64)
            return cur.to_bytes(8, "big")
        raise ProtocolViolation(f"unknown RMW opcode {req.opcode}")

    # ------------------------------------------------------------ RX path

    def on_chunk(self, chunk: Chunk, data: bytes | None) -> None:
        """Last block of a chunk fully received."""
        prof = self.prof
        msg = chunk.msg
        done_at = self.sim.now + prof.pcs_ps + prof.cycles_ps(
            prof.mdata_rx_proc_cycles)
        if msg.kind is MsgKind.WREQ:
            if msg.dst != self.port:
                raise ProtocolViolation("write chunk delivered to wrong port")
            key = (msg.src, msg.msg_id)
            state = self.in_table.get(key)
            if state is None:
                if chunk.offset != 0:
                    raise ProtocolViolation("write chunk without its head")
                state = self.in_table[key] = _InState(msg)
            if chunk.offset != state.received:
                raise ProtocolViolation(
                    f"out-of-order chunk: offset {chunk.offset}, "
                    f"expected {state.received}")
            state.received += chunk.length
            if state.received == msg.size_bytes:
                del self.in_table[key]
                self.fabric.complete(msg, done_at)
        elif msg.kind is MsgKind.RRES:
            if msg.dst != self.port:
                raise ProtocolViolation("response delivered to wrong port")
            key = (msg.src, msg.msg_id)
            pend = self.pending_reads.get(key)
            if pend is None:
                raise ProtocolViolation(
                    f"response for unknown read ({key})")
            if chunk.offset + chunk.length > pend.expect_bytes:
                raise ProtocolViolation("response exceeds requested bytes")
            if pend.timed_out:
                self.dropped_late += 1
            elif data is not None:
                pend.result = (pend.result or b"") + data
            if chunk.offset + chunk.length == pend.expect_bytes:
                del self.pending_reads[key]
                if pend.timer is not None:
                    self.sim.cancel(pend.timer)
                if pend.timed_out:
                    self._release_read_slot(pend.msg)
                else:
                    if pend.result is not None:
                        pend.msg.payload = pend.result
                    self._finish_read(pend.msg, done_at)
        else:
            raise ProtocolViolation(f"unexpected chunk kind {msg.kind}")
        self._rx_account(chunk.length)

    def _finish_read(self, req: MemoryMessage, done_at: SimTime) -> None:
        self.fabric.complete(req, done_at)
        self._release_read_slot(req)

    def _release_read_slot(self, req: MemoryMessage) -> None:
        n = self.outstanding_reads.get(req.dst, 0) - 1
        self.outstanding_reads[req.dst] = max(0, n)
        self._free_id(req.dst, req.msg_id, if_sender_done=True)
        self._pump()

    def _read_timeout(self, peer: int, msg_id: int, epoch: int) -> None:
        """Return NULL to the requester.  Only the application side completes:
        the id, the per-peer slot, and the demand record at the scheduler stay
        occupied until the response actually drains, so a retry can never
        overflow the notification bound or collide with late data."""
        pend = self.pending_reads.get((peer, msg_id))
        if pend is None or pend.epoch != epoch:
            return
        pend.timed_out = True
        self.null_responses.append((self.sim.now, peer, msg_id))
        self.fabric.read_timed_out(pend.msg, self.sim.now)

    # --------------------------------------------------- non-memory frames

    def send_frame(self, dst: int, nbytes: int) -> None:
        """Transmit one ordinary Ethernet frame through the layer-2 path."""
        self.tx.send(self.sim.now + self.prof.pcs_ps,
                     frame_block_count(nbytes), self.switch.on_frame,
                     self.port, dst, nbytes)

    def on_frame(self, src: int, nbytes: int) -> None:
        at = self.sim.now + self.prof.pcs_ps
        self.fabric.frame_delivered(src, self.port, nbytes, at)

    # -------------------------------------------------- receive flow control

    def _rx_drain(self) -> None:
        rate = self.cfg.rx_drain_gbps
        now = self.sim.now
        if rate <= 0:
            self.rx_occupancy = 0
        else:
            drained = (now - self._rx_last_update) * rate / 8000.0
            self.rx_occupancy = max(0.0, self.rx_occupancy - drained)
        self._rx_last_update = now

    def _rx_account(self, nbytes: int) -> None:
        self._rx_drain()
        self.rx_occupancy += nbytes
        thresh = self.cfg.pause_threshold()
        if self.cfg.rx_drain_gbps > 0 and not self.rx_paused \
                and self.rx_occupancy >= thresh:
            self.rx_paused = True
            self.tx.send(self.sim.now + self.prof.pcs_ps, 1,
                         self.switch.on_pause, self.port, ctrl=True)
            drain_ps = round((self.rx_occupancy - thresh / 2)
                             * 8000 / self.cfg.rx_drain_gbps)
            self.sim.after(max(1, drain_ps), self._maybe_resume)

    def _maybe_resume(self) -> None:
        self._rx_drain()
        if not self.rx_paused:
            return
        if self.rx_occupancy <= self.cfg.pause_threshold() / 2:
            self.rx_paused = False
            self.tx.send(self.sim.now + self.prof.pcs_ps, 1,
                         self.switch.on_resume, self.port, ctrl=True)
        else:
            self.sim.after(self.cfg.slot_ps, self._maybe_resume)
