"""Reactive end-host congestion control over a store-and-forward switch.

One transport core serves three fabric models:

- ``dctcp``    ECN marking past a queue threshold; senders scale their
               window by the marked fraction each window round trip.
- ``pfabric``  Same transport, but egress queues dequeue the flow with
               the least remaining bytes first and, when full, drop the
               frame of the largest-remaining flow.  Lost frames are
               recovered by a retransmission timeout.
- ``pfc``      Lossless variant: per-ingress buffers pause the sender
               above a threshold, and a full egress queue head-of-line
               blocks every ingress holding a frame for it.  Senders
               keep the ECN window response as the rate control.

Frames are byte-fluid; acknowledgements ride a fixed-latency reverse
path and do not contend with data.
"""

from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass, field

from ..core import ClusterConfig, SimTime
from .base import BaselineFabric, ByteLink, Flow, frame_wire_bytes

MSS = 1482                      # payload bytes per full frame


@dataclass(slots=True)
class _Frame:
    flow: Flow
    st: "_Transport"
    idx: int
    payload: int
    wire: int
    prio: int                   # flow bytes left to send when emitted
    seq: int = 0                # egress-arrival order, the priority tie-break
    ecn: bool = False


@dataclass(slots=True)
class _Transport:
    flow: Flow
    cwnd: int
    inflight: int = 0
    acked: int = 0              # bytes acknowledged in the current window
    marked: int = 0             # ... of which carried an ECN mark
    window: int = 0             # bytes that close out the current window
    alpha: float = 0.0
    slow_start: bool = True
    next_idx: int = 0
    retx: deque[int] = field(default_factory=deque)
    acked_idx: set[int] = field(default_factory=set)
    delivered_idx: set[int] = field(default_factory=set)
    counted: set[int] = field(default_factory=set)  # idx held in `inflight`

    def sendable(self) -> bool:
        return bool(self.retx) or self.next_idx < len(self.flow.frames)

    def done(self) -> bool:
        return len(self.acked_idx) == len(self.flow.frames)


class ReactiveFabric(BaselineFabric):
    """ECN-window transport with configurable queueing discipline."""

    name = "dctcp"
    priority_dequeue = False    # dequeue least-remaining first, drop largest
    lossless_pause = False      # per-ingress pause instead of drops

    init_window = 10 * MSS
    ecn_thresh = 24_576         # wire bytes queued at egress before marking
    ecn_gain = 1 / 16
    rto_ps = 50_000_000         # retransmission timeout, 50 us
    egress_cap = 36_000         # wire bytes per egress queue when droppable
    pfc_egress_cap = 6_016      # four full frames when lossless
    pfc_pause_bytes = 16_384
    pfc_resume_bytes = 8_192

    def __init__(self, cfg: ClusterConfig) -> None:
        super().__init__(cfg)
        n = cfg.n_ports
        self.uplinks = [ByteLink(cfg.link_gbps) for _ in range(n)]
        self.downlinks = [ByteLink(cfg.link_gbps) for _ in range(n)]
        self._active: list[list[_Transport]] = [[] for _ in range(n)]
        self._rr = [0] * n
        self._tx_busy = [False] * n
        self._egress: list = [self._new_queue() for _ in range(n)]
        self._egress_bytes = [0] * n
        self._egress_busy = [False] * n
        self._frame_seq = 0
        self.frames_dropped = 0
        # Lossless-variant state.
        self._ingress: list[deque[_Frame]] = [deque() for _ in range(n)]
        self._ingress_bytes = [0] * n
        self._paused = [False] * n
        self._waiting_on: list[set[int]] = [set() for _ in range(n)]
        lat = cfg.profile
        self._hop_ps = lat.hop_fixed_ps()
        self._switch_ps = lat.l2_path_ps
        # Fixed reverse-path delay for an acknowledgement frame.
        self._ack_ps = (self.uplinks[0].tx_ps(frame_wire_bytes(0))
                        + self._switch_ps + 2 * self._hop_ps)

    def _new_queue(self):
        return [] if self.priority_dequeue else deque()

    def _busy_links(self) -> list[ByteLink]:
        return self.uplinks + self.downlinks

    def _cap(self) -> int:
        return self.pfc_egress_cap if self.lossless_pause else self.egress_cap

    # -- sender --------------------------------------------------------------

    def start_flow(self, flow: Flow) -> None:
        st = _Transport(flow=flow, cwnd=self.init_window)
        st.window = st.cwnd
        self._active[flow.src].append(st)
        self._tx_pump(flow.src)

    def _pick(self, src: int) -> _Transport | None:
        flows = self._active[src]
        self._active[src] = flows = [st for st in flows if not st.done()]
        if not flows:
            return None
        start = self._rr[src] % len(flows)
        for off in range(len(flows)):
            st = flows[(start + off) % len(flows)]
            if st.sendable() and st.inflight < st.cwnd:
                self._rr[src] = start + off + 1
                return st
        return None

    def _tx_pump(self, src: int) -> None:
        if self._tx_busy[src] or self._paused[src]:
            return
        st = self._pick(src)
        if st is None:
            return
        frame = self._next_frame(st)
        self._tx_busy[src] = True
        _, end = self.uplinks[src].enqueue(self.sim.now, frame.wire)
        self.sim.schedule(end, self._tx_done, src, st, frame)

    def _next_frame(self, st: _Transport) -> _Frame:
        flow = st.flow
        if st.retx:
            idx = st.retx.popleft()
        else:
            idx = st.next_idx
            st.next_idx += 1
            flow.remaining -= flow.frames[idx]
        payload = flow.frames[idx]
        if idx not in st.counted:
            st.counted.add(idx)
            st.inflight += payload
        return _Frame(flow=flow, st=st, idx=idx, payload=payload,
                      wire=frame_wire_bytes(payload),
                      prio=flow.remaining)

    def _tx_done(self, src: int, st: _Transport, frame: _Frame) -> None:
        self._tx_busy[src] = False
        self.sim.after(self.rto_ps, self._rto, st, frame)
        # The forwarding pipeline is charged up front; in the lossless
        # variant the frame then sits in its ingress buffer until the
        # egress queue has room, so egress occupancy stays exact.
        target = (self._ingress_enqueue if self.lossless_pause
                  else self._egress_enqueue)
        self.sim.schedule(self.sim.now + self._hop_ps + self._switch_ps,
                          target, frame)
        self._tx_pump(src)

    # -- lossless ingress stage ----------------------------------------------

    def _ingress_enqueue(self, frame: _Frame) -> None:
        src = frame.flow.src
        self._ingress[src].append(frame)
        self._ingress_bytes[src] += frame.wire
        if self._ingress_bytes[src] >= self.pfc_pause_bytes:
            self._paused[src] = True
        self._ingress_pump(src)

    def _ingress_pump(self, src: int) -> None:
        q = self._ingress[src]
        while q:
            frame = q[0]
            e = frame.flow.dst
            if self._egress_bytes[e] + frame.wire > self._cap():
                self._waiting_on[e].add(src)
                break
            q.popleft()
            self._ingress_bytes[src] -= frame.wire
            self._egress_enqueue(frame)
        if (self._paused[src]
                and self._ingress_bytes[src] <= self.pfc_resume_bytes):
            self._paused[src] = False
            self._tx_pump(src)

    # -- egress queueing -----------------------------------------------------

    def _egress_enqueue(self, frame: _Frame) -> None:
        e = frame.flow.dst
        if (not self.lossless_pause
                and self._egress_bytes[e] + frame.wire > self.egress_cap):
            if not self._shed(e, frame):
                return
        frame.ecn = self._egress_bytes[e] >= self.ecn_thresh
        self._egress_bytes[e] += frame.wire
        if self.priority_dequeue:
            self._frame_seq += 1
            frame.seq = self._frame_seq
            heapq.heappush(self._egress[e], (frame.prio, frame.seq, frame))
        else:
            self._egress[e].append(frame)
        self._egress_pump(e)

    def _shed(self, e: int, frame: _Frame) -> bool:
        """Make room for `frame`; False when the arriving frame is dropped."""
        if not self.priority_dequeue:
            self.frames_dropped += 1
            return False
        queue = self._egress[e]
        victim_i = max(range(len(queue)), key=lambda i: queue[i][:2],
                       default=-1)
        if victim_i < 0 or queue[victim_i][0] <= frame.prio:
            self.frames_dropped += 1
            return False
        self._egress_bytes[e] -= queue[victim_i][2].wire
        queue[victim_i] = queue[-1]
        queue.pop()
        heapq.heapify(queue)
        self.frames_dropped += 1
        return True

    def _egress_pump(self, e: int) -> None:
        if self._egress_busy[e] or not self._egress[e]:
            return
        if self.priority_dequeue:
            _, _, frame = heapq.heappop(self._egress[e])
        else:
            frame = self._egress[e].popleft()
        self._egress_bytes[e] -= frame.wire
        self._egress_busy[e] = True
        _, end = self.downlinks[e].enqueue(self.sim.now, frame.wire)
        self.sim.schedule(end, self._egress_done, e, frame)

    def _egress_done(self, e: int, frame: _Frame) -> None:
        self._egress_busy[e] = False
        self._egress_pump(e)
        if self.lossless_pause and self._waiting_on[e]:
            blocked, self._waiting_on[e] = self._waiting_on[e], set()
            for src in sorted(blocked):
                self._ingress_pump(src)
        self.sim.schedule(self.sim.now + self._hop_ps, self._deliver, frame)

    # -- receiver and acknowledgements ----------------------------------------

    def _deliver(self, frame: _Frame) -> None:
        flow = frame.flow
        st = frame.st
        if frame.idx not in st.delivered_idx:
            st.delivered_idx.add(frame.idx)
            flow.arrived += frame.payload
            if flow.arrived >= flow.size:
                self.flow_delivered(flow, self.sim.now)
        self.sim.after(self._ack_ps, self._on_ack, st, frame)

    def _on_ack(self, st: _Transport, frame: _Frame) -> None:
        if frame.idx in st.acked_idx:
            return
        st.acked_idx.add(frame.idx)
        if frame.idx in st.counted:
            st.counted.discard(frame.idx)
            st.inflight -= frame.payload
        st.acked += frame.payload
        if frame.ecn:
            st.marked += frame.payload
        if st.acked >= st.window:
            self._window_update(st)
        if st.done():
            self._active[frame.flow.src] = [
                s for s in self._active[frame.flow.src] if s is not st]
        self._tx_pump(frame.flow.src)

    def _window_update(self, st: _Transport) -> None:
        frac = st.marked / st.acked
        st.alpha = (1 - self.ecn_gain) * st.alpha + self.ecn_gain * frac
        if st.marked:
            st.slow_start = False
            st.cwnd = max(MSS, round(st.cwnd * (1 - st.alpha / 2)))
        elif st.slow_start:
            st.cwnd *= 2
        else:
            st.cwnd += MSS
        st.acked = st.marked = 0
        st.window = st.cwnd

    # -- loss recovery ---------------------------------------------------------

    def _rto(self, st: _Transport, frame: _Frame) -> None:
        if frame.idx in st.acked_idx or frame.idx in st.retx:
            return
        # The copy is presumed lost: its bytes are no longer in flight.
        if frame.idx in st.counted:
            st.counted.discard(frame.idx)
            st.inflight -= frame.payload
        st.retx.append(frame.idx)
        st.cwnd = MSS
        st.slow_start = True
        st.window = st.cwnd
        st.acked = st.marked = 0
        self._tx_pump(frame.flow.src)


class PfabricFabric(ReactiveFabric):
    name = "pfabric"
    priority_dequeue = True


class PfcFabric(ReactiveFabric):
    name = "pfc"
    lossless_pause = True
