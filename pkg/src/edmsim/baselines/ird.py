"""Idealized receiver-driven fabric.

Each receiver pulls data with shortest-remaining-first grants, one
outstanding chunk at a time, assuming free instantaneous control
signalling.  Data rides standard frames through a store-and-forward
switch.  A sender serves arriving grants in order; when two receivers
grant the same sender concurrently, the later grant waits out a full
chunk serialization before its receiver can react.
"""

from __future__ import annotations

from collections import deque

from ..core import ClusterConfig, SimTime
from .base import BaselineFabric, ByteLink, Flow, frame_wire_bytes

CHUNK_FRAME_LIMIT = 1482


class IrdFabric(BaselineFabric):
    """Receiver-driven chunk scheduling over a conventional switch."""

    name = "ird"
    request_leg_for_reads = False   # control is free: data leg only

    def __init__(self, cfg: ClusterConfig) -> None:
        super().__init__(cfg)
        n = cfg.n_ports
        self.uplinks = [ByteLink(cfg.link_gbps) for _ in range(n)]
        self.downlinks = [ByteLink(cfg.link_gbps) for _ in range(n)]
        self._pending: list[list[Flow]] = [[] for _ in range(n)]
        self._granted: list[Flow | None] = [None] * n
        self._grant_q: list[deque[tuple[Flow, int]]] = [deque()
                                                        for _ in range(n)]
        self._tx_busy = [False] * n
        self._chunk = min(cfg.chunk_bytes, CHUNK_FRAME_LIMIT)
        self._switch_ps = cfg.profile.l2_path_ps + cfg.profile.hop_fixed_ps()

    def _busy_links(self) -> list[ByteLink]:
        return self.uplinks + self.downlinks

    def start_flow(self, flow: Flow) -> None:
        self._pending[flow.dst].append(flow)
        if self._granted[flow.dst] is None:
            self._grant(flow.dst)

    def _grant(self, rx: int) -> None:
        """Receiver picks its shortest-remaining flow and pulls one chunk."""
        flows = self._pending[rx]
        if not flows:
            return
        flow = min(flows, key=lambda f: (f.remaining, f.seq))
        take = min(self._chunk, flow.remaining)
        flow.remaining -= take
        if flow.remaining == 0:
            flows.remove(flow)
        self._granted[rx] = flow
        self._grant_q[flow.src].append((flow, take))
        self._pump(flow.src)

    def _pump(self, tx: int) -> None:
        if self._tx_busy[tx] or not self._grant_q[tx]:
            return
        flow, take = self._grant_q[tx].popleft()
        self._tx_busy[tx] = True
        wire = frame_wire_bytes(take)
        _, tx_end = self.uplinks[tx].enqueue(self.sim.now, wire)
        self.sim.schedule(tx_end, self._tx_done, tx, flow, take, wire)

    def _tx_done(self, tx: int, flow: Flow, take: int, wire: int) -> None:
        self._tx_busy[tx] = False
        # Receiver sees the wire and immediately re-decides what to pull.
        self._granted[flow.dst] = None
        self._grant(flow.dst)
        self._pump(tx)
        _, rx_end = self.downlinks[flow.dst].enqueue(
            self.sim.now + self._switch_ps, wire)
        self.sim.schedule(rx_end + self.cfg.profile.hop_fixed_ps(),
                          self._chunk_arrived, flow, take)

    def _chunk_arrived(self, flow: Flow, take: int) -> None:
        flow.arrived += take
        if flow.remaining == 0 and flow.arrived >= flow.size:
            self.flow_delivered(flow, self.sim.now)
