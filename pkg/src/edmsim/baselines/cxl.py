"""Credit-gated cut-through fabric in the style of a cache-coherent
switched interconnect.

Each source holds a fixed credit pool covering the switch's buffering
for its ingress.  A frame consumes credits when it leaves the sender and
returns them only after it clears the egress link, so a congested
egress exhausts the pool and stalls *all* of that source's traffic —
including transfers to idle destinations.  There is no congestion
control beyond the credit loop.
"""

from __future__ import annotations

from collections import deque

from ..core import ClusterConfig, SimTime
from .base import BaselineFabric, ByteLink, Flow, frame_wire_bytes

CUT_THROUGH_NS = 15.0           # port-to-port forwarding latency


class CxlFabric(BaselineFabric):
    """Per-ingress credit pools over a low-latency cut-through switch."""

    name = "cxl"
    credit_bytes = 8 * 1502     # per-source pool, eight full frames

    def __init__(self, cfg: ClusterConfig) -> None:
        super().__init__(cfg)
        n = cfg.n_ports
        self.uplinks = [ByteLink(cfg.link_gbps) for _ in range(n)]
        self.downlinks = [ByteLink(cfg.link_gbps) for _ in range(n)]
        self._credits = [self.credit_bytes] * n
        self._sendq: list[deque[tuple[Flow, int, int]]] = [deque()
                                                           for _ in range(n)]
        self._hop_ps = cfg.profile.hop_fixed_ps()
        self._switch_ps = round(CUT_THROUGH_NS * 1000)

    def _busy_links(self) -> list[ByteLink]:
        return self.uplinks + self.downlinks

    def start_flow(self, flow: Flow) -> None:
        q = self._sendq[flow.src]
        for payload in flow.frames:
            q.append((flow, payload, frame_wire_bytes(payload)))
        self._pump(flow.src)

    def _pump(self, src: int) -> None:
        q = self._sendq[src]
        while q and self._credits[src] >= q[0][2]:
            flow, payload, wire = q.popleft()
            self._credits[src] -= wire
            start, _ = self.uplinks[src].enqueue(self.sim.now, wire)
            # Cut-through: the egress link picks the frame up as soon as
            # its head clears the switch core (equal link rates keep the
            # tail constraint satisfied automatically).
            ready = start + self._hop_ps + self._switch_ps
            _, down_end = self.downlinks[flow.dst].enqueue(ready, wire)
            arrive = down_end + self._hop_ps
            self.sim.schedule(arrive, self._frame_arrived,
                              src, flow, payload, wire)

    def _frame_arrived(self, src: int, flow: Flow, payload: int,
                       wire: int) -> None:
        self._credits[src] += wire
        flow.arrived += payload
        if flow.arrived >= flow.size:
            self.flow_delivered(flow, self.sim.now)
        self._pump(src)
