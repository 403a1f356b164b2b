"""Centralized-arbiter fabric: every transfer first asks a single
arbiter host for a timeslot.

The arbiter computes perfect, conflict-free allocations in zero time,
but its requests and allocation replies serialize on the arbiter's own
network interface — one link's worth of control bandwidth shared by the
whole cluster.  Data then crosses a conventional store-and-forward
switch in its reserved slot and never queues.
"""

from __future__ import annotations

from ..core import ClusterConfig, SimTime
from .base import (BaselineFabric, ByteLink, Flow, frame_payloads,
                   frame_wire_bytes, message_wire_bytes)

CTRL_WIRE = frame_wire_bytes(8)  # request/allocation frame footprint


class FastpassFabric(BaselineFabric):
    """Zero-compute central scheduling behind one control link."""

    name = "fastpass"
    request_leg_for_reads = False   # the arbiter allocates the data leg

    def __init__(self, cfg: ClusterConfig) -> None:
        super().__init__(cfg)
        n = cfg.n_ports
        self.arbiter_in = ByteLink(cfg.link_gbps)
        self.arbiter_out = ByteLink(cfg.link_gbps)
        self.uplinks = [ByteLink(cfg.link_gbps) for _ in range(n)]
        self.downlinks = [ByteLink(cfg.link_gbps) for _ in range(n)]
        self._src_free = [0] * n
        self._dst_free = [0] * n
        lat = cfg.profile
        self._sf_ps = lat.l2_path_ps + lat.hop_fixed_ps()
        self._to_arbiter_ps = (self.arbiter_in.tx_ps(CTRL_WIRE)
                               + self._sf_ps + lat.hop_fixed_ps())
        self._from_arbiter_ps = (self._sf_ps + lat.hop_fixed_ps()
                                 + self.arbiter_out.tx_ps(CTRL_WIRE))

    def _busy_links(self) -> list[ByteLink]:
        return self.uplinks + self.downlinks

    def start_flow(self, flow: Flow) -> None:
        # Request frame: host -> switch -> arbiter ingress (the queue).
        _, req_end = self.arbiter_in.enqueue(
            self.sim.now + self._to_arbiter_ps, CTRL_WIRE)
        self.sim.schedule(req_end, self._allocate, flow)

    def _allocate(self, flow: Flow) -> None:
        # The allocation reply serializes on the arbiter's egress.
        _, out_end = self.arbiter_out.enqueue(self.sim.now, CTRL_WIRE)
        notify_at = out_end + self._from_arbiter_ps
        dur = self.uplinks[flow.src].tx_ps(message_wire_bytes(flow.size))
        slot = max(notify_at, self._src_free[flow.src],
                   self._dst_free[flow.dst])
        self._src_free[flow.src] = slot + dur
        self._dst_free[flow.dst] = slot + dur
        self.uplinks[flow.src].busy_ps += dur
        self.downlinks[flow.dst].busy_ps += dur
        last_wire = frame_wire_bytes(frame_payloads(flow.size)[-1])
        arrive = (slot + dur + self._sf_ps + self.cfg.profile.hop_fixed_ps()
                  + self.downlinks[flow.dst].tx_ps(last_wire))
        self.sim.schedule(arrive, self._delivered, flow)

    def _delivered(self, flow: Flow) -> None:
        flow.arrived = flow.size
        self.flow_delivered(flow, self.sim.now)
