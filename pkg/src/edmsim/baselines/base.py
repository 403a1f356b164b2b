"""Shared pieces for the comparison fabrics.

All comparison models run frame-granular traffic over byte-fluid links:
a frame occupies its wire footprint (payload, headers, preamble, and
inter-frame gap) for a contiguous interval.  Scheduling and flow-control
logic is what distinguishes the models; links and bookkeeping are common.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..core import ClusterConfig, MemoryMessage, MsgKind, SimTime
from ..fabric import FabricBase

FRAME_PAYLOAD_MAX = 1482   # MTU payload per frame (1500 minus L2 header/CRC)
FRAME_HEADER = 18          # L2 header + CRC
FRAME_GAP = 20             # preamble (8) + minimum inter-frame gap (12)
MIN_FRAME = 64             # smallest frame, header included
CTRL_PAYLOAD = 8           # control/request frames carry an address-sized load


def frame_wire_bytes(payload: int) -> int:
    """Wire footprint of one frame carrying `payload` bytes."""
    return max(MIN_FRAME, payload + FRAME_HEADER) + FRAME_GAP


def frame_payloads(size_bytes: int) -> list[int]:
    """Split one message into per-frame payload sizes."""
    full, rem = divmod(size_bytes, FRAME_PAYLOAD_MAX)
    out = [FRAME_PAYLOAD_MAX] * full
    if rem:
        out.append(rem)
    return out


def message_wire_bytes(size_bytes: int) -> int:
    return sum(frame_wire_bytes(p) for p in frame_payloads(size_bytes))


class ByteLink:
    """Simplex byte-fluid link: one transmission at a time, FIFO."""

    __slots__ = ("gbps", "next_free", "busy_ps")

    def __init__(self, gbps: float) -> None:
        self.gbps = gbps
        self.next_free: SimTime = 0
        self.busy_ps: SimTime = 0

    def tx_ps(self, wire_bytes: int) -> int:
        return round(wire_bytes * 8000.0 / self.gbps)

    def enqueue(self, ready: SimTime, wire_bytes: int
                ) -> tuple[SimTime, SimTime]:
        start = max(ready, self.next_free)
        end = start + self.tx_ps(wire_bytes)
        self.next_free = end
        self.busy_ps += end - start
        return start, end


@dataclass(slots=True)
class Flow:
    """One directed transfer: either a message's data or a request leg."""

    msg: MemoryMessage
    src: int
    dst: int
    size: int
    seq: int
    final: bool                     # completing this flow completes the msg
    remaining: int = 0
    arrived: int = 0
    frames: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.remaining = self.size
        self.frames = frame_payloads(self.size)


class BaselineFabric(FabricBase):
    """Base for comparison models: turns requests into directed flows.

    A write is one src->dst flow.  A read is a request leg src->dst whose
    delivery spawns the dst->src data flow; the read completes when the
    data flow's last byte arrives.
    """

    request_leg_for_reads = True

    def __init__(self, cfg: ClusterConfig) -> None:
        super().__init__(cfg)
        self._flow_seq = 0
        self._id_counter = 0

    # -- model hooks ---------------------------------------------------------

    def start_flow(self, flow: Flow) -> None:
        raise NotImplementedError

    # -- message plumbing ----------------------------------------------------

    def submit_message(self, kind: MsgKind, src: int, dst: int,
                       size_bytes: int) -> None:
        self._id_counter = (self._id_counter + 1) % 256
        msg = MemoryMessage(kind=kind, src=src, dst=dst,
                            msg_id=self._id_counter, size_bytes=size_bytes,
                            submit_ps=self.sim.now)
        self.register(msg)
        if kind is MsgKind.WREQ:
            self.start_flow(self._new_flow(msg, src, dst, size_bytes,
                                           final=True))
        elif self.request_leg_for_reads:
            self.start_flow(self._new_flow(msg, src, dst, CTRL_PAYLOAD,
                                           final=False))
        else:
            self.start_flow(self._new_flow(msg, dst, src, size_bytes,
                                           final=True))

    def _new_flow(self, msg: MemoryMessage, src: int, dst: int, size: int,
                  final: bool) -> Flow:
        self._flow_seq += 1
        return Flow(msg=msg, src=src, dst=dst, size=size,
                    seq=self._flow_seq, final=final)

    def flow_delivered(self, flow: Flow, at: SimTime) -> None:
        """Last byte of a flow arrived at its destination."""
        if flow.final:
            self.complete(flow.msg, at)
        else:
            # The request leg landed at the memory side: serve the response.
            msg = flow.msg
            self.start_flow(self._new_flow(msg, msg.dst, msg.src,
                                           msg.size_bytes, final=True))
