"""Deterministic discrete-event engine and slot-quantized links.

Events are ordered by (timestamp, insertion sequence); two runs with the
same seed dispatch identical event sequences.  A link carries one 66-bit
block per slot; transmission reserves consecutive slots and the receiver
sees a block at its serialization end plus the analog path delay.
"""

from __future__ import annotations

import heapq
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Callable

from .core import ClusterConfig, ProtocolViolation, SimTime


@dataclass(order=True)
class Event:
    at: SimTime
    seq: int
    fn: Callable = field(compare=False)
    args: tuple = field(compare=False, default=())
    cancelled: bool = field(compare=False, default=False)


class Simulator:
    """Single-threaded event loop over integer-picosecond time."""

    def __init__(self, seed: int = 1) -> None:
        self.now: SimTime = 0
        self.seed = seed
        self._heap: list[Event] = []
        self._seq = 0
        self.dispatched = 0

    def rng(self, component: str) -> random.Random:
        """Independent deterministic stream for one named component."""
        return random.Random(f"{self.seed}:{component}")

    def schedule(self, at: SimTime, fn: Callable, *args) -> Event:
        if at < self.now:
            raise ProtocolViolation(
                f"event scheduled in the past ({at} < {self.now})")
        ev = Event(at, self._seq, fn, args)
        self._seq += 1
        heapq.heappush(self._heap, ev)
        return ev

    def after(self, delay: SimTime, fn: Callable, *args) -> Event:
        return self.schedule(self.now + delay, fn, *args)

    def cancel(self, ev: Event) -> None:
        """Lazily discard a scheduled event (it stays heaped but inert)."""
        ev.cancelled = True

    def run(self, until: SimTime | None = None) -> None:
        heap = self._heap
        while heap:
            if heap[0].cancelled:
                heapq.heappop(heap)
                continue
            if until is not None and heap[0].at > until:
                break
            ev = heapq.heappop(heap)
            assert ev.at >= self.now
            self.now = ev.at
            self.dispatched += 1
            ev.fn(*ev.args)
        if until is not None and self.now < until:
            self.now = until

    def pending(self) -> int:
        return sum(1 for ev in self._heap if not ev.cancelled)


@dataclass(slots=True)
class Transmission:
    """Slot span of one block group on a link."""

    start: SimTime          # first slot begins serializing
    end: SimTime            # last slot fully serialized
    first_arrival: SimTime  # first block fully received at the far end
    last_arrival: SimTime   # last block fully received at the far end


class Link:
    """One simplex link: slot-quantized serialization plus fixed analog delay.

    `transmit` is the strict primitive (the requested start slot must be
    free); `enqueue` serializes behind whatever is already on the wire.
    """

    def __init__(self, cfg: ClusterConfig, name: str = "",
                 record_spans: bool = False) -> None:
        self.name = name
        self.slot_ps = cfg.slot_ps
        self.hop_fixed_ps = cfg.profile.hop_fixed_ps()
        self.next_free: SimTime = 0
        self.busy_ps: SimTime = 0
        self.spans: list[tuple[SimTime, SimTime]] | None = [] if record_spans else None

    def _reserve(self, start: SimTime, nblocks: int) -> Transmission:
        end = start + nblocks * self.slot_ps
        self.next_free = end
        self.busy_ps += end - start
        if self.spans is not None:
            self.spans.append((start, end))
        return Transmission(
            start=start,
            end=end,
            first_arrival=start + self.slot_ps + self.hop_fixed_ps,
            last_arrival=end + self.hop_fixed_ps,
        )

    def transmit(self, start: SimTime, nblocks: int) -> Transmission:
        if nblocks <= 0:
            raise ProtocolViolation("transmission needs at least one block")
        if start < self.next_free:
            raise ProtocolViolation(
                f"link {self.name}: slot at {start} already booked until "
                f"{self.next_free}")
        return self._reserve(start, nblocks)

    def enqueue(self, ready: SimTime, nblocks: int) -> Transmission:
        if nblocks <= 0:
            raise ProtocolViolation("transmission needs at least one block")
        return self._reserve(max(ready, self.next_free), nblocks)

    def occupancy(self, span_start: SimTime, span_end: SimTime) -> float:
        """Busy fraction of [span_start, span_end); needs recorded spans."""
        if self.spans is None:
            raise ProtocolViolation(f"link {self.name} does not record spans")
        width = span_end - span_start
        if width <= 0:
            return 0.0
        busy = 0
        for s, e in self.spans:
            busy += max(0, min(e, span_end) - max(s, span_start))
        return busy / width


@dataclass(slots=True)
class _PumpItem:
    ready: SimTime
    nblocks: int
    at_first: bool          # deliver at first-block arrival (cut-through)
    fn: Callable
    args: tuple


class LinkPump:
    """Two-lane transmit scheduler feeding one link.

    Control messages (single blocks: notifications, grants, pause/resume)
    claim the next free slot ahead of queued data chunks, so a burst of
    data never buries the control plane.  Lanes are FIFO and a started
    transmission is never preempted: one memory message's blocks stay
    contiguous on the wire, which is what lets the receive side track
    message boundaries without per-block tags.
    """

    def __init__(self, sim: Simulator, link: Link) -> None:
        self.sim = sim
        self.link = link
        self._ctrl: deque[_PumpItem] = deque()
        self._data: deque[_PumpItem] = deque()
        self._wake_at: SimTime | None = None
        self._wake_ev: Event | None = None

    def send(self, ready: SimTime, nblocks: int, fn: Callable, *args,
             ctrl: bool = False, at_first: bool = False) -> None:
        """Queue one transmission; fn(*args) fires when it arrives."""
        item = _PumpItem(ready, nblocks, at_first, fn, args)
        (self._ctrl if ctrl else self._data).append(item)
        self._dispatch()

    def backlog_blocks(self) -> int:
        return sum(i.nblocks for i in self._ctrl) \
            + sum(i.nblocks for i in self._data)

    def _arm(self, at: SimTime) -> None:
        if self._wake_ev is not None and not self._wake_ev.cancelled:
            if self._wake_at <= at:
                return
            self.sim.cancel(self._wake_ev)
        self._wake_at = at
        self._wake_ev = self.sim.schedule(at, self._dispatch)

    def _dispatch(self) -> None:
        now = self.sim.now
        if self._wake_at is not None and self._wake_at <= now:
            self._wake_at = None
            self._wake_ev = None
        free_at = self.link.next_free
        if now < free_at:
            if self._ctrl or self._data:
                self._arm(free_at)
            return
        item: _PumpItem | None = None
        if self._ctrl and self._ctrl[0].ready <= now:
            item = self._ctrl.popleft()
        elif self._data and self._data[0].ready <= now:
            item = self._data.popleft()
        if item is None:
            heads = [q[0].ready for q in (self._ctrl, self._data) if q]
            if heads:
                self._arm(min(heads))
            return
        tx = self.link.transmit(now, item.nblocks)
        at = tx.first_arrival if item.at_first else tx.last_arrival
        self.sim.schedule(at, item.fn, *item.args)
        if self._ctrl or self._data:
            self._arm(tx.end)
