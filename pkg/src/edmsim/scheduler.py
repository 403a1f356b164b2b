"""Centralized in-switch scheduler: demand queues and iterative matching.

Every port appears once as a traffic source and once as a destination.  The
scheduler keeps one FIFO of notification records per (source, destination)
pair; the pair competes with its head record only, which keeps deliveries
between a pair in submission order while the configured policy (shortest
remaining bytes, or arrival order) ranks different pairs against each other.

Matching runs in three-phase iterations: each free destination proposes its
best sendable record, each source accepts its best proposal, and matched
ports are marked busy; iterations repeat until no eligible record is left,
so every round ends in a maximal matching.  A grant covers min(chunk size,
remaining bytes); the matched ports are released l/B after the grant leaves
so the next grant's data can tail the previous chunk with no gap.
"""

from __future__ import annotations

import bisect
import math
from collections import deque
from dataclasses import dataclass

from .core import (
    Grant,
    MemoryMessage,
    NotificationRecord,
    PortId,
    ProtocolViolation,
    SimTime,
)

PriorityKey = tuple  # (policy value, enqueued_at, src, msg_id, dst)


def min_chunk_size(n_ports: int, scheduler_clock_ghz: float,
                   link_gbps: float) -> int:
    """Smallest power-of-two chunk that keeps matching off the critical path.

    A maximal matching over n ports takes about log2(n) three-cycle
    iterations at the scheduler clock; a chunk must serialize for at least
    that long so the next matching always finishes before the link drains.
    """
    if n_ports < 2:
        raise ValueError("need at least two ports")
    t_ns = 3.0 * math.log2(n_ports) / scheduler_clock_ghz
    min_bytes = t_ns * link_gbps / 8.0
    out = 1
    while out < min_bytes:
        out <<= 1
    return out


def matching_round_ns(n_ports: int, cycle_ns: float) -> float:
    """Nominal duration of one full matching round at the given clock."""
    return 3.0 * math.ceil(math.log2(max(2, n_ports))) * cycle_ns


@dataclass(slots=True)
class PortState:
    busy_as_src: bool = False
    busy_as_dst: bool = False
    paused: bool = False


@dataclass(slots=True)
class GrantDecision:
    """One match produced by a round, plus bookkeeping for the switch."""

    grant: Grant
    record: NotificationRecord
    iteration: int            # 1-based matching iteration that found it
    completes: bool           # record fully granted and removed


class SortedDestArray:
    """Per-source ranking of destinations by their head record's priority.

    Mirrors the hardware's ordered array plus priority encoder: kept sorted
    on every insert/remove/priority change, and `best` returns the first
    destination in priority order among a requesting subset.
    """

    __slots__ = ("_entries", "_by_dst")

    def __init__(self) -> None:
        self._entries: list[tuple] = []   # sorted (key..., dst)
        self._by_dst: dict[int, tuple] = {}

    def set_pair(self, dst: PortId, key: PriorityKey) -> None:
        old = self._by_dst.get(dst)
        if old is not None:
            idx = bisect.bisect_left(self._entries, old)
            del self._entries[idx]
        self._by_dst[dst] = key
        bisect.insort(self._entries, key)

    def clear_pair(self, dst: PortId) -> None:
        old = self._by_dst.pop(dst, None)
        if old is not None:
            idx = bisect.bisect_left(self._entries, old)
            del self._entries[idx]

    def best(self, requesting: set[PortId]) -> PortId | None:
        for key in self._entries:
            if key[-1] in requesting:
                return key[-1]
        return None

    def dests_in_order(self) -> list[PortId]:
        return [key[-1] for key in self._entries]


class Scheduler:
    """Notification queues plus the iterative matcher over one switch."""

    def __init__(self, n_ports: int, chunk_bytes: int,
                 priority_policy: str = "srpt",
                 max_notifications: int = 3) -> None:
        if priority_policy not in ("srpt", "fcfs"):
            raise ProtocolViolation(f"unknown policy {priority_policy!r}")
        self.n_ports = n_ports
        self.chunk_bytes = chunk_bytes
        self.policy = priority_policy
        self.max_notifications = max_notifications
        self.ports = [PortState() for _ in range(n_ports)]
        self._pair_q: dict[tuple[PortId, PortId], deque[NotificationRecord]] = {}
        self._srcs_at_dst: dict[PortId, dict[PortId, None]] = {}
        self._arrays = [SortedDestArray() for _ in range(n_ports)]
        self._seq = 0
        self.total_records = 0
        self.srpt_like = priority_policy == "srpt"

    # -- demand bookkeeping -------------------------------------------------

    def _key(self, rec: NotificationRecord) -> PriorityKey:
        value = rec.remaining if self.srpt_like else rec.enqueued_at
        return (value, rec.enqueued_at, rec.src, rec.msg_id, rec.dst)

    def _refresh_head(self, src: PortId, dst: PortId) -> None:
        q = self._pair_q.get((src, dst))
        if q:
            self._arrays[src].set_pair(dst, self._key(q[0]))
            self._srcs_at_dst.setdefault(dst, {})[src] = None
        else:
            self._arrays[src].clear_pair(dst)
            srcs = self._srcs_at_dst.get(dst)
            if srcs is not None:
                srcs.pop(src, None)
                if not srcs:
                    del self._srcs_at_dst[dst]
            if q is not None:
                del self._pair_q[(src, dst)]

    def pair_backlog(self, src: PortId, dst: PortId) -> int:
        return len(self._pair_q.get((src, dst), ()))

    def on_notification(self, src: PortId, dst: PortId, msg_id: int,
                        size: int, now: SimTime, *, implicit: bool = False,
                        buffered_req: MemoryMessage | None = None
                        ) -> NotificationRecord:
        """Insert one demand record; the X-bound guards the hardware queue.

        Write notifications and buffered-request (read) records are
        throttled by different endpoints, so each class gets its own
        X entries of the pair's queue.
        """
        if src == dst:
            raise ProtocolViolation("notification src == dst")
        if not (0 <= src < self.n_ports and 0 <= dst < self.n_ports):
            raise ProtocolViolation("notification port out of range")
        if size <= 0:
            raise ProtocolViolation("notification size must be positive")
        q = self._pair_q.setdefault((src, dst), deque())
        in_class = sum(1 for r in q if r.implicit == implicit)
        if in_class >= self.max_notifications:
            raise ProtocolViolation(
                f"notification bound exceeded for pair ({src},{dst}): "
                f"{in_class} active, limit {self.max_notifications}")
        rec = NotificationRecord(src=src, dst=dst, msg_id=msg_id,
                                 remaining=size, enqueued_at=now,
                                 seq=self._seq, implicit=implicit,
                                 buffered_req=buffered_req)
        self._seq += 1
        q.append(rec)
        self.total_records += 1
        if len(q) == 1:
            self._refresh_head(src, dst)
        return rec

    # -- matching -----------------------------------------------------------

    def _proposal_for(self, dst: PortId) -> tuple | None:
        """Phase 1: best sendable pair head for one free destination."""
        srcs = self._srcs_at_dst.get(dst)
        if not srcs:
            return None
        best = None
        for src in srcs:
            if self.ports[src].busy_as_src:
                continue
            key = self._key(self._pair_q[(src, dst)][0])
            if best is None or key < best:
                best = key
        return best

    def pim_iteration(self, now: SimTime) -> list[GrantDecision]:
        """One propose/accept/mark-busy iteration; empty list when stalled."""
        proposals: dict[PortId, set[PortId]] = {}
        for dst, srcs in self._srcs_at_dst.items():
            port = self.ports[dst]
            if port.busy_as_dst or port.paused:
                continue
            best = self._proposal_for(dst)
            if best is not None:
                proposals.setdefault(best[2], set()).add(dst)
        out: list[GrantDecision] = []
        for src, dsts in proposals.items():
            dst = self._arrays[src].best(dsts)
            assert dst is not None
            out.append(self._issue_grant(src, dst, now))
        return out

    def _issue_grant(self, src: PortId, dst: PortId,
                     now: SimTime) -> GrantDecision:
        q = self._pair_q[(src, dst)]
        rec = q[0]
        take = min(self.chunk_bytes, rec.remaining)
        rec.remaining -= take
        completes = rec.remaining == 0
        first = rec.implicit and rec.buffered_req is not None
        grant = Grant(src=src, dst=dst, msg_id=rec.msg_id, chunk_bytes=take,
                      issued_ps=now, first=first, response=rec.implicit)
        if completes:
            q.popleft()
            self.total_records -= 1
        self._refresh_head(src, dst)
        self.ports[src].busy_as_src = True
        self.ports[dst].busy_as_dst = True
        return GrantDecision(grant=grant, record=rec, iteration=0,
                             completes=completes)

    def run_matching_round(self, now: SimTime
                           ) -> tuple[list[GrantDecision], int]:
        """Iterate to a maximal matching; returns decisions and iterations.

        The iteration count includes the final pass that finds no new match:
        quiescence is only observable by running it, so it is part of the
        round's cost.  A round over empty/ineligible queues costs zero.
        """
        decisions: list[GrantDecision] = []
        iterations = 0
        while True:
            found = self.pim_iteration(now)
            if not found:
                break
            iterations += 1
            for d in found:
                d.iteration = iterations
            decisions.extend(found)
        if decisions:
            iterations += 1
        return decisions, iterations

    def cancel_grant(self, decision: GrantDecision) -> None:
        """Undo a not-yet-emitted grant (e.g. lost a race with a pause)."""
        rec = decision.record
        src, dst = rec.src, rec.dst
        rec.remaining += decision.grant.chunk_bytes
        if decision.completes:
            self._pair_q.setdefault((src, dst), deque()).appendleft(rec)
            self.total_records += 1
        self._refresh_head(src, dst)
        self.ports[src].busy_as_src = False
        self.ports[dst].busy_as_dst = False

    # -- port state ---------------------------------------------------------

    def release(self, src: PortId, dst: PortId) -> None:
        if not (self.ports[src].busy_as_src and self.ports[dst].busy_as_dst):
            raise ProtocolViolation(
                f"release of idle endpoints ({src}->{dst})")
        self.ports[src].busy_as_src = False
        self.ports[dst].busy_as_dst = False

    def pause(self, dst: PortId) -> None:
        self.ports[dst].paused = True

    def resume(self, dst: PortId) -> None:
        self.ports[dst].paused = False

    def eligible_exists(self) -> bool:
        """True when some record could be granted right now (test hook)."""
        for dst, srcs in self._srcs_at_dst.items():
            port = self.ports[dst]
            if port.busy_as_dst or port.paused:
                continue
            for src in srcs:
                if not self.ports[src].busy_as_src:
                    return True
        return False

    def records_snapshot(self) -> list[NotificationRecord]:
        out = []
        for q in self._pair_q.values():
            out.extend(q)
        return out
