"""Core domain model: message types, wire-field encoding, latency constants.

Time is integer picoseconds everywhere.  All latency constants are given in
nanoseconds and converted once to picoseconds; standard link rates (25/40/
100/400 Gbps) yield exact integer slot times, so runs are bit-reproducible.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

SimTime = int  # picoseconds
PortId = int
MessageId = int

BLOCK_BITS = 66            # one PCS block on the wire
BLOCK_PAYLOAD_BYTES = 8    # data bytes carried by one data-bearing block

# Wire field widths (normative for encoded control payloads and CSV dumps).
DST_BITS = 9
MSG_ID_BITS = 8
SIZE_BITS = 16
CONTROL_FIELD_BITS = DST_BITS + MSG_ID_BITS + SIZE_BITS  # 33

MAX_PORTS = 1 << DST_BITS          # 512
MAX_MSG_IDS = 1 << MSG_ID_BITS     # 256 in-flight ids per (src, dst)
MAX_MSG_BYTES = (1 << SIZE_BITS) - 1


class EdmError(Exception):
    """Base class for all simulator errors."""


class FieldOverflowError(EdmError):
    """A value does not fit its wire field."""


class ProtocolViolation(EdmError):
    """An invariant of the fabric protocol was broken (simulator bug trap)."""


class ConfigError(EdmError):
    """Invalid configuration or config file."""


class MsgKind(enum.Enum):
    RREQ = "RREQ"       # read request (control only, no data payload)
    RRES = "RRES"       # read response carrying data
    WREQ = "WREQ"       # write request carrying data
    RMWREQ = "RMWREQ"   # atomic read-modify-write request


class RmwOpcode(enum.Enum):
    CAS = "CAS"              # three 64-bit args (24 B); result: 1 B flag
    FETCH_ADD = "FETCH_ADD"  # args: address, addend (16 B); result: old value


# Bytes of argument payload an RMW opcode carries (address included).
RMW_ARG_BYTES = {RmwOpcode.CAS: 24, RmwOpcode.FETCH_ADD: 16}
RMW_RESULT_BYTES = {RmwOpcode.CAS: 1, RmwOpcode.FETCH_ADD: 8}


@dataclass(slots=True)
class MemoryMessage:
    """One application-level memory message between two ports."""

    kind: MsgKind
    src: PortId
    dst: PortId
    msg_id: MessageId
    size_bytes: int          # data bytes moved (read length for RREQ)
    addr: int = 0
    opcode: RmwOpcode | None = None
    payload: bytes | None = None
    submit_ps: SimTime = 0

    def __post_init__(self) -> None:
        if not 0 < self.size_bytes <= MAX_MSG_BYTES:
            raise FieldOverflowError(
                f"message size {self.size_bytes} outside 1..{MAX_MSG_BYTES}")
        if self.src == self.dst:
            raise ProtocolViolation("message src == dst")

    def data_bytes(self) -> int:
        """Bytes of payload this message itself carries on the wire."""
        if self.kind is MsgKind.RREQ:
            return 8  # the 64-bit target address
        if self.kind is MsgKind.RMWREQ:
            return RMW_ARG_BYTES[self.opcode or RmwOpcode.CAS]
        return self.size_bytes


@dataclass(slots=True)
class Chunk:
    """A granted slice of a message's payload."""

    msg: MemoryMessage
    offset: int
    length: int

    def __post_init__(self) -> None:
        if self.length <= 0 or self.offset < 0:
            raise ProtocolViolation("bad chunk geometry")
        if self.offset + self.length > self.msg.data_bytes():
            raise ProtocolViolation("chunk exceeds message payload")


@dataclass(slots=True)
class NotificationRecord:
    """Scheduler-side demand entry: src wants to send `remaining` B to dst."""

    src: PortId
    dst: PortId
    msg_id: MessageId
    remaining: int
    enqueued_at: SimTime
    seq: int = 0                 # deterministic tie-break counter
    implicit: bool = False       # True when created from a buffered read request
    buffered_req: MemoryMessage | None = None


@dataclass(slots=True)
class Grant:
    """Permission for src to send chunk_bytes of message msg_id toward dst."""

    src: PortId
    dst: PortId
    msg_id: MessageId
    chunk_bytes: int
    issued_ps: SimTime
    first: bool = False          # first grant of an implicit (read) record
    response: bool = False       # grants a read response, not a write
                                 # (ids are unique per pair per class)


def notification_wire_encode(dst: PortId, msg_id: MessageId, size: int) -> int:
    """Pack notification/grant fields into their 33-bit wire form.

    Layout (msb..lsb): dst[9] | msg_id[8] | size[16].  The 33 bits ride in a
    single control block's 56-bit payload.
    """
    if not 0 <= dst < MAX_PORTS:
        raise FieldOverflowError(f"dst {dst} does not fit {DST_BITS} bits")
    if not 0 <= msg_id < MAX_MSG_IDS:
        raise FieldOverflowError(f"msg_id {msg_id} does not fit {MSG_ID_BITS} bits")
    if not 0 <= size <= MAX_MSG_BYTES:
        raise FieldOverflowError(f"size {size} does not fit {SIZE_BITS} bits")
    return (dst << (MSG_ID_BITS + SIZE_BITS)) | (msg_id << SIZE_BITS) | size


def notification_wire_decode(word: int) -> tuple[PortId, MessageId, int]:
    if not 0 <= word < (1 << CONTROL_FIELD_BITS):
        raise FieldOverflowError(f"wire word {word} exceeds {CONTROL_FIELD_BITS} bits")
    size = word & MAX_MSG_BYTES
    msg_id = (word >> SIZE_BITS) & (MAX_MSG_IDS - 1)
    dst = word >> (MSG_ID_BITS + SIZE_BITS)
    return dst, msg_id, size


def memory_block_count(data_len: int) -> int:
    """Blocks used by one memory message/chunk carrying data_len payload bytes.

    Header fields ride the start block.  A message whose payload fits one
    block's 8 B capacity is a single start+terminate block; larger payloads
    use start + ceil(len/8) data blocks + terminate.
    """
    if data_len < 0:
        raise ValueError("negative payload length")
    if data_len <= BLOCK_PAYLOAD_BYTES:
        return 1
    return 2 + -(-data_len // BLOCK_PAYLOAD_BYTES)


def chunked_block_count(data_len: int, chunk_bytes: int) -> int:
    """Wire blocks for a message's data split into grant-sized chunks."""
    full, rem = divmod(data_len, chunk_bytes)
    blocks = full * memory_block_count(chunk_bytes)
    if rem:
        blocks += memory_block_count(rem)
    return blocks


def message_wire_bits(data_len: int) -> int:
    """Wire bits of one memory message/chunk (66-bit blocks)."""
    return memory_block_count(data_len) * BLOCK_BITS


def control_overhead_fraction(chunk_bytes: int) -> float:
    """Scheduling-control bandwidth overhead per granted chunk.

    Each granted chunk costs one 33-bit notification upstream and one 33-bit
    grant downstream, each riding a 66-bit control block on its own simplex
    link; the chunk's wire footprint crosses the same link pair.  The ratio
    of control field bits to chunk wire capacity over both directions is
    (33 + 33) / (2 * 66 * blocks) and shrinks as chunks grow.
    """
    if chunk_bytes <= 0:
        raise ValueError("chunk_bytes must be positive")
    wire = 2 * message_wire_bits(chunk_bytes)
    return (2 * CONTROL_FIELD_BITS) / wire


def _ns_to_ps(ns: float) -> int:
    return round(ns * 1000)


@dataclass(frozen=True)
class LatencyProfile:
    """Fixed per-stage latencies of the fabric hardware.

    Defaults reproduce the measured unloaded read/write totals of the
    reference hardware exactly (see ``unloaded_read_fixed_ps``).
    """

    cycle_ns: float = 2.56               # host/switch/scheduler clock period
    pcs_ns: float = 5.12                 # one PCS traversal (2 cycles)
    pma_pmd_transceiver_ns: float = 19.0  # analog PHY + transceiver, per traversal
    propagation_ns: float = 10.0         # per hop
    dram_ns: float = 0.0                 # memory-device access (excluded by default)
    # Host pipeline cycle counts.
    ntf_gen_cycles: int = 2              # generate a notification or read-request block
    grant_q_read_cycles: int = 4         # grant queue read, RX->TX clock crossing
    mdata_gen_cycles: int = 3            # first data block out of the generator
    g_block_proc_cycles: int = 2         # process a received grant block
    rreq_to_memctrl_extra_cycles: int = 1  # extra cycle handing a read req to memctrl
    mdata_rx_proc_cycles: int = 3        # process received data blocks
    # Switch pipeline cycle counts.
    g_block_gen_cycles: int = 1
    classify_cycles: int = 1
    forward_cycles: int = 4
    ntf_insert_cycles: int = 2           # scheduler queue insert
    # Grants surface two cycles into a three-cycle matching iteration; the
    # state-update cycle overlaps grant-block generation.
    match_iteration_cycles: int = 3
    match_grant_visible_cycles: int = 2
    # Store-and-forward layer-2 path for non-memory frames.
    l2_parse_ns: float = 87.0
    l2_match_ns: float = 202.0
    l2_manager_ns: float = 93.0
    l2_crossbar_ns: float = 18.0

    @property
    def cycle_ps(self) -> int:
        return _ns_to_ps(self.cycle_ns)

    @property
    def pcs_ps(self) -> int:
        return _ns_to_ps(self.pcs_ns)

    @property
    def pma_ps(self) -> int:
        return _ns_to_ps(self.pma_pmd_transceiver_ns)

    @property
    def propagation_ps(self) -> int:
        return _ns_to_ps(self.propagation_ns)

    @property
    def dram_ps(self) -> int:
        return _ns_to_ps(self.dram_ns)

    @property
    def l2_path_ps(self) -> int:
        return _ns_to_ps(self.l2_parse_ns + self.l2_match_ns
                         + self.l2_manager_ns + self.l2_crossbar_ns)

    def cycles_ps(self, n: int) -> int:
        return n * self.cycle_ps

    def hop_fixed_ps(self) -> int:
        """Per-link-crossing analog delay: propagation + TX and RX PMA/PMD."""
        return self.propagation_ps + 2 * self.pma_ps

    def match_latency_ps(self, iteration: int) -> int:
        """Visible latency of a grant found in 1-based matching iteration k."""
        if iteration < 1:
            raise ValueError("iterations are 1-based")
        return self.cycles_ps(
            self.match_iteration_cycles * (iteration - 1)
            + self.match_grant_visible_cycles)

    # Analytic unloaded one-message fixed path (excludes serialization).
    def unloaded_read_fixed_ps(self) -> int:
        host = self.cycles_ps(self.ntf_gen_cycles + self.mdata_rx_proc_cycles)
        host += 2 * self.pcs_ps
        switch = self.cycles_ps(
            self.classify_cycles + self.ntf_insert_cycles
            + self.match_grant_visible_cycles + self.g_block_gen_cycles
            + self.classify_cycles + self.forward_cycles)
        switch += 4 * self.pcs_ps
        mem = self.cycles_ps(
            self.g_block_proc_cycles + self.rreq_to_memctrl_extra_cycles
            + self.grant_q_read_cycles + self.mdata_gen_cycles)
        mem += 2 * self.pcs_ps
        return host + switch + mem + 4 * self.hop_fixed_ps() + self.dram_ps

    def unloaded_write_fixed_ps(self) -> int:
        host = self.cycles_ps(
            self.ntf_gen_cycles + self.g_block_proc_cycles
            + self.grant_q_read_cycles + self.mdata_gen_cycles)
        host += 3 * self.pcs_ps
        switch = self.cycles_ps(
            self.classify_cycles + self.ntf_insert_cycles
            + self.match_grant_visible_cycles + self.g_block_gen_cycles
            + self.classify_cycles + self.forward_cycles)
        switch += 4 * self.pcs_ps
        # Completion is logged at the receive pipeline's end; the device
        # write behind it is off the measured path.
        mem = self.cycles_ps(self.mdata_rx_proc_cycles) + self.pcs_ps
        return host + switch + mem + 4 * self.hop_fixed_ps()


# Measured unloaded fabric totals (ns) of the reference hardware; FPGA/ASIC
# behavior beyond these fixed constants is out of the simulator's scope.
REFERENCE_UNLOADED_NS = {"read": 299.52, "write": 296.96}
REFERENCE_L2_PATH_NS = 400.0


@dataclass
class ClusterConfig:
    """Static description of one simulated fabric instance."""

    n_ports: int = 144
    link_gbps: float = 100.0
    chunk_bytes: int = 256
    max_notifications: int = 3           # per (src, dst) pair, scheduler bound X
    priority_policy: str = "srpt"        # "srpt" | "fcfs"
    scheduler_clock_ghz: float = 3.0     # ASIC clock R, for config derivation only
    profile: LatencyProfile = field(default_factory=LatencyProfile)
    read_timeout_ns: float = 10_000.0
    pause_thresh_bytes: int | None = None  # default: 2 * BDP, see resolve()
    rx_drain_gbps: float = 0.0           # 0 disables the RX gauge (infinite drain)
    coalesce_writes: bool = False
    seed: int = 1

    def __post_init__(self) -> None:
        if not 2 <= self.n_ports <= MAX_PORTS:
            raise ConfigError(f"n_ports must be in 2..{MAX_PORTS}")
        if self.link_gbps <= 0:
            raise ConfigError("link_gbps must be positive")
        if not 1 <= self.chunk_bytes <= MAX_MSG_BYTES:
            raise ConfigError("chunk_bytes outside wire size field")
        if self.max_notifications < 1:
            raise ConfigError("max_notifications must be >= 1")
        if self.priority_policy not in ("srpt", "fcfs"):
            raise ConfigError(f"unknown priority policy {self.priority_policy!r}")

    @property
    def slot_ps(self) -> int:
        """Serialization time of one 66-bit block."""
        return round(BLOCK_BITS * 1000 / self.link_gbps)

    def tx_ps(self, nbytes: int) -> int:
        """Serialization time of nbytes of payload at link rate (l/B)."""
        return round(nbytes * 8 * 1000 / self.link_gbps)

    def chunk_wire_ps(self, nbytes: int) -> int:
        """Serialization time of an nbytes chunk's full block footprint.

        A granted chunk occupies its links for whole 66-bit slots, framing
        included, which exceeds the payload-only l/B by the start/terminate
        blocks and the 64-to-66 expansion.  Endpoint release must cover the
        footprint: the next chunk's first block can only follow the previous
        chunk's last, and releasing at payload-l/B would oversubscribe a
        saturated egress by that margin (about 10% at 256 B) without bound.
        """
        return memory_block_count(nbytes) * self.slot_ps

    @property
    def read_timeout_ps(self) -> int:
        return _ns_to_ps(self.read_timeout_ns)

    def bdp_bytes(self) -> int:
        """Bandwidth-delay product of one link round trip (analog path)."""
        rtt_ps = 2 * self.profile.hop_fixed_ps()
        return max(1, round(self.link_gbps * rtt_ps / 8000))

    def pause_threshold(self) -> int:
        if self.pause_thresh_bytes is not None:
            return self.pause_thresh_bytes
        return 2 * self.bdp_bytes()
