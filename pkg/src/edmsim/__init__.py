"""Discrete-event model of an Ethernet fabric specialized for remote memory.

The library simulates 64b/66b-block memory messaging end to end: endpoint
stacks that request and serve reads/writes, a single-switch fabric whose
central matcher grants chunked virtual circuits, and comparison fabrics
driven by the same traces.  All times are integer picoseconds and every
run is reproducible from its configuration and seed.
"""

from .core import (
    BLOCK_BITS,
    BLOCK_PAYLOAD_BYTES,
    Chunk,
    ClusterConfig,
    ConfigError,
    EdmError,
    FieldOverflowError,
    Grant,
    LatencyProfile,
    MAX_MSG_BYTES,
    MAX_MSG_IDS,
    MAX_PORTS,
    MemoryMessage,
    MsgKind,
    NotificationRecord,
    ProtocolViolation,
    REFERENCE_L2_PATH_NS,
    REFERENCE_UNLOADED_NS,
    RMW_ARG_BYTES,
    RMW_RESULT_BYTES,
    RmwOpcode,
    SimTime,
    control_overhead_fraction,
    memory_block_count,
    message_wire_bits,
    notification_wire_decode,
    notification_wire_encode,
)
from .engine import Event, Link, Simulator, Transmission
from .fabric import (
    CompletionRecord,
    EdmFabric,
    chunked_block_count,
    ideal_completion_ps,
)
from .host import HostStack
from .phy import (
    BlockType,
    DecodedStream,
    FramingAccounting,
    MemHeader,
    PhyBlock,
    PreemptionMux,
    RxReassembler,
    decode_block_stream,
    dump_stream,
    encode_frame,
    encode_memory_message,
    frame_block_count,
    mac_framing_overhead,
)
from .scheduler import (
    GrantDecision,
    Scheduler,
    SortedDestArray,
    matching_round_ns,
    min_chunk_size,
)
from .switch import SwitchStack

__version__ = "0.1.0"

__all__ = [
    "BLOCK_BITS",
    "BLOCK_PAYLOAD_BYTES",
    "BlockType",
    "Chunk",
    "ClusterConfig",
    "CompletionRecord",
    "ConfigError",
    "DecodedStream",
    "EdmError",
    "EdmFabric",
    "Event",
    "FieldOverflowError",
    "FramingAccounting",
    "Grant",
    "GrantDecision",
    "HostStack",
    "LatencyProfile",
    "Link",
    "MAX_MSG_BYTES",
    "MAX_MSG_IDS",
    "MAX_PORTS",
    "MemHeader",
    "MemoryMessage",
    "MsgKind",
    "NotificationRecord",
    "PhyBlock",
    "PreemptionMux",
    "ProtocolViolation",
    "REFERENCE_L2_PATH_NS",
    "REFERENCE_UNLOADED_NS",
    "RMW_ARG_BYTES",
    "RMW_RESULT_BYTES",
    "RmwOpcode",
    "RxReassembler",
    "Scheduler",
    "SimTime",
    "Simulator",
    "SortedDestArray",
    "SwitchStack",
    "Transmission",
    "chunked_block_count",
    "control_overhead_fraction",
    "decode_block_stream",
    "dump_stream",
    "encode_frame",
    "encode_memory_message",
    "frame_block_count",
    "ideal_completion_ps",
    "mac_framing_overhead",
    "memory_block_count",
    "message_wire_bits",
    "min_chunk_size",
    "notification_wire_decode",
    "notification_wire_encode",
    "__version__",
]
