"""PCS-level block framing: 66-bit block grammar, TX preemption, RX reassembly.

The wire unit is a 66-bit block: 2 sync bits plus 64 payload bits.  Control
blocks (sync "01") carry an 8-bit type and 56 bits of payload; data blocks
(sync "10") carry 64 payload bits.  Memory messages ride dedicated control
types and bare data blocks; they interleave with standard Ethernet frames on
the same stream.  A multi-block memory message is atomic on the wire: a
data-sync block is a memory data block exactly when a memory start block is
open, which is what lets the receiver split the two streams without tags.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field

from .core import (
    BLOCK_PAYLOAD_BYTES,
    Chunk,
    FieldOverflowError,
    MemoryMessage,
    MsgKind,
    ProtocolViolation,
    RmwOpcode,
    memory_block_count,
)

MIN_FRAME_BYTES = 64
MIN_FRAME_BLOCKS = 9          # S + 7 D + T
IFG_BYTES = 12                # 96-bit minimum inter-frame gap
PREAMBLE_BYTES = 8
CTRL_PAYLOAD_BYTES = 7        # 56 bits
S_BLOCK_DATA_BYTES = 5        # S payload: 2-byte length + 5 frame bytes
NONMEM_TX_BUFFER_BLOCKS = 4   # encoder-side buffer while memory preempts


class BlockSync(enum.Enum):
    CTRL = "01"
    DATA = "10"


class BlockType(enum.Enum):
    # (8-bit type code, sync). Codes for memory/scheduler blocks are
    # normative for this artifact's dumps; S/T/E use familiar PCS values.
    S = (0x78, BlockSync.CTRL)        # frame start
    T = (0x87, BlockSync.CTRL)        # frame terminate
    E = (0x1E, BlockSync.CTRL)        # idle
    D = (0x00, BlockSync.DATA)        # frame data
    MS = (0x4D, BlockSync.CTRL)       # memory message start
    MT = (0xB4, BlockSync.CTRL)       # memory message terminate
    MST = (0x5A, BlockSync.CTRL)      # single-block memory message
    MD = (0x00, BlockSync.DATA)       # memory data (context-distinguished)
    N = (0x99, BlockSync.CTRL)        # demand notification
    G = (0x47, BlockSync.CTRL)        # grant
    PAUSE = (0x50, BlockSync.CTRL)    # receiver flow control: stop grants
    RESUME = (0x52, BlockSync.CTRL)   # receiver flow control: resume grants

    @property
    def code(self) -> int:
        return self.value[0]

    @property
    def sync(self) -> BlockSync:
        return self.value[1]


_KIND_CODES = {MsgKind.RREQ: 0, MsgKind.WREQ: 1, MsgKind.RRES: 2, MsgKind.RMWREQ: 3}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}
_OP_CODES = {None: 0, RmwOpcode.CAS: 1, RmwOpcode.FETCH_ADD: 2}
_OP_FROM_CODE = {v: k for k, v in _OP_CODES.items()}

_HEADER_STRUCT = struct.Struct(">BHHBHQIH")  # kind|op, src, dst, id, size, addr, off, len


@dataclass(slots=True, frozen=True)
class MemHeader:
    """Start-block header of one memory message chunk."""

    kind: MsgKind
    src: int
    dst: int
    msg_id: int
    size_bytes: int      # total message size
    addr: int
    offset: int          # chunk offset within the message payload
    length: int          # chunk payload bytes
    opcode: RmwOpcode | None = None

    def pack(self) -> bytes:
        return _HEADER_STRUCT.pack(
            (_KIND_CODES[self.kind] << 4) | _OP_CODES[self.opcode],
            self.src, self.dst, self.msg_id, self.size_bytes,
            self.addr, self.offset, self.length)

    @classmethod
    def unpack(cls, raw: bytes) -> "MemHeader":
        ko, src, dst, msg_id, size, addr, off, length = _HEADER_STRUCT.unpack(raw)
        return cls(_KIND_FROM_CODE[ko >> 4], src, dst, msg_id, size, addr,
                   off, length, _OP_FROM_CODE[ko & 0x0F])


@dataclass(slots=True)
class PhyBlock:
    """One 66-bit block. `payload` is the canonical byte content for dumps."""

    btype: BlockType
    payload: bytes = b""
    header: MemHeader | None = None   # set on MS/MST
    word: int | None = None           # set on N/G (33-bit control word)

    @property
    def sync(self) -> BlockSync:
        return self.btype.sync


BlockStream = list  # list[PhyBlock], one entry per slot


def dump_stream(stream: list[PhyBlock]) -> list[str]:
    """Render a stream as `slot,sync,type,payload_hex` CSV lines."""
    lines = ["slot,sync,type,payload_hex"]
    for slot, blk in enumerate(stream):
        lines.append(
            f"{slot},{blk.sync.value},{blk.btype.name},{blk.payload.hex()}")
    return lines


def control_block(btype: BlockType, word: int) -> PhyBlock:
    """Build an N/G/PAUSE/RESUME block around a packed control word."""
    if word >= 1 << 56:
        raise FieldOverflowError("control word exceeds 56-bit payload")
    return PhyBlock(btype, word.to_bytes(CTRL_PAYLOAD_BYTES, "big"), word=word)


def encode_memory_message(item: MemoryMessage | Chunk,
                          data: bytes | None = None) -> list[PhyBlock]:
    """Encode one message (or one granted chunk of it) into PHY blocks.

    A payload that fits one block's 8 B capacity becomes a single MST;
    otherwise MS (carrying the header and address) + 8 B MD blocks + MT.
    """
    if isinstance(item, Chunk):
        msg, offset, length = item.msg, item.offset, item.length
    else:
        msg, offset, length = item, 0, item.data_bytes()
    if data is None:
        data = bytes(length)
    if len(data) != length:
        raise ProtocolViolation("chunk data length mismatch")
    hdr = MemHeader(msg.kind, msg.src, msg.dst, msg.msg_id, msg.size_bytes,
                    msg.addr, offset, length, msg.opcode)
    if length <= BLOCK_PAYLOAD_BYTES:
        return [PhyBlock(BlockType.MST, hdr.pack() + data, header=hdr)]
    blocks = [PhyBlock(BlockType.MS, hdr.pack(), header=hdr)]
    for i in range(0, length, BLOCK_PAYLOAD_BYTES):
        piece = data[i:i + BLOCK_PAYLOAD_BYTES]
        blocks.append(PhyBlock(BlockType.MD, piece.ljust(BLOCK_PAYLOAD_BYTES, b"\0")))
    blocks.append(PhyBlock(BlockType.MT))
    assert len(blocks) == memory_block_count(length)
    return blocks


def frame_block_count(frame_bytes: int) -> int:
    """Blocks used by one Ethernet frame of the given size (>= 64 B)."""
    if frame_bytes < MIN_FRAME_BYTES:
        raise ProtocolViolation(f"frame below {MIN_FRAME_BYTES} B minimum")
    rest = frame_bytes - S_BLOCK_DATA_BYTES
    n = 1
    while rest > CTRL_PAYLOAD_BYTES:
        rest -= BLOCK_PAYLOAD_BYTES
        n += 1
    return n + 1  # terminating T


def encode_frame(frame: bytes) -> list[PhyBlock]:
    """Encode a MAC frame: S carries length + leading bytes, D bodies, T tail."""
    if len(frame) < MIN_FRAME_BYTES:
        raise ProtocolViolation(f"frame below {MIN_FRAME_BYTES} B minimum")
    if len(frame) >= 1 << 16:
        raise FieldOverflowError("frame length field is 16 bits")
    blocks = [PhyBlock(BlockType.S,
                       len(frame).to_bytes(2, "big") + frame[:S_BLOCK_DATA_BYTES])]
    pos = S_BLOCK_DATA_BYTES
    while len(frame) - pos > CTRL_PAYLOAD_BYTES:
        blocks.append(PhyBlock(BlockType.D, frame[pos:pos + BLOCK_PAYLOAD_BYTES]))
        pos += BLOCK_PAYLOAD_BYTES
    blocks.append(PhyBlock(BlockType.T, frame[pos:]))
    assert len(blocks) >= MIN_FRAME_BLOCKS
    assert len(blocks) == frame_block_count(len(frame))
    return blocks


@dataclass(slots=True)
class DecodedStream:
    """Result of scanning one block stream."""

    messages: list = field(default_factory=list)   # (MemHeader, payload bytes)
    frames: list = field(default_factory=list)     # frame bytes
    controls: list = field(default_factory=list)   # (BlockType, word)
    idle_blocks: int = 0


def decode_block_stream(stream: list[PhyBlock]) -> DecodedStream:
    """Parse a stream back into memory messages, frames, and control words.

    Grammar: frames are S .. D* .. T and may be suspended by whole memory
    messages (MS .. MD* .. MT, or MST).  Data-sync blocks bind to the open
    memory message if there is one, else to the open frame.  Anything else
    is a protocol violation.
    """
    out = DecodedStream()
    frame_buf: list[bytes] | None = None
    frame_len = 0
    mem_hdr: MemHeader | None = None
    mem_buf: list[bytes] = []
    mem_got = 0

    for slot, blk in enumerate(stream):
        bt = blk.btype
        if bt is BlockType.E:
            if mem_hdr is not None:
                raise ProtocolViolation(f"slot {slot}: idle inside memory message")
            out.idle_blocks += 1
        elif bt is BlockType.S:
            if frame_buf is not None:
                raise ProtocolViolation(f"slot {slot}: frame start inside frame")
            if mem_hdr is not None:
                raise ProtocolViolation(f"slot {slot}: frame start inside memory message")
            frame_len = int.from_bytes(blk.payload[:2], "big")
            frame_buf = [blk.payload[2:]]
        elif bt is BlockType.D:
            if mem_hdr is not None:
                piece = blk.payload
                take = min(mem_hdr.length - mem_got, BLOCK_PAYLOAD_BYTES)
                if take <= 0:
                    raise ProtocolViolation(f"slot {slot}: excess memory data block")
                mem_buf.append(piece[:take])
                mem_got += take
            elif frame_buf is not None:
                frame_buf.append(blk.payload)
            else:
                raise ProtocolViolation(f"slot {slot}: data block outside any stream")
        elif bt is BlockType.T:
            if mem_hdr is not None:
                raise ProtocolViolation(f"slot {slot}: frame end inside memory message")
            if frame_buf is None:
                raise ProtocolViolation(f"slot {slot}: frame end without start")
            frame_buf.append(blk.payload)
            frame = b"".join(frame_buf)
            if len(frame) != frame_len:
                raise ProtocolViolation(
                    f"slot {slot}: frame length {len(frame)} != header {frame_len}")
            out.frames.append(frame)
            frame_buf = None
        elif bt is BlockType.MS:
            if mem_hdr is not None:
                raise ProtocolViolation(f"slot {slot}: memory start inside memory message")
            mem_hdr = blk.header or MemHeader.unpack(blk.payload[:_HEADER_STRUCT.size])
            mem_buf, mem_got = [], 0
        elif bt is BlockType.MT:
            if mem_hdr is None:
                raise ProtocolViolation(f"slot {slot}: orphan memory terminate")
            if mem_got != mem_hdr.length:
                raise ProtocolViolation(
                    f"slot {slot}: memory payload {mem_got} != header {mem_hdr.length}")
            out.messages.append((mem_hdr, b"".join(mem_buf)))
            mem_hdr = None
        elif bt is BlockType.MST:
            if mem_hdr is not None:
                raise ProtocolViolation(f"slot {slot}: memory start inside memory message")
            hdr = blk.header or MemHeader.unpack(blk.payload[:_HEADER_STRUCT.size])
            out.messages.append((hdr, blk.payload[_HEADER_STRUCT.size:]))
        elif bt in (BlockType.N, BlockType.G, BlockType.PAUSE, BlockType.RESUME):
            word = blk.word if blk.word is not None else int.from_bytes(blk.payload, "big")
            out.controls.append((bt, word))
        else:  # pragma: no cover - enum is closed
            raise ProtocolViolation(f"slot {slot}: unknown block type {bt}")

    if frame_buf is not None:
        raise ProtocolViolation("stream ended inside a frame")
    if mem_hdr is not None:
        raise ProtocolViolation("stream ended inside a memory message")
    return out


class MuxPolicy(enum.Enum):
    FAIR = "fair"             # alternate between streams when both backlogged
    MEM_STRICT = "mem_strict"  # memory always preempts


class PreemptionMux:
    """TX-side multiplexer merging memory blocks into the frame block stream.

    Frames are preemptible between any two of their blocks; a multi-block
    memory message, once started, holds the output until its terminate block
    so the receiver can bind data-sync blocks unambiguously.  The non-memory
    side drains a small encoder buffer that is bounded under back-pressure.
    """

    def __init__(self, policy: MuxPolicy = MuxPolicy.FAIR) -> None:
        self.policy = policy
        self._mem: list[PhyBlock] = []
        self._nonmem: list[PhyBlock] = []
        self._mem_turn = True
        self._mem_lock = False   # inside a multi-block memory message
        self.max_nonmem_backlog = 0

    def can_accept_nonmem(self) -> bool:
        return len(self._nonmem) < NONMEM_TX_BUFFER_BLOCKS

    def push_nonmem(self, block: PhyBlock) -> None:
        if not self.can_accept_nonmem():
            raise ProtocolViolation("non-memory TX buffer overflow (bound 4)")
        self._nonmem.append(block)
        self.max_nonmem_backlog = max(self.max_nonmem_backlog, len(self._nonmem))

    def push_mem(self, blocks: list[PhyBlock]) -> None:
        self._mem.extend(blocks)

    def mem_backlog(self) -> int:
        return len(self._mem)

    def nonmem_backlog(self) -> int:
        return len(self._nonmem)

    def next_block(self) -> PhyBlock:
        """Emit the block for the current slot (idle when both streams empty)."""
        mem_ready = bool(self._mem)
        nonmem_ready = bool(self._nonmem)
        if self._mem_lock:
            take_mem = True
        elif self.policy is MuxPolicy.MEM_STRICT:
            take_mem = mem_ready
        elif mem_ready and nonmem_ready:
            take_mem = self._mem_turn
            self._mem_turn = not self._mem_turn
        else:
            take_mem = mem_ready
        if take_mem and mem_ready:
            blk = self._mem.pop(0)
            if blk.btype is BlockType.MS:
                self._mem_lock = True
            elif blk.btype is BlockType.MT:
                self._mem_lock = False
            return blk
        if nonmem_ready:
            return self._nonmem.pop(0)
        return PhyBlock(BlockType.E)


class RxReassembler:
    """RX-side splitter. Memory blocks pass through in their arrival slot;
    frame blocks are held and replayed as one consecutive burst after /T/,
    with idles substituted toward the standard decoder in memory slots."""

    def __init__(self) -> None:
        self._frame: list[PhyBlock] = []
        self._in_frame = False
        self._in_mem = False

    def rx_push(self, block: PhyBlock) -> tuple[list[PhyBlock], list[PhyBlock]]:
        """Feed one slot; returns (memory blocks out now, frame burst out now).

        The frame burst, when non-empty, occupies consecutive slots starting
        at the current one.
        """
        bt = block.btype
        if bt is BlockType.MS:
            self._in_mem = True
            return [block], []
        if bt is BlockType.MT:
            self._in_mem = False
            return [block], []
        if bt is BlockType.MST or bt in (BlockType.N, BlockType.G,
                                         BlockType.PAUSE, BlockType.RESUME):
            return [block], []
        if bt is BlockType.D and self._in_mem:
            return [block], []
        if bt is BlockType.S:
            if self._in_frame:
                raise ProtocolViolation("frame start inside frame")
            self._in_frame = True
            self._frame = [block]
            return [], []
        if bt is BlockType.D:
            if not self._in_frame:
                raise ProtocolViolation("data block outside any stream")
            self._frame.append(block)
            return [], []
        if bt is BlockType.T:
            if not self._in_frame:
                raise ProtocolViolation("frame end without start")
            self._frame.append(block)
            burst, self._frame = self._frame, []
            self._in_frame = False
            return [], burst
        if bt is BlockType.E:
            return [], []
        raise ProtocolViolation(f"unexpected block type {bt}")


class FramingAccounting(enum.Enum):
    FRAME_ONLY = "frame_only"   # minimum-frame padding waste
    IFG_ONLY = "ifg_only"       # inter-frame gap share
    FULL = "full"               # padding + IFG + preamble


def mac_framing_overhead(payload_bytes: int,
                         accounting: FramingAccounting = FramingAccounting.FULL
                         ) -> float:
    """Wasted wire fraction when a payload rides a standard MAC frame.

    The payload is padded up to the 64 B frame minimum; each frame also
    costs a 12 B (96-bit) inter-frame gap and an 8 B preamble on the wire.
    """
    if payload_bytes <= 0:
        raise ValueError("payload_bytes must be positive")
    frame = max(MIN_FRAME_BYTES, payload_bytes)
    if accounting is FramingAccounting.FRAME_ONLY:
        return 1.0 - payload_bytes / frame
    if accounting is FramingAccounting.IFG_ONLY:
        return IFG_BYTES / (frame + IFG_BYTES)
    return 1.0 - payload_bytes / (frame + IFG_BYTES + PREAMBLE_BYTES)
