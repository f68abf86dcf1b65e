"""Binary wire format for sensor uplink and warning downlink frames.

Everything is little-endian. A perception frame is

    magic "CAMP" (4s) | version u8 | node_id u16 | seq u32 | capture u64 | count u16

followed by `count` 21-byte object records

    class u8 | x f64 | y f64 | sigma f32

so a frame is exactly 21 + 21 * count bytes. Warning frames use magic "CAMW"
and a fixed 53-byte layout. Decoders reject malformed input with distinct
error types and never return partial frames.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import BinaryIO, Iterator

from .core import AgentClass

PERCEPTION_MAGIC = b"CAMP"
WARNING_MAGIC = b"CAMW"
WIRE_VERSION = 1

HEADER_FMT = "<4sBHIQH"
HEADER_SIZE = struct.calcsize(HEADER_FMT)  # 21
RECORD_FMT = "<Bddf"
RECORD_SIZE = struct.calcsize(RECORD_FMT)  # 21
WARNING_FMT = "<4sBQQQddQ"
WARNING_SIZE = struct.calcsize(WARNING_FMT)  # 53

MAX_RECORDS = 0xFFFF


class WireError(Exception):
    """Base class for frame encode/decode failures."""


class BadMagic(WireError):
    pass


class UnsupportedVersion(WireError):
    pass


class Truncated(WireError):
    pass


class TrailingBytes(WireError):
    pass


def _f32(value: float) -> float:
    """Round a float to the nearest single-precision value."""
    return struct.unpack("<f", struct.pack("<f", value))[0]


@dataclass(frozen=True)
class ObjectRecord:
    """One fused object estimate as it travels on the wire.

    sigma is stored at single precision, so it is quantized here and the
    record always survives an encode/decode round trip unchanged.
    """

    class_code: int
    x: float
    y: float
    sigma: float

    def __post_init__(self) -> None:
        AgentClass(self.class_code)  # raises ValueError on unknown codes
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("record position must be finite")
        if not (math.isfinite(self.sigma) and self.sigma >= 0.0):
            raise ValueError("record sigma must be finite and non-negative")
        object.__setattr__(self, "sigma", _f32(self.sigma))


@dataclass(frozen=True)
class PerceptionMessage:
    """One uplink frame from a sensor node."""

    node_id: int
    seq: int
    capture_time: int  # microseconds
    records: tuple[ObjectRecord, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if not 0 <= self.node_id <= 0xFFFF:
            raise ValueError("node_id out of u16 range")
        if not 0 <= self.seq <= 0xFFFFFFFF:
            raise ValueError("seq out of u32 range")
        if not 0 <= self.capture_time <= 0xFFFFFFFFFFFFFFFF:
            raise ValueError("capture_time out of u64 range")
        if len(self.records) > MAX_RECORDS:
            raise ValueError(f"too many records for one frame: {len(self.records)}")
        object.__setattr__(self, "records", tuple(self.records))


@dataclass(frozen=True)
class WarningMessage:
    """One downlink hazard warning frame."""

    event_id: int
    track_a: int
    track_b: int
    time_to_conflict: float  # seconds
    min_distance: float      # meters
    issued_at: int           # microseconds

    def __post_init__(self) -> None:
        for name in ("event_id", "track_a", "track_b", "issued_at"):
            v = getattr(self, name)
            if not 0 <= v <= 0xFFFFFFFFFFFFFFFF:
                raise ValueError(f"{name} out of u64 range")
        if not math.isfinite(self.time_to_conflict) or self.time_to_conflict < 0:
            raise ValueError("time_to_conflict must be finite and non-negative")
        if not math.isfinite(self.min_distance) or self.min_distance < 0:
            raise ValueError("min_distance must be finite and non-negative")


def encode(msg: PerceptionMessage) -> bytes:
    parts = [struct.pack(HEADER_FMT, PERCEPTION_MAGIC, WIRE_VERSION,
                         msg.node_id, msg.seq, msg.capture_time, len(msg.records))]
    for r in msg.records:
        parts.append(struct.pack(RECORD_FMT, r.class_code, r.x, r.y, r.sigma))
    return b"".join(parts)


def decode(data: bytes) -> PerceptionMessage:
    """Decode a perception frame, rejecting malformed input.

    Raises BadMagic, UnsupportedVersion, Truncated or TrailingBytes; the
    payload is validated before any message object is built.
    """
    if len(data) < 4:
        raise Truncated(f"unexpected end of frame: {len(data)} bytes, need at least 4")
    if data[:4] != PERCEPTION_MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < HEADER_SIZE:
        raise Truncated(f"unexpected end of frame: {len(data)} bytes, header needs {HEADER_SIZE}")
    _, version, node_id, seq, capture, count = struct.unpack_from(HEADER_FMT, data, 0)
    if version != WIRE_VERSION:
        raise UnsupportedVersion(f"version {version}, this decoder speaks {WIRE_VERSION}")
    expected = HEADER_SIZE + RECORD_SIZE * count
    if len(data) < expected:
        raise Truncated(f"unexpected end of frame: {len(data)} bytes, frame declares {expected}")
    if len(data) > expected:
        raise TrailingBytes(f"{len(data) - expected} trailing bytes after frame")
    records = []
    for i in range(count):
        cls, x, y, sigma = struct.unpack_from(RECORD_FMT, data, HEADER_SIZE + i * RECORD_SIZE)
        try:
            records.append(ObjectRecord(cls, x, y, sigma))
        except ValueError as exc:
            raise WireError(f"record {i} invalid: {exc}") from exc
    return PerceptionMessage(node_id, seq, capture, tuple(records))


def encode_warning(msg: WarningMessage) -> bytes:
    return struct.pack(WARNING_FMT, WARNING_MAGIC, WIRE_VERSION,
                       msg.event_id, msg.track_a, msg.track_b,
                       msg.time_to_conflict, msg.min_distance, msg.issued_at)


def decode_warning(data: bytes) -> WarningMessage:
    if len(data) < 4:
        raise Truncated(f"unexpected end of frame: {len(data)} bytes, need at least 4")
    if data[:4] != WARNING_MAGIC:
        raise BadMagic(f"bad magic {data[:4]!r}")
    if len(data) < WARNING_SIZE:
        raise Truncated(f"unexpected end of frame: {len(data)} bytes, warning needs {WARNING_SIZE}")
    if len(data) > WARNING_SIZE:
        raise TrailingBytes(f"{len(data) - WARNING_SIZE} trailing bytes after frame")
    _, version, event_id, a, b, ttc, dmin, issued = struct.unpack(WARNING_FMT, data)
    if version != WIRE_VERSION:
        raise UnsupportedVersion(f"version {version}, this decoder speaks {WIRE_VERSION}")
    return WarningMessage(event_id, a, b, ttc, dmin, issued)


def decode_frame(data: bytes) -> PerceptionMessage | WarningMessage:
    """Dispatch on magic: perception or warning frame."""
    if len(data) >= 4 and data[:4] == WARNING_MAGIC:
        return decode_warning(data)
    return decode(data)


# ---------- capture files ----------
#
# A .camp capture is a flat sequence of [u32 length | frame bytes] entries.


def write_capture_frame(fp: BinaryIO, frame: bytes) -> None:
    fp.write(struct.pack("<I", len(frame)))
    fp.write(frame)


def read_capture(fp: BinaryIO) -> Iterator[bytes]:
    """Yield raw frames from a capture stream; truncation raises Truncated."""
    while True:
        prefix = fp.read(4)
        if not prefix:
            return
        if len(prefix) < 4:
            raise Truncated("unexpected end of capture: partial length prefix")
        (length,) = struct.unpack("<I", prefix)
        frame = fp.read(length)
        if len(frame) < length:
            raise Truncated(f"unexpected end of capture: frame needs {length} bytes, got {len(frame)}")
        yield frame
