"""
Weeding Robot MCU — Messages and Wire Codec
============================================
Order / Telemetry data model, engineering-unit scaling and the framed
serial codec between the MCU and the PC (the Serializer).

Frame layout (bit-exact):

    0x7E | escape( type(1) | len(1) | payload(len) | crc8(1) )

Escaping replaces body bytes 0x7E / 0x7D by 0x7D, byte ^ 0x20, so 0x7E only
ever appears as a frame start.  The CRC is CRC-8, poly 0x07, init 0x00,
MSB-first, no reflection, no final xor, over type|len|payload.

The CRC catches every single-bit error in the unescaped body.  A wire flip
that changes the escaping (0x7D turned into 0xFD, a plain byte turned into
0x7D or 0x7E) moves the frame boundary; an escape that does not decode to
0x7E or 0x7D is rejected, the rest is down to the CRC.

Wire scaling (all i16 little endian):
    velocity 0.1 rpm | tension mV | current mA | position 0.1 deg
"""

import logging
import struct
from dataclasses import dataclass, field
from enum import IntEnum

from firmware.errors import (
    ChecksumError,
    EscapeError,
    FrameError,
    FrameLengthError,
    RangeError,
    UnknownTypeError,
    WeedbotError,
)

logger = logging.getLogger(__name__)

FLAG = 0x7E
ESCAPE = 0x7D
ESCAPE_XOR = 0x20

MSG_SETPOINT = 0x01
MSG_STOP = 0x02
MSG_TELEMETRY = 0x81     # high bit set: MCU -> PC

CRC8_POLY = 0x07

SETPOINT_FORMAT = struct.Struct('<B4hh')         # 11 bytes
TELEMETRY_FORMAT = struct.Struct('<H4h4hhHBB')   # 24 bytes

PAYLOAD_LENGTHS = {
    MSG_SETPOINT: SETPOINT_FORMAT.size,
    MSG_STOP: 0,
    MSG_TELEMETRY: TELEMETRY_FORMAT.size,
}

I16_MIN, I16_MAX = -32768, 32767
ERROR_FLAG = 0x80        # set in the telemetry opState byte


class OrderKind(IntEnum):
    VELOCITY = 0
    TENSION = 1
    CURRENT = 2
    STOP = 3


class Source(IntEnum):
    RC = 0
    PC = 1


# kind -> (type range limit, wire units per engineering unit)
KIND_SCALING = {
    OrderKind.VELOCITY: (300.0, 10),     # rpm, 0.1 rpm
    OrderKind.TENSION: (24.0, 1000),     # V, mV
    OrderKind.CURRENT: (5000.0, 1),      # mA, mA
}
STEERING_LIMIT = 30.0
STEERING_SCALE = 10                      # 0.1 deg
VELOCITY_SCALE = 10
POSITION_SCALE = 10


# ============================================================
# DATA MODEL
# ============================================================

@dataclass(frozen=True)
class Order:
    """A decoded command: set-points for the four wheels and the steering, or a stop.

    `seq` is stamped by the reading mode; it tells consecutive orders apart
    and is not part of equality.
    """
    kind: OrderKind
    wheel: tuple = (0.0, 0.0, 0.0, 0.0)
    steering: float = 0.0
    source: Source = Source.PC
    seq: int = field(default=0, compare=False)

    def __post_init__(self):
        wheel = self.wheel
        if isinstance(wheel, (int, float)):
            wheel = (wheel,) * 4
        object.__setattr__(self, 'kind', OrderKind(self.kind))
        object.__setattr__(self, 'source', Source(self.source))
        object.__setattr__(self, 'wheel', tuple(float(w) for w in wheel))
        object.__setattr__(self, 'steering', float(self.steering))
        if len(self.wheel) != 4:
            raise RangeError(f"an order carries 4 wheel set-points, got {len(self.wheel)}")

    @classmethod
    def stop(cls, source=Source.PC):
        return cls(OrderKind.STOP, source=source)

    @classmethod
    def velocity(cls, rpm, steering=0.0, source=Source.PC):
        return cls(OrderKind.VELOCITY, rpm, steering, source)

    @classmethod
    def tension(cls, volts, steering=0.0, source=Source.PC):
        return cls(OrderKind.TENSION, volts, steering, source)

    @classmethod
    def current(cls, milliamps, steering=0.0, source=Source.PC):
        return cls(OrderKind.CURRENT, milliamps, steering, source)

    @property
    def is_stop(self):
        return self.kind == OrderKind.STOP

    def with_seq(self, seq):
        return Order(self.kind, self.wheel, self.steering, self.source, seq)


# All set-points at 0: what the controller acts on before any order arrives.
NEUTRAL_ORDER = Order(OrderKind.VELOCITY, source=Source.RC)


@dataclass(frozen=True)
class Telemetry:
    """Measured values and calculations the MCU reports after each cycle."""
    cycle: int = 0
    measured_vel: tuple = (0.0, 0.0, 0.0, 0.0)    # rpm
    measured_cur: tuple = (0, 0, 0, 0)            # mA
    measured_pos: float = 0.0                     # deg
    compute_time_us: int = 0
    op_state_code: int = 0
    mode_code: int = 0
    error: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'measured_vel', tuple(float(v) for v in self.measured_vel))
        object.__setattr__(self, 'measured_cur', tuple(int(c) for c in self.measured_cur))
        object.__setattr__(self, 'measured_pos', float(self.measured_pos))


@dataclass(frozen=True)
class Frame:
    msg_type: int
    payload: bytes
    crc: int

    def body(self):
        return bytes([self.msg_type, len(self.payload)]) + self.payload + bytes([self.crc])


# ============================================================
# CRC-8
# ============================================================

def _make_crc8_table(poly=CRC8_POLY):
    """Lookup table for byte value -> CRC-8 (MSB-first) remainder."""
    table = []
    for byte in range(256):
        crc = byte
        for _ in range(8):
            crc = ((crc << 1) ^ poly) if crc & 0x80 else (crc << 1)
            crc &= 0xFF
        table.append(crc)
    return tuple(table)


CRC8_TABLE = _make_crc8_table()


def crc8(data):
    crc = 0x00
    for byte in data:
        crc = CRC8_TABLE[crc ^ byte]
    return crc


# ============================================================
# SCALING
# ============================================================

def to_wire(value, scale, what='value'):
    n = int(round(value * scale))
    if n < I16_MIN or n > I16_MAX:
        raise RangeError(f"{what} {value} does not fit the i16 wire range")
    return n


def check_order(order):
    """Raise RangeError unless the order satisfies its type invariants."""
    if order.is_stop:
        if any(order.wheel) or order.steering:
            raise RangeError("a stop order carries no set-point values")
        return order
    limit, _ = KIND_SCALING[order.kind]
    for i, sp in enumerate(order.wheel):
        if abs(sp) > limit:
            raise RangeError(f"wheel {i} {order.kind.name.lower()} set-point {sp} outside [-{limit}, {limit}]")
    if abs(order.steering) > STEERING_LIMIT:
        raise RangeError(f"steering set-point {order.steering} outside [-{STEERING_LIMIT}, {STEERING_LIMIT}]")
    return order


# ============================================================
# ENCODING
# ============================================================

def build_frame(msg):
    """Scale a message to its wire payload and checksum it."""
    if isinstance(msg, Order):
        check_order(msg)
        if msg.is_stop:
            msg_type, payload = MSG_STOP, b''
        else:
            _, scale = KIND_SCALING[msg.kind]
            wheel = [to_wire(sp, scale, 'wheel set-point') for sp in msg.wheel]
            steering = to_wire(msg.steering, STEERING_SCALE, 'steering set-point')
            msg_type, payload = MSG_SETPOINT, SETPOINT_FORMAT.pack(int(msg.kind), *wheel, steering)
    elif isinstance(msg, Telemetry):
        if msg.compute_time_us < 0:
            raise RangeError("compute time cannot be negative")
        if not 0 <= msg.cycle <= 0xFFFF or not 0 <= msg.compute_time_us <= 0xFFFF:
            raise RangeError("cycle and compute time must fit u16")
        if not 0 <= msg.op_state_code < ERROR_FLAG or not 0 <= msg.mode_code <= 0xFF:
            raise RangeError("op-state code must fit 7 bits and mode code a byte")
        vel = [to_wire(v, VELOCITY_SCALE, 'measured velocity') for v in msg.measured_vel]
        cur = [to_wire(c, 1, 'measured current') for c in msg.measured_cur]
        pos = to_wire(msg.measured_pos, POSITION_SCALE, 'measured position')
        op_state = msg.op_state_code | (ERROR_FLAG if msg.error else 0)
        payload = TELEMETRY_FORMAT.pack(msg.cycle, *vel, *cur, pos, msg.compute_time_us,
                                        op_state, msg.mode_code)
        msg_type = MSG_TELEMETRY
    else:
        raise TypeError(f"cannot encode {type(msg).__name__}")

    header = bytes([msg_type, len(payload)])
    return Frame(msg_type, payload, crc8(header + payload))


def escape(body):
    out = bytearray()
    for byte in body:
        if byte in (FLAG, ESCAPE):
            out.append(ESCAPE)
            out.append(byte ^ ESCAPE_XOR)
        else:
            out.append(byte)
    return bytes(out)


def encode_frame(msg):
    return bytes([FLAG]) + escape(build_frame(msg).body())


# ============================================================
# DECODING
# ============================================================

def parse_body(msg_type, payload, source=Source.PC):
    """Turn a checksummed frame body back into an Order or Telemetry."""
    if msg_type not in PAYLOAD_LENGTHS:
        raise UnknownTypeError(f"unknown message type 0x{msg_type:02X}")
    if len(payload) != PAYLOAD_LENGTHS[msg_type]:
        raise FrameLengthError(
            f"type 0x{msg_type:02X} needs {PAYLOAD_LENGTHS[msg_type]} payload bytes, got {len(payload)}")

    if msg_type == MSG_STOP:
        return Order.stop(source)

    if msg_type == MSG_SETPOINT:
        kind, w0, w1, w2, w3, steering = SETPOINT_FORMAT.unpack(payload)
        try:
            kind = OrderKind(kind)
            _, scale = KIND_SCALING[kind]
        except (ValueError, KeyError):
            raise UnknownTypeError(f"unknown set-point kind {kind}") from None
        order = Order(kind, tuple(w / scale for w in (w0, w1, w2, w3)),
                      steering / STEERING_SCALE, source)
        return check_order(order)

    fields = TELEMETRY_FORMAT.unpack(payload)
    cycle, vel, cur, pos = fields[0], fields[1:5], fields[5:9], fields[9]
    compute_time, op_state, mode = fields[10], fields[11], fields[12]
    return Telemetry(
        cycle=cycle,
        measured_vel=tuple(v / VELOCITY_SCALE for v in vel),
        measured_cur=cur,
        measured_pos=pos / POSITION_SCALE,
        compute_time_us=compute_time,
        op_state_code=op_state & ~ERROR_FLAG,
        mode_code=mode,
        error=bool(op_state & ERROR_FLAG),
    )


class FrameDecoder:
    """Incremental, resynchronising decoder.  One instance per link.

    feed() takes one byte and returns a message exactly when a complete valid
    frame has been consumed.  A flag byte mid-frame drops the partial frame
    and starts a new one.
    """

    def __init__(self, source=Source.PC):
        self.source = source
        self._body = None          # None while hunting for a flag
        self._escaped = False
        self.frames_ok = 0
        self.frames_dropped = 0
        self.resyncs = 0

    @property
    def in_frame(self):
        return self._body is not None

    def reset(self):
        self._body = None
        self._escaped = False

    def feed(self, byte):
        if byte == FLAG:
            if self._body:
                self.resyncs += 1
                logger.debug("Flag inside a frame after %d bytes, resynchronising", len(self._body))
            self._body = bytearray()
            self._escaped = False
            return None
        if self._body is None:
            return None
        if self._escaped:
            byte ^= ESCAPE_XOR
            self._escaped = False
            if byte not in (FLAG, ESCAPE):
                self.reset()
                self.frames_dropped += 1
                raise EscapeError(f"escape followed by 0x{byte ^ ESCAPE_XOR:02X}")
        elif byte == ESCAPE:
            self._escaped = True
            return None

        self._body.append(byte)
        if len(self._body) >= 2 and len(self._body) == self._body[1] + 3:
            body = bytes(self._body)
            self.reset()
            return self._finish(body)
        return None

    def _finish(self, body):
        msg_type, payload, crc = body[0], body[2:-1], body[-1]
        expected = crc8(body[:-1])
        try:
            if crc != expected:
                raise ChecksumError(f"crc 0x{crc:02X} != 0x{expected:02X} for type 0x{msg_type:02X}")
            msg = parse_body(msg_type, payload, self.source)
        except (FrameError, RangeError):
            self.frames_dropped += 1
            raise
        self.frames_ok += 1
        return msg

    def iter_decode(self, data):
        """Feed a byte string; yield messages and, in place of dropped frames, the error."""
        for byte in data:
            try:
                msg = self.feed(byte)
            except WeedbotError as exc:
                logger.debug("Dropped frame: %s", exc)
                yield exc
                continue
            if msg is not None:
                yield msg


def decode_frames(data, source=Source.PC):
    """Decode every complete frame in `data`; errors are returned in place."""
    return list(FrameDecoder(source).iter_decode(data))
