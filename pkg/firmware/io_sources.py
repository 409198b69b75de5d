"""
Weeding Robot MCU — Message Sources and Sinks
==============================================
Where orders come from and where telemetry goes.

PC link:
    ByteChannel --> SerialReader (FrameDecoder, newest order wins)
    SerialWriter --> any byte sink, queued while the link is not connected
    SerialLink   Disconnected -> Connected -> Syncing (after repeated decode
                 failures) -> Connected
    A captured byte stream replays one flag-delimited chunk per cycle.

RC receiver:
    rc_pin.<channel> interrupts --> RcChannelBuffer (pulse width, freshness)
    BufferReader turns the two widths into a velocity order

Both sources are wrapped as reading modes (`Mode`) with one interface,
newMessage() / read(), so the main controller never knows which one it
polls.  Read extensions decorate a mode without changing that interface.
"""

import logging
import threading
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass

import pandas as pd

from firmware.calculations import CalcArgs, PercentArgs, PercentFromWidth, ScalePercent, WidthArgs
from firmware.errors import EdgeOrderError, EmptyReadError, SerialWriteError, WeedbotError
from firmware.kernel import US_PER_MS, ControlCommand
from firmware.messages import FLAG, FrameDecoder, Order, Source, Telemetry, encode_frame

logger = logging.getLogger(__name__)

RC_CHANNELS = ('velocity', 'direction')
RISE, FALL = 'rise', 'fall'
TRACE_COLUMNS = ['time_us', 'channel', 'level']


# ============================================================
# BYTE STREAMS
# ============================================================

class ByteChannel:
    """Inbound byte stream (in-memory stand-in for the UART receive buffer)."""

    def __init__(self):
        self._buffer = bytearray()
        self._lock = threading.Lock()

    def write(self, data):
        with self._lock:
            self._buffer.extend(data)

    def read_available(self):
        with self._lock:
            data, self._buffer = bytes(self._buffer), bytearray()
        return data

    def __len__(self):
        return len(self._buffer)


class ByteSink:
    """Outbound byte stream collecting everything written while open."""

    def __init__(self):
        self._chunks = []
        self.closed = False

    def write(self, data):
        if self.closed:
            raise SerialWriteError("serial sink is closed")
        self._chunks.append(bytes(data))

    def close(self):
        self.closed = True

    def getvalue(self):
        return b''.join(self._chunks)


# ============================================================
# SERIAL LINK STATES
# ============================================================

class LinkState:
    name = ''
    connected = False

    def on_frame(self, link):
        link.failures = 0
        return CONNECTED

    def on_failure(self, link):
        link.failures += 1
        return self


class DisconnectedState(LinkState):
    name = 'disconnected'


class ConnectedState(LinkState):
    name = 'connected'
    connected = True

    def on_failure(self, link):
        link.failures += 1
        return SYNCING if link.failures >= link.sync_threshold else self


class SyncingState(LinkState):
    name = 'syncing'


DISCONNECTED, CONNECTED, SYNCING = DisconnectedState(), ConnectedState(), SyncingState()


class SerialLink:
    def __init__(self, sync_threshold=3):
        self.sync_threshold = sync_threshold
        self.state = DISCONNECTED
        self.failures = 0
        self._listeners = []

    @property
    def connected(self):
        return self.state.connected

    def on_connect(self, callback):
        self._listeners.append(callback)

    def frame_ok(self):
        self._move(self.state.on_frame(self))

    def frame_failed(self):
        self._move(self.state.on_failure(self))

    def _move(self, new_state):
        old, self.state = self.state, new_state
        if new_state is old:
            return
        logger.info("Serial link %s -> %s", old.name, new_state.name)
        if new_state.connected:
            for callback in self._listeners:
                callback()


# ============================================================
# PC SOURCE / SINK
# ============================================================

class SerialReader:
    def __init__(self, channel, link, decoder=None):
        self.channel = channel
        self.link = link
        self.decoder = decoder or FrameDecoder(Source.PC)
        self.pending = None
        self.discarded = 0

    def new_message(self):
        """Drain the channel; True when at least one complete order is pending."""
        for item in self.decoder.iter_decode(self.channel.read_available()):
            if isinstance(item, WeedbotError):
                self.link.frame_failed()
                continue
            self.link.frame_ok()
            if not isinstance(item, Order):
                logger.debug("Ignoring inbound %s on the PC link", type(item).__name__)
                continue
            if self.pending is not None:
                self.discarded += 1
            self.pending = item
        return self.pending is not None

    def read(self):
        if self.pending is None:
            raise EmptyReadError("no order pending on the PC link")
        order, self.pending = self.pending, None
        return order


class SerialWriter:
    """Frames telemetry onto the sink; queues frames while the link is down."""

    def __init__(self, sink, link, queue_size=64):
        self.sink = sink
        self.link = link
        self.queue = deque(maxlen=queue_size)
        self.sent = 0
        self.dropped = 0
        self.write_errors = 0
        link.on_connect(self.flush)

    def write(self, telemetry):
        frame = encode_frame(telemetry)
        if not self.link.connected:
            if len(self.queue) == self.queue.maxlen:
                self.dropped += 1
            self.queue.append(frame)
            return False
        self.flush()
        return self._emit(frame)

    def flush(self):
        while self.queue:
            if not self._emit(self.queue.popleft()):
                break

    def _emit(self, frame):
        try:
            self.sink.write(frame)
        except (SerialWriteError, OSError, ValueError) as exc:
            self.write_errors += 1
            logger.warning("Telemetry write failed: %s", exc)
            return False
        self.sent += 1
        return True


def serial_write(writer, telemetry):
    if not isinstance(telemetry, Telemetry):
        raise TypeError(f"expected Telemetry, got {type(telemetry).__name__}")
    return writer.write(telemetry)


# ============================================================
# RC RECEIVER
# ============================================================

class RcChannelBuffer:
    """Pulse-width buffer of one RC pin.

    on_edge() is the fixed skeleton; sub-classes say how a width becomes a
    set-point through `full_scale`.
    """

    channel = ''
    full_scale = 0.0

    def __init__(self, min_width=900, max_width=2100, center=1500, span=500, stale_ms=100,
                 full_scale=None):
        if full_scale is not None:
            self.full_scale = float(full_scale)
        self.min_width = min_width
        self.max_width = max_width
        self.center = center
        self.span = span
        self.stale_us = stale_ms * US_PER_MS
        self.last_rise = None
        self.last_width = None
        self.last_update = None
        self.rejected = 0

    def reset(self):
        self.last_rise = None

    def on_edge(self, level, at):
        if level == RISE:
            if self.last_rise is not None:
                self.reset()
                raise EdgeOrderError(f"{self.channel}: two rising edges, second at {at} us")
            self.last_rise = at
            return self
        if level != FALL:
            raise ValueError(f"unknown RC pin level {level!r}")
        if self.last_rise is None:
            raise EdgeOrderError(f"{self.channel}: falling edge at {at} us without a rise")
        width, self.last_rise = at - self.last_rise, None
        if self.accept(width):
            self.last_width = width
            self.last_update = at
        else:
            self.rejected += 1
            logger.debug("%s: rejected %d us pulse", self.channel, width)
        return self

    def accept(self, width):
        return self.min_width <= width <= self.max_width

    def is_fresh(self, now):
        return self.last_update is not None and now - self.last_update <= self.stale_us

    def setpoint(self, width=None):
        """Width -> percent deflection -> set-point in engineering units."""
        width = self.last_width if width is None else width
        percent = PercentFromWidth().calculate(
            WidthArgs(CalcArgs(), width=width, center=self.center, span=self.span))
        return ScalePercent().calculate(PercentArgs(CalcArgs(), percent=percent, full_scale=self.full_scale))


class VelocityBuffer(RcChannelBuffer):
    channel = 'velocity'
    full_scale = 300.0       # rpm


class DirectionBuffer(RcChannelBuffer):
    channel = 'direction'
    full_scale = 30.0        # deg


class RcPinCommand(ControlCommand):
    """`rc_pin.<channel>` handler; the payload is the pin level."""

    def __init__(self, buffer):
        self.buffer = buffer
        self.name = f"rc_pin.{buffer.channel}"
        self.edge_errors = 0

    def execute(self, at, payload=None):
        try:
            self.buffer.on_edge(payload, at)
        except EdgeOrderError as exc:
            self.edge_errors += 1
            logger.debug("RC edge dropped: %s", exc)


class BufferReader:
    """Turns the two RC channel buffers into orders."""

    def __init__(self, velocity, direction, clock):
        self.velocity = velocity
        self.direction = direction
        self.clock = clock
        self._last_read = (None, None)

    def _stamp(self):
        return (self.velocity.last_update, self.direction.last_update)

    def new_message(self):
        now = self.clock()
        fresh = self.velocity.is_fresh(now) and self.direction.is_fresh(now)
        return fresh and self._stamp() != self._last_read

    def read(self):
        if not self.new_message():
            raise EmptyReadError("RC channels hold no fresh pulse")
        self._last_read = self._stamp()
        return rc_order(self.velocity.last_width, self.direction.last_width, self.velocity, self.direction)


def rc_order(velocity_width, direction_width, velocity=None, direction=None):
    """Pure RC decode of the two most recent pulse widths."""
    velocity = velocity or VelocityBuffer()
    direction = direction or DirectionBuffer()
    rpm = velocity.setpoint(velocity_width)
    degrees = direction.setpoint(direction_width)
    return Order.velocity(rpm, degrees, source=Source.RC)


def pulse_edges(channel, width, at):
    """The two trace rows of one pulse starting at `at`."""
    return [(at, channel, RISE), (at + width, channel, FALL)]


def read_rc_trace(path):
    """Load a `time_us,channel,level` trace, sorted by time (stable)."""
    trace = pd.read_csv(path, dtype={'time_us': 'int64', 'channel': str, 'level': str})
    missing = set(TRACE_COLUMNS) - set(trace.columns)
    if missing:
        raise ValueError(f"{path}: RC trace lacks columns {sorted(missing)}")
    bad = ~trace['channel'].isin(RC_CHANNELS) | ~trace['level'].isin([RISE, FALL])
    if bad.any():
        raise ValueError(f"{path}: unknown channel or level on row {int(bad.idxmax()) + 2}")
    return trace[TRACE_COLUMNS].sort_values('time_us', kind='stable').reset_index(drop=True)


def write_rc_trace(edges, path):
    pd.DataFrame(list(edges), columns=TRACE_COLUMNS).to_csv(path, index=False)


def split_pc_stream(data):
    """Cut a raw serial capture into per-cycle chunks, one per flag byte.

    Bytes before the first flag stay with the first chunk.
    """
    starts = [i for i, byte in enumerate(data) if byte == FLAG]
    if not starts:
        return [bytes(data)] if data else []
    starts[0] = 0
    return [bytes(data[a:b]) for a, b in zip(starts, starts[1:] + [len(data)])]


def read_pc_stream(path):
    with open(path, 'rb') as f:
        return split_pc_stream(f.read())


def write_pc_stream(frames, path):
    with open(path, 'wb') as f:
        f.write(b''.join(frames))


# ============================================================
# READING MODES
# ============================================================

class Mode(ABC):
    """What the main controller needs from an order source."""

    code = None
    name = ''

    @abstractmethod
    def new_message(self):
        ...

    @abstractmethod
    def read(self):
        ...

    def __repr__(self):
        return f"<{type(self).__name__} {self.name} code={self.code}>"


class PcMode(Mode):
    code = int(Source.PC)
    name = 'PC'

    def __init__(self, reader):
        self.reader = reader

    def new_message(self):
        return self.reader.new_message()

    def read(self):
        return self.reader.read()


class RcMode(Mode):
    code = int(Source.RC)
    name = 'RC'

    def __init__(self, reader):
        self.reader = reader

    def new_message(self):
        return self.reader.new_message()

    def read(self):
        return self.reader.read()


class ModeDecorator(Mode):
    def __init__(self, inner):
        self.inner = inner

    @property
    def code(self):
        return self.inner.code

    @property
    def name(self):
        return self.inner.name

    def new_message(self):
        return self.inner.new_message()

    def read(self):
        return self.inner.read()


class TagSequence(ModeDecorator):
    """Stamps each order read with a per-source increasing sequence number."""

    def __init__(self, inner):
        super().__init__(inner)
        self.seq = 0

    def read(self):
        order = self.inner.read()
        self.seq += 1
        return order.with_seq(self.seq)


class SaveModeId(ModeDecorator):
    """Records the id of the mode that produced the last order."""

    def __init__(self, inner, ctrl_data):
        super().__init__(inner)
        self.ctrl_data = ctrl_data

    def read(self):
        order = self.inner.read()
        self.ctrl_data.mode_id = self.code
        return order


@dataclass
class ControlData:
    """Controller data record read extensions write into."""
    mode_id: int = int(Source.RC)
