"""
Weeding Robot MCU — Sensors
============================
Measurement stacks that write controlled variables to pipes.

    velocity:  ActiveSensor -> CountSignal -> SensorCollector -> VelSensor
    current:   ReadCnt -> ValueCollector -> CntSensor
    position:  DirSensor

ActiveSensor and ReadCnt are the commands registered for the `hall.<i>`
and `read_cnt.<i>` interrupts.  Collector decorations (period, frequency,
duty) add one derived quantity to a reading and leave its base fields alone.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from firmware.calculations import CalcArgs, CountArgs, RpmFromCount
from firmware.errors import OrderingError
from firmware.kernel import US_PER_S, ControlCommand

logger = logging.getLogger(__name__)

RING_SIZE = 64


# ============================================================
# PULSE ACCUMULATOR
# ============================================================

@dataclass(frozen=True)
class PulseAccumulator:
    count: int = 0
    window_start: int = 0         # sim us
    timestamps: tuple = ()        # ascending, newest last, at most `ring` entries
    direction: int = 0


def on_hall_edge(acc, at, direction=1, ring=RING_SIZE):
    """Count one edge and remember its time instant."""
    if acc.timestamps and at < acc.timestamps[-1]:
        raise OrderingError(f"hall edge at {at} us precedes the last edge at {acc.timestamps[-1]} us")
    timestamps = (acc.timestamps + (at,))[-ring:]
    return PulseAccumulator(acc.count + 1, acc.window_start, timestamps, direction)


def sample_velocity(acc, dt, ppr, at=None):
    """
    Return (rpm, fresh accumulator) for the window just closed.

    rpm = count*60/(P*dt), signed by the direction of the last edge.  The
    new accumulator keeps the timestamp ring and restarts the count.
    """
    args = CountArgs(CalcArgs(dt=dt), count=acc.count, ppr=ppr)
    rpm = RpmFromCount().calculate(args)
    if acc.direction < 0:
        rpm = -rpm
    start = acc.window_start if at is None else at
    return rpm, PulseAccumulator(0, start, acc.timestamps, acc.direction)


def quantize_position(position, step=0.1):
    """Truncate toward zero to a multiple of `step` degrees."""
    scale = round(1 / step)
    return math.trunc(round(position * scale, 6)) / scale


# ============================================================
# VELOCITY STACK
# ============================================================

class CountSignal:
    """Holds the pulse accumulator of one wheel."""

    def __init__(self, ring=RING_SIZE):
        self.ring = ring
        self.acc = PulseAccumulator()

    def on_edge(self, at, direction=1):
        self.acc = on_hall_edge(self.acc, at, direction, self.ring)

    def take(self, at):
        """Hand over the accumulator and open a new window at `at`."""
        acc = self.acc
        self.acc = PulseAccumulator(0, at, acc.timestamps, acc.direction)
        return acc


class ActiveSensor(ControlCommand):
    """Command for a Hall edge interrupt; the payload is the edge direction."""

    def __init__(self, signal, name='hall'):
        self.signal = signal
        self.name = name

    def execute(self, at, payload=None):
        self.signal.on_edge(at, 1 if payload is None else payload)


@dataclass(frozen=True)
class CollectorReading:
    rpm: float = 0.0
    count: int = 0
    timestamps: tuple = ()
    extras: dict = field(default_factory=dict, compare=False)


class SensorCollector:
    def __init__(self, signal, dt=0.1, ppr=24):
        self.signal = signal
        self.dt = dt
        self.ppr = ppr

    def collect(self, at):
        acc = self.signal.take(at)
        rpm, _ = sample_velocity(acc, self.dt, self.ppr, at)
        return CollectorReading(rpm=rpm, count=acc.count, timestamps=acc.timestamps)


class CollectorDecorator:
    """Adds one derived quantity to the readings of the wrapped collector."""

    quantity = ''

    def __init__(self, inner):
        self.inner = inner

    def collect(self, at):
        reading = self.inner.collect(at)
        return replace(reading, extras={**reading.extras, self.quantity: self.derive(reading)})

    def derive(self, reading):
        raise NotImplementedError


class PeriodCollector(CollectorDecorator):
    """Seconds between the last two edges; 0 with fewer than two."""
    quantity = 'period'

    def derive(self, reading):
        ts = reading.timestamps
        return (ts[-1] - ts[-2]) / US_PER_S if len(ts) >= 2 else 0.0


class FrequencyCollector(CollectorDecorator):
    quantity = 'frequency'

    def derive(self, reading):
        ts = reading.timestamps
        if len(ts) < 2 or ts[-1] == ts[-2]:
            return 0.0
        return US_PER_S / (ts[-1] - ts[-2])


class DutyCollector(CollectorDecorator):
    """Share of the last full signal period spent in the current level.

    Edges alternate the Hall level, so the last three instants span one
    period.
    """
    quantity = 'duty'

    def derive(self, reading):
        ts = reading.timestamps
        if len(ts) < 3 or ts[-1] == ts[-3]:
            return 0.0
        return (ts[-1] - ts[-2]) / (ts[-1] - ts[-3])


class VelSensor:
    """Writes the collected wheel speed to the velocity pipe."""

    def __init__(self, collector, pipe):
        self.collector = collector
        self.pipe = pipe
        self.last_reading = CollectorReading()

    def sample(self, at):
        self.last_reading = self.collector.collect(at)
        self.pipe.write(self.last_reading.rpm, at)
        return self.last_reading.rpm


# ============================================================
# CURRENT STACK
# ============================================================

class ValueCollector:
    """Current samples taken since the last control cycle; the pipe gets their mean."""

    def __init__(self):
        self.samples = []

    def add(self, value):
        self.samples.append(value)
        return float(np.mean(self.samples))

    def drain(self):
        samples, self.samples = self.samples, []
        return samples


class CntSensor:
    def __init__(self, pipe, limit=5000.0):
        self.pipe = pipe
        self.limit = limit

    def clip(self, milliamps):
        return float(np.clip(milliamps, -self.limit, self.limit))

    def publish(self, milliamps, at):
        value = self.clip(milliamps)
        self.pipe.write(value, at)
        return value


class ReadCnt(ControlCommand):
    """SecondTimer command sampling one wheel's current.

    `probe` returns the raw winding current in mA.
    """

    def __init__(self, probe, collector, sensor, name='read_cnt'):
        self.probe = probe
        self.collector = collector
        self.sensor = sensor
        self.name = name

    def execute(self, at, payload=None):
        sample_current(self.probe, self.sensor, at, self.collector)


def sample_current(probe, sensor, at, collector=None):
    """Read the raw current, clip it to the sensor range and publish it.

    With a collector the published value is the mean of the samples in the
    current control period.
    """
    value = sensor.clip(probe())
    if collector is not None:
        value = collector.add(value)
    return sensor.publish(value, at)


# ============================================================
# POSITION
# ============================================================

class DirSensor(ControlCommand):
    """Reads the steering angle, quantized to 0.1 deg, into the position pipe."""

    name = 'dir_sensor'

    def __init__(self, probe, pipe):
        self.probe = probe
        self.pipe = pipe

    def sample(self, at):
        value = quantize_position(self.probe())
        self.pipe.write(value, at)
        return value

    def execute(self, at, payload=None):
        self.sample(at)
