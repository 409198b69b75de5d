"""
Weeding Robot MCU — Pipes
==========================
The connector between a measurement source and a controller sink.  A pipe
is a single latest-value slot: writers publish (value, seq, written_at),
readers see the newest slot and whether it advanced since they last looked.

Neither end knows the other, so a sensor stack can be swapped for any
other writer producing the same values without touching the controller.
"""

import threading
from dataclasses import dataclass

from firmware.errors import BuildError


@dataclass(frozen=True)
class PipeSlot:
    value: float = 0.0
    seq: int = 0
    written_at: int = 0      # sim time, us


EMPTY_SLOT = PipeSlot()


class Pipe:
    """One writer, many readers.

    The slot is an immutable object swapped in one reference assignment, so
    a reader always sees a whole slot, never half of one.
    """

    def __init__(self, name, unit=''):
        self.name = name
        self.unit = unit
        self._slot = EMPTY_SLOT
        self._write_lock = threading.Lock()
        self.source = None
        self.sink = None

    def write(self, value, at=0):
        with self._write_lock:
            self._slot = PipeSlot(value, self._slot.seq + 1, at)

    def latest(self):
        return self._slot

    def reader(self):
        return PipeReader(self)

    # -- assembly bookkeeping --

    def bind_source(self, name):
        if self.source is not None:
            raise BuildError(f"pipe {self.name} already has source {self.source}")
        self.source = name

    def bind_sink(self, name):
        if self.sink is not None:
            raise BuildError(f"pipe {self.name} already has sink {self.sink}")
        self.sink = name

    @property
    def is_bound(self):
        return self.source is not None and self.sink is not None

    def __repr__(self):
        slot = self._slot
        return f"Pipe({self.name}={slot.value}{self.unit}, seq={slot.seq})"


class PipeReader:
    """A sink's view of a pipe; remembers the last sequence number it saw."""

    def __init__(self, pipe):
        self.pipe = pipe
        self._last_seq = 0

    def read_latest(self):
        """Return (value, seq, fresh); fresh iff seq advanced since the previous call."""
        slot = self.pipe.latest()
        fresh = slot.seq > self._last_seq
        self._last_seq = slot.seq
        return slot.value, slot.seq, fresh
