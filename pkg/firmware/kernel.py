"""
Weeding Robot MCU — Simulation Kernel
======================================
Virtual clock, discrete-event scheduler, periodic timers (FirstTimer,
SecondTimer) and interrupt -> ControlCommand dispatch.

Interrupt handlers are command objects registered per interrupt id and can
be replaced at run time without touching the kernel ("callback
substitution").  Sim time is an integer number of microseconds and has no
relation to the wall clock.

Execution order is total and replayable:
    1. timestamp
    2. interrupts before timers
    3. interrupts: handler registration order, then raise order
       timers: shorter period first, then registration order
"""

import heapq
import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

from firmware.errors import (
    DuplicateRegistrationError,
    TimeReversalError,
    UnhandledInterruptError,
)

logger = logging.getLogger(__name__)

US_PER_MS = 1000
US_PER_S = 1_000_000

_INTERRUPT, _TIMER = 0, 1


def ms(value):
    """Milliseconds -> sim time."""
    return int(round(value * US_PER_MS))


# ============================================================
# COMMANDS
# ============================================================

class ControlCommand(ABC):
    """An invokable action bound to its target modules at build time."""

    name = 'command'

    @abstractmethod
    def execute(self, at, payload=None):
        ...

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class FunctionCommand(ControlCommand):
    def __init__(self, fn, name=None):
        self.fn = fn
        self.name = name or getattr(fn, '__name__', 'function')

    def execute(self, at, payload=None):
        return self.fn(at, payload)


class MacroCommand(ControlCommand):
    """Runs several commands in order, same timestamp and payload."""

    def __init__(self, commands, name='macro'):
        self.commands = list(commands)
        self.name = name

    def execute(self, at, payload=None):
        for command in self.commands:
            command.execute(at, payload)


class DispatchCommand(ControlCommand):
    """Forwards to whatever command is registered for `interrupt_id` right now.

    Timers fire these, so replacing the registered handler retargets the
    timer too.
    """

    def __init__(self, kernel, interrupt_id):
        self.kernel = kernel
        self.interrupt_id = interrupt_id
        self.name = interrupt_id

    def execute(self, at, payload=None):
        return self.kernel.handler(self.interrupt_id).execute(at, payload)


# ============================================================
# TIMERS
# ============================================================

@dataclass
class TimerHandle:
    id: str
    period: float            # ms
    next_fire: int           # sim time, us
    period_us: int = 0
    start: int = 0
    fired: int = 0
    cancelled: bool = False
    command: ControlCommand = field(default=None, repr=False)

    def cancel(self):
        self.cancelled = True


# ============================================================
# KERNEL
# ============================================================

class SimKernel:
    def __init__(self, record_trace=False):
        self._now = 0
        self._queue = []
        self._seq = itertools.count()
        self._handlers = {}
        self._handler_rank = {}
        self._timers = []
        self.record_trace = record_trace
        self.trace = []
        self.executed = 0

    @property
    def now(self):
        return self._now

    # -- interrupt registration --

    def register(self, interrupt_id, command):
        if interrupt_id in self._handlers:
            raise DuplicateRegistrationError(f"interrupt {interrupt_id!r} already has a handler")
        self._handler_rank[interrupt_id] = len(self._handler_rank)
        self._handlers[interrupt_id] = command

    def replace(self, interrupt_id, command):
        """Substitute the handler of an already registered interrupt."""
        if interrupt_id not in self._handlers:
            raise UnhandledInterruptError(f"interrupt {interrupt_id!r} has no handler to replace")
        self._handlers[interrupt_id] = command

    def handler(self, interrupt_id):
        try:
            return self._handlers[interrupt_id]
        except KeyError:
            raise UnhandledInterruptError(f"no command registered for interrupt {interrupt_id!r}") from None

    def interrupt_ids(self):
        return list(self._handlers)

    def families(self):
        """Registered interrupt families: ids grouped by the part before the first dot."""
        return sorted({iid.split('.', 1)[0] for iid in self._handlers})

    # -- scheduling --

    def schedule_periodic(self, period, command, name=None):
        """Fire `command` at now + k*period (ms), k = 1, 2, ... until cancelled."""
        if period <= 0:
            raise ValueError(f"timer period must be > 0 ms, got {period}")
        period_us = ms(period)
        if period_us <= 0:
            raise ValueError(f"timer period {period} ms is below the 1 us clock resolution")
        handle = TimerHandle(
            id=name or f"timer{len(self._timers)}",
            period=period,
            next_fire=self._now + period_us,
            period_us=period_us,
            start=self._now,
            command=command,
        )
        handle.rank = len(self._timers)
        self._timers.append(handle)
        self._push_timer(handle)
        return handle

    def cancel(self, handle):
        handle.cancel()

    def timers(self):
        return list(self._timers)

    def _push_timer(self, handle):
        heapq.heappush(self._queue, (handle.next_fire, _TIMER, handle.period_us, handle.rank,
                                     next(self._seq), handle, None))

    def raise_interrupt(self, interrupt_id, at=None, payload=None):
        """Enqueue the registered command for execution at `at` (default: now)."""
        at = self._now if at is None else int(at)
        if at < self._now:
            raise TimeReversalError(f"interrupt {interrupt_id!r} at {at} us is before now ({self._now} us)")
        if interrupt_id not in self._handlers:
            raise UnhandledInterruptError(f"no command registered for interrupt {interrupt_id!r}")
        heapq.heappush(self._queue, (at, _INTERRUPT, self._handler_rank[interrupt_id], 0,
                                     next(self._seq), interrupt_id, payload))

    def pending(self):
        return sum(1 for entry in self._queue
                   if not (entry[1] == _TIMER and entry[5].cancelled))

    # -- running --

    def advance_until(self, t):
        """Execute every event with time <= t in order; afterwards now == t."""
        t = int(t)
        if t < self._now:
            raise TimeReversalError(f"cannot advance to {t} us, now is {self._now} us")
        queue = self._queue
        while queue and queue[0][0] <= t:
            at, kind, _, _, _, target, payload = heapq.heappop(queue)
            if kind == _TIMER and target.cancelled:
                continue
            self._now = at
            if kind == _TIMER:
                target.fired += 1
                target.next_fire = target.start + (target.fired + 1) * target.period_us
                self._push_timer(target)
                self._run(at, target.id, target.command, None)
            else:
                # looked up at execution time: a replaced handler takes effect immediately
                self._run(at, target, self._handlers[target], payload)
        self._now = t

    def advance_by(self, dt):
        self.advance_until(self._now + int(dt))

    def _run(self, at, name, command, payload):
        if self.record_trace:
            self.trace.append((at, name))
        self.executed += 1
        command.execute(at, payload)
