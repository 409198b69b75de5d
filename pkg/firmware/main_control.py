"""
Weeding Robot MCU — Main Control
=================================
The main controller runs one control cycle per FirstTimer pulse:

    1. read     poll the current reading mode, step the two FSMs
    2. control  send the cycle command to the four wheel systems and the
                dir system, wait for all of them
    3. write    send telemetry to the PC

The recorded compute time spans all three phases.

Two concurrent state machines decide what the read phase does:

    operation state   Working -> Waiting 1 .. Waiting N -> Reconnecting
                      (any state returns to Working when a message arrives)
    mode              RC <-> PC, switched only on a silent cycle that
                      starts in Reconnecting

When no message arrives, the set-points of the previous cycle are used.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor, wait
from dataclasses import dataclass, field, replace
from enum import Enum

from firmware.errors import WeedbotError
from firmware.io_sources import ControlData, serial_write
from firmware.messages import NEUTRAL_ORDER, Source, Telemetry
from firmware.wheel_control import CycleCommand

logger = logging.getLogger(__name__)

MODE_NAMES = {int(Source.RC): 'RC', int(Source.PC): 'PC'}
RECONNECTING_CODE = 0x7F
MAX_WAITING = RECONNECTING_CODE - 1    # Waiting(i) reports i in the 7-bit op-state field
U16_MAX = 0xFFFF


class Action(Enum):
    READ_NEW = 'read_new'
    USE_PREVIOUS = 'use_previous'


# ============================================================
# OPERATION STATES
# ============================================================

class OperationState:
    """Operation state of the main controller.

    read() is the fixed skeleton: ask the current mode for a message, then
    run the state's action for "message" or "no message".
    """

    code = 0
    toggles_mode = False

    def on_message(self, n):
        return WORKING

    def on_silence(self, n):
        raise NotImplementedError

    def read(self, ctrl):
        mode = ctrl.current_mode()
        if mode.new_message():
            return self.action_with_msg(ctrl, mode)
        return self.action_without_msg(ctrl)

    def action_with_msg(self, ctrl, mode):
        ctrl.state, action = fsm_step(ctrl.state, True)
        ctrl.state = replace(ctrl.state, last_order=mode.read())
        return action

    def action_without_msg(self, ctrl):
        ctrl.state, action = fsm_step(ctrl.state, False)
        return action

    def __eq__(self, other):
        return type(self) is type(other) and self.code == other.code

    def __hash__(self):
        return hash((type(self).__name__, self.code))

    def __repr__(self):
        return self.name

    @property
    def name(self):
        return type(self).__name__


class Working(OperationState):
    code = 0

    def on_silence(self, n):
        return Waiting(1)


class Waiting(OperationState):
    def __init__(self, i):
        if i < 1:
            raise ValueError(f"waiting index starts at 1, got {i}")
        self.i = i
        self.code = i

    def on_silence(self, n):
        return Waiting(self.i + 1) if self.i < n else RECONNECTING

    @property
    def name(self):
        return f"Waiting{self.i}"


class Reconnecting(OperationState):
    code = RECONNECTING_CODE
    toggles_mode = True

    def on_silence(self, n):
        return RECONNECTING

    def action_without_msg(self, ctrl):
        before = ctrl.state.mode
        action = super().action_without_msg(ctrl)
        logger.info("No message while reconnecting, mode %s -> %s",
                    ctrl.mode_name(before), ctrl.mode_name(ctrl.state.mode))
        return action


WORKING = Working()
RECONNECTING = Reconnecting()


@dataclass(frozen=True)
class CtrlState:
    op_state: OperationState = WORKING
    mode: int = int(Source.RC)
    n: int = 5
    rotation: tuple = (int(Source.RC), int(Source.PC))
    last_order: object = field(default=NEUTRAL_ORDER, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"wait depth N must be >= 1, got {self.n}")
        if self.mode not in self.rotation:
            raise ValueError(f"mode {self.mode} is not in the rotation {self.rotation}")

    def next_mode(self):
        i = self.rotation.index(self.mode)
        return self.rotation[(i + 1) % len(self.rotation)]


def initial_state(n=5, rotation=None):
    """(Working, RC) with the neutral order."""
    rotation = tuple(rotation) if rotation else (int(Source.RC), int(Source.PC))
    return CtrlState(WORKING, rotation[0], n, rotation)


def fsm_step(s, available):
    """
    One step of both machines.

    A message always leads to Working and ReadNew with the mode unchanged.
    Silence advances the operation state and yields UsePrevious; the mode
    moves to the next one in the rotation only when the cycle started in
    Reconnecting.
    """
    if available:
        return replace(s, op_state=s.op_state.on_message(s.n)), Action.READ_NEW
    mode = s.next_mode() if s.op_state.toggles_mode else s.mode
    return replace(s, op_state=s.op_state.on_silence(s.n), mode=mode), Action.USE_PREVIOUS


# ============================================================
# SUB-SYSTEM POOL
# ============================================================

class SubsystemPool:
    """The four wheel systems and the dir system, run one after another."""

    threaded = False

    def __init__(self, wheels, dir_system):
        self.wheels = list(wheels)
        self.dir_system = dir_system

    @property
    def members(self):
        return self.wheels + [self.dir_system]

    def run_cycle(self, cmd):
        """Run the cycle orders everywhere; return the errors raised (first aborts)."""
        for system in self.members:
            try:
                system.execute_cycle_orders(cmd)
            except Exception as exc:
                logger.warning("Cycle %d: %s failed, control phase aborted: %s", cmd.cycle, system.name, exc)
                return [exc]
        return []

    def close(self):
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class ThreadedPool(SubsystemPool):
    """One worker per sub-system; run_cycle returns once all of them are done.

    Every sub-system runs to completion, so on a cycle where one of them fails
    the others still actuate.  The sequential pool stops at the first failure;
    outside failing cycles both pools produce the same control outputs.
    """

    threaded = True

    def __init__(self, wheels, dir_system):
        super().__init__(wheels, dir_system)
        self._executors = {
            system.name: ThreadPoolExecutor(max_workers=1, thread_name_prefix=system.name)
            for system in self.members
        }

    def run_cycle(self, cmd):
        futures = {
            self._executors[system.name].submit(system.execute_cycle_orders, cmd): system
            for system in self.members
        }
        wait(futures)
        errors = []
        for future, system in futures.items():
            exc = future.exception()
            if exc is not None:
                logger.warning("Cycle %d: %s failed: %s", cmd.cycle, system.name, exc)
                errors.append(exc)
        return errors

    def close(self):
        for executor in self._executors.values():
            executor.shutdown(wait=True)


# ============================================================
# CYCLE METRICS
# ============================================================

@dataclass(frozen=True)
class CycleMetrics:
    cycle: int
    compute_time_us: int
    op_state: str
    mode: str
    order_source: str
    wheel_sp: tuple
    wheel_rpm: tuple
    wheel_volts: tuple
    wheel_ma: tuple
    steer_sp: float
    steer_pos: float
    error: bool = False

    def as_row(self):
        row = {
            'cycle': self.cycle,
            'compute_time_us': self.compute_time_us,
            'op_state': self.op_state,
            'mode': self.mode,
            'order_source': self.order_source,
        }
        for i in range(len(self.wheel_sp)):
            row[f'w{i}_sp'] = self.wheel_sp[i]
            row[f'w{i}_rpm'] = self.wheel_rpm[i]
            row[f'w{i}_volts'] = self.wheel_volts[i]
            row[f'w{i}_ma'] = self.wheel_ma[i]
        row['steer_sp'] = self.steer_sp
        row['steer_pos'] = self.steer_pos
        row['error'] = self.error
        return row

    @classmethod
    def from_row(cls, row):
        wheels = range(4)
        return cls(
            cycle=int(row['cycle']),
            compute_time_us=int(row['compute_time_us']),
            op_state=str(row['op_state']),
            mode=str(row['mode']),
            order_source=str(row['order_source']),
            wheel_sp=tuple(float(row[f'w{i}_sp']) for i in wheels),
            wheel_rpm=tuple(float(row[f'w{i}_rpm']) for i in wheels),
            wheel_volts=tuple(float(row[f'w{i}_volts']) for i in wheels),
            wheel_ma=tuple(float(row[f'w{i}_ma']) for i in wheels),
            steer_sp=float(row['steer_sp']),
            steer_pos=float(row['steer_pos']),
            error=bool(row['error']),
        )


def metrics_columns():
    cols = ['cycle', 'compute_time_us', 'op_state', 'mode', 'order_source']
    for i in range(4):
        cols += [f'w{i}_sp', f'w{i}_rpm', f'w{i}_volts', f'w{i}_ma']
    return cols + ['steer_sp', 'steer_pos', 'error']


# ============================================================
# MAIN CONTROLLER
# ============================================================

class MainController:
    def __init__(self, modes, pool, writer, n=5, rotation=None, ctrl_data=None, timing='wall'):
        if isinstance(modes, (list, tuple)):
            modes = {mode.code: mode for mode in modes}
        self.modes = dict(modes)
        rotation = tuple(rotation) if rotation else tuple(sorted(self.modes))
        self.state = initial_state(n, rotation)
        self.pool = pool
        self.writer = writer
        self.ctrl_data = ctrl_data or ControlData()
        self.timing = timing
        self.cycle = 0
        self.metrics = []
        self.telemetry = []

    # -- read phase --

    def current_mode(self):
        return self.modes[self.state.mode]

    def mode_name(self, code):
        mode = self.modes.get(code)
        return mode.name if mode is not None else MODE_NAMES.get(code, str(code))

    @property
    def last_order(self):
        return self.state.last_order

    def read_phase(self):
        return self.state.op_state.read(self)

    # -- the cycle --

    def _clock(self):
        return time.perf_counter_ns() if self.timing == 'wall' else 0

    def on_control_tick(self, at=0, payload=None):
        started = self._clock()
        errors = []
        try:
            self.read_phase()
        except WeedbotError as exc:
            logger.warning("Cycle %d: read phase failed: %s", self.cycle, exc)
            errors.append(exc)

        cmd = CycleCommand(self.cycle, at, self.state.last_order)
        if not errors:
            errors = self.pool.run_cycle(cmd)

        compute_us = (self._clock() - started) // 1000
        metrics = self._snapshot(compute_us, bool(errors))
        self._write(metrics)
        if self.timing == 'wall':
            # telemetry carries the time up to encoding; metrics include the write
            metrics = replace(metrics, compute_time_us=(self._clock() - started) // 1000)
        self.metrics.append(metrics)
        self.cycle += 1
        return metrics

    def _snapshot(self, compute_us, error):
        wheels = self.pool.wheels
        steer = self.pool.dir_system
        return CycleMetrics(
            cycle=self.cycle,
            compute_time_us=int(max(compute_us, 0)),
            op_state=self.state.op_state.name,
            mode=self.mode_name(self.state.mode),
            order_source=self.mode_name(self.ctrl_data.mode_id),
            wheel_sp=tuple(w.setpoint for w in wheels),
            wheel_rpm=tuple(w.rpm for w in wheels),
            wheel_volts=tuple(w.volts for w in wheels),
            wheel_ma=tuple(w.milliamps for w in wheels),
            steer_sp=steer.controller.target,
            steer_pos=steer.position,
            error=error,
        )

    def _write(self, metrics):
        telemetry = Telemetry(
            cycle=metrics.cycle & U16_MAX,
            measured_vel=metrics.wheel_rpm,
            measured_cur=tuple(int(round(ma)) for ma in metrics.wheel_ma),
            measured_pos=metrics.steer_pos,
            compute_time_us=min(metrics.compute_time_us, U16_MAX),
            op_state_code=self.state.op_state.code,
            mode_code=self.state.mode,
            error=metrics.error,
        )
        self.telemetry.append(telemetry)
        try:
            serial_write(self.writer, telemetry)
        except WeedbotError as exc:
            logger.warning("Cycle %d: telemetry not sent: %s", metrics.cycle, exc)
