"""
Weeding Robot MCU — Wheel Control
==================================
Per-wheel controller:

  * control algorithms, one strategy per order kind
    (velocity PI, current PI, tension passthrough)
  * wheel behaviours (advance) with decorator extensions
    (reverse, stop, soft stop) applied to the tension output
  * the per-cycle order sequence every control sub-system runs:
    read_sensors -> select_setpoint -> control -> actuate -> report
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from firmware.errors import StrategyNotFoundError
from firmware.kernel import ControlCommand
from firmware.messages import NEUTRAL_ORDER, OrderKind

logger = logging.getLogger(__name__)

CYCLE_STEPS = ('read_sensors', 'select_setpoint', 'control', 'actuate', 'report')


# ============================================================
# PI CONTROL
# ============================================================

@dataclass
class PIState:
    kp: float
    ki: float
    integral: float = 0.0
    output_limit: float = 24.0

    def reset(self):
        self.integral = 0.0


def pi_step(pi, error, dt):
    """One PI update; the integral is clamped so |ki*integral| <= limit."""
    integral = pi.integral + error * dt
    if pi.ki > 0:
        bound = pi.output_limit / pi.ki
        integral = float(np.clip(integral, -bound, bound))
    pi.integral = integral
    return float(np.clip(pi.kp * error + pi.ki * integral, -pi.output_limit, pi.output_limit))


class ControlStrategy(ABC):
    kind = None

    @abstractmethod
    def compute(self, setpoint, measured_vel, measured_cur, pi, dt):
        """Return the tension (V) to apply."""


class VelocityPI(ControlStrategy):
    kind = OrderKind.VELOCITY

    def compute(self, setpoint, measured_vel, measured_cur, pi, dt):
        return pi_step(pi, setpoint - measured_vel, dt)


class CurrentPI(ControlStrategy):
    kind = OrderKind.CURRENT

    def compute(self, setpoint, measured_vel, measured_cur, pi, dt):
        return pi_step(pi, setpoint - measured_cur, dt)


class TensionPassthrough(ControlStrategy):
    kind = OrderKind.TENSION

    def compute(self, setpoint, measured_vel, measured_cur, pi, dt):
        return float(np.clip(setpoint, -pi.output_limit, pi.output_limit))


STRATEGIES = {s.kind: s for s in (VelocityPI(), CurrentPI(), TensionPassthrough())}


def control_step(kind, setpoint, measured_vel, measured_cur, pi, dt=0.1, strategies=None):
    """Dispatch to the control strategy registered for the order kind."""
    strategy = (strategies or STRATEGIES).get(kind)
    if strategy is None:
        raise StrategyNotFoundError(f"no control strategy for order kind {kind!r}")
    return strategy.compute(setpoint, measured_vel, measured_cur, pi, dt)


# ============================================================
# WHEEL BEHAVIOURS
# ============================================================

class WheelBehaviour(ABC):
    @abstractmethod
    def apply(self, volts):
        ...

    def describe(self):
        return type(self).__name__.lower()


class Advance(WheelBehaviour):
    def apply(self, volts):
        return volts


class BehaviourDecorator(WheelBehaviour):
    def __init__(self, inner):
        self.inner = inner

    def describe(self):
        return f"{type(self).__name__.lower()}({self.inner.describe()})"


class Reverse(BehaviourDecorator):
    def apply(self, volts):
        return -self.inner.apply(volts)


class Stop(BehaviourDecorator):
    def apply(self, volts):
        return 0.0


class SoftStop(BehaviourDecorator):
    """Scales the inner output down instead of cutting it."""

    def __init__(self, inner, factor=0.5):
        super().__init__(inner)
        self.factor = factor

    def apply(self, volts):
        return self.inner.apply(volts) * self.factor


def set_behaviour(ctrl, behaviour):
    if not isinstance(behaviour, WheelBehaviour):
        raise TypeError(f"not a wheel behaviour: {behaviour!r}")
    ctrl.behaviour = behaviour
    logger.debug("Wheel %s behaviour -> %s", getattr(ctrl, 'index', '?'), behaviour.describe())


# ============================================================
# CYCLE ORDER SEQUENCE
# ============================================================

@dataclass(frozen=True)
class CycleCommand:
    """Immutable per-cycle payload fanned out to every sub-system."""
    cycle: int
    at: int                 # sim us
    order: object = NEUTRAL_ORDER


class SubsystemOrders(ABC):
    """Fixed per-cycle skeleton shared by all control sub-systems.

    Sub-classes override the steps; execute_cycle_orders() decides their
    order and records it in `step_trace`.
    """

    name = 'subsystem'

    def __init__(self):
        self.order = NEUTRAL_ORDER
        self._order_key = (NEUTRAL_ORDER.source, NEUTRAL_ORDER.seq)
        self.step_trace = []

    def execute_cycle_orders(self, cmd):
        self.step_trace = []
        for step in CYCLE_STEPS:
            self.step_trace.append(step)
            result = getattr(self, step)(cmd)
        return result

    def is_new(self, order):
        # (source, seq) identifies an order; equal values may still be a new message
        return (order.source, order.seq) != self._order_key

    def select_setpoint(self, cmd):
        if self.is_new(cmd.order):
            self._order_key = (cmd.order.source, cmd.order.seq)
            previous, self.order = self.order, cmd.order
            self.on_new_order(previous, cmd.order)

    def on_new_order(self, previous, order):
        pass

    @abstractmethod
    def read_sensors(self, cmd):
        ...

    @abstractmethod
    def control(self, cmd):
        ...

    @abstractmethod
    def actuate(self, cmd):
        ...

    @abstractmethod
    def report(self, cmd):
        ...


@dataclass(frozen=True)
class WheelReport:
    index: int
    setpoint: float
    kind: int
    rpm: float
    volts: float
    milliamps: float


class WheelSystem(SubsystemOrders):
    """One wheel: sensor stacks, controller and the `Wheel` facade."""

    def __init__(self, index, wheel, velocity_source, vel_reader, cur_reader, pi_vel, pi_cur,
                 dt=0.1, output_limit=24.0, current_collector=None, strategies=None):
        super().__init__()
        self.index = index
        self.name = f"wheel.{index}"
        self.wheel = wheel
        self.velocity_source = velocity_source
        self.vel_reader = vel_reader
        self.cur_reader = cur_reader
        self.pi_vel = pi_vel
        self.pi_cur = pi_cur
        self.dt = dt
        self.output_limit = output_limit
        self.current_collector = current_collector
        self.strategies = strategies
        self.base_behaviour = Advance()
        self.behaviour = self.base_behaviour
        self.control_kind = OrderKind.VELOCITY
        self.rpm = 0.0
        self.milliamps = 0.0
        self.raw_volts = 0.0
        self.volts = 0.0

    @property
    def setpoint(self):
        return 0.0 if self.order.is_stop else self.order.wheel[self.index]

    def read_sensors(self, cmd):
        self.velocity_source.sample(cmd.at)
        self.rpm, _, _ = self.vel_reader.read_latest()
        self.milliamps, _, _ = self.cur_reader.read_latest()
        if self.current_collector is not None:
            self.current_collector.drain()

    def on_new_order(self, previous, order):
        if order.is_stop:
            if not previous.is_stop:
                self.base_behaviour = self.behaviour
            self.behaviour = Stop(self.base_behaviour)
            self.pi_vel.reset()
            self.pi_cur.reset()
            return
        if previous.is_stop:
            self.behaviour = self.base_behaviour
        if order.kind != self.control_kind:
            self.pi_vel.reset()
            self.pi_cur.reset()
            self.control_kind = order.kind

    def control(self, cmd):
        if self.order.is_stop:
            self.raw_volts = 0.0
            return
        pi = self.pi_cur if self.control_kind == OrderKind.CURRENT else self.pi_vel
        self.raw_volts = control_step(self.control_kind, self.setpoint, self.rpm, self.milliamps,
                                      pi, self.dt, self.strategies)

    def actuate(self, cmd):
        limit = self.output_limit
        self.volts = float(np.clip(self.behaviour.apply(self.raw_volts), -limit, limit))
        self.wheel.actuate(self.volts)

    def report(self, cmd):
        return WheelReport(self.index, self.setpoint, int(self.order.kind), self.rpm,
                           self.volts, self.milliamps)


class WheelOrderCommand(ControlCommand):
    """`wheel_order.<i>` handler: the payload is the behaviour to switch to."""

    def __init__(self, system):
        self.system = system
        self.name = f"wheel_order.{system.index}"

    def execute(self, at, payload=None):
        system = self.system
        if not isinstance(payload, WheelBehaviour):
            raise TypeError(f"{self.name} needs a wheel behaviour, got {payload!r}")
        if system.order.is_stop:
            # takes effect when the stop is lifted
            system.base_behaviour = payload
            return
        set_behaviour(system, payload)
        system.base_behaviour = payload
