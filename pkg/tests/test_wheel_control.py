"""Wheel control: strategies, behaviours and the per-cycle order sequence."""

import pytest

from firmware.errors import StrategyNotFoundError
from firmware.kernel import SimKernel, ms
from firmware.messages import NEUTRAL_ORDER, Order, OrderKind, Source
from firmware.pipes import Pipe
from firmware.wheel_control import (
    CYCLE_STEPS,
    Advance,
    CycleCommand,
    PIState,
    Reverse,
    SoftStop,
    Stop,
    WheelOrderCommand,
    WheelSystem,
    control_step,
    pi_step,
    set_behaviour,
)
from models.plant import Wheel, WheelPlant


# ============================================================
# STRATEGIES
# ============================================================

def test_tension_passthrough():
    assert control_step(OrderKind.TENSION, 5.0, 0.0, 0.0, PIState(0.08, 0.2)) == 5.0


def test_zero_error_gives_zero_volts():
    assert control_step(OrderKind.VELOCITY, 50.0, 50.0, 0.0, PIState(0.08, 0.2)) == 0.0


def test_proportional_only():
    assert control_step(OrderKind.VELOCITY, 50.0, 0.0, 0.0, PIState(0.1, 0.0)) == pytest.approx(5.0)


def test_current_strategy_uses_current_error():
    pi = PIState(0.001, 0.0)
    assert control_step(OrderKind.CURRENT, 1000.0, 999.0, 0.0, pi) == pytest.approx(1.0)


def test_unknown_kind():
    with pytest.raises(StrategyNotFoundError):
        control_step(OrderKind.STOP, 0.0, 0.0, 0.0, PIState(0.1, 0.1))


def test_integral_anti_windup():
    pi = PIState(0.0, 0.2, output_limit=24.0)
    for _ in range(1000):
        out = pi_step(pi, 1000.0, 0.1)
    assert out == 24.0
    assert pi.integral == pytest.approx(120.0)
    # unwinds as soon as the error changes sign
    assert pi_step(pi, -1000.0, 0.1) < 24.0


def test_output_clamped():
    assert pi_step(PIState(1.0, 0.0), 1000.0, 0.1) == 24.0
    assert pi_step(PIState(1.0, 0.0), -1000.0, 0.1) == -24.0


# ============================================================
# BEHAVIOURS
# ============================================================

def test_behaviour_decorators():
    assert Reverse(Advance()).apply(5.0) == -5.0
    assert Stop(Reverse(Advance())).apply(5.0) == 0.0
    assert Reverse(Reverse(Advance())).apply(5.0) == 5.0
    assert SoftStop(Advance(), 0.5).apply(5.0) == 2.5
    assert Reverse(Advance()).describe() == 'reverse(advance)'


def test_set_behaviour_rejects_other_objects():
    class Ctrl:
        behaviour = Advance()

    with pytest.raises(TypeError):
        set_behaviour(Ctrl(), 'reverse')


# ============================================================
# WHEEL SYSTEM
# ============================================================

class ScriptedVelocity:
    """Writes the next scripted value to the velocity pipe on each sample."""

    def __init__(self, pipe, values):
        self.pipe = pipe
        self.values = list(values)

    def sample(self, at):
        value = self.values.pop(0) if self.values else 0.0
        self.pipe.write(value, at)
        return value


def _wheel_system(rpm_values=(), kp=0.1, ki=0.0):
    vel, cur = Pipe('wheel.0.velocity'), Pipe('wheel.0.current')
    plant = WheelPlant(0, SimKernel())
    system = WheelSystem(0, Wheel(plant), ScriptedVelocity(vel, rpm_values), vel.reader(), cur.reader(),
                         pi_vel=PIState(kp, ki), pi_cur=PIState(0.001, 0.0))
    return system, plant


def test_first_cycle_without_orders_is_neutral():
    system, plant = _wheel_system()
    report = system.execute_cycle_orders(CycleCommand(0, 0))
    assert report.setpoint == 0.0 and report.volts == 0.0
    assert plant.pending_tension == 0.0
    assert system.step_trace == list(CYCLE_STEPS)


def test_order_is_applied_and_kept():
    system, plant = _wheel_system()
    order = Order.velocity(50.0).with_seq(1)
    system.execute_cycle_orders(CycleCommand(0, 0, order))
    assert system.volts == pytest.approx(5.0)
    assert plant.pending_tension == pytest.approx(5.0)
    # same order again: previous set-point still controls
    report = system.execute_cycle_orders(CycleCommand(1, 100_000, order))
    assert report.setpoint == 50.0
    assert report.volts == pytest.approx(5.0)


def test_stop_order_cuts_output_and_resets_integrals():
    system, plant = _wheel_system(kp=0.1, ki=0.2)
    system.execute_cycle_orders(CycleCommand(0, 0, Order.velocity(50.0).with_seq(1)))
    assert system.pi_vel.integral != 0.0
    system.execute_cycle_orders(CycleCommand(1, 100_000, Order.stop().with_seq(2)))
    assert system.volts == 0.0 and plant.pending_tension == 0.0
    assert system.setpoint == 0.0
    assert system.pi_vel.integral == 0.0
    assert isinstance(system.behaviour, Stop)
    system.execute_cycle_orders(CycleCommand(2, 200_000, Order.velocity(50.0).with_seq(3)))
    assert isinstance(system.behaviour, Advance)
    assert system.volts > 0.0


def test_tension_order():
    system, _ = _wheel_system()
    system.execute_cycle_orders(CycleCommand(0, 0, Order.tension(-7.5).with_seq(1)))
    assert system.volts == -7.5


def test_same_values_from_another_source_is_a_new_order():
    system, _ = _wheel_system(kp=0.1, ki=0.2)
    order = Order.velocity(50.0)
    system.execute_cycle_orders(CycleCommand(0, 0, order.with_seq(1)))
    assert system.is_new(Order.velocity(50.0, source=Source.RC).with_seq(1))
    assert not system.is_new(order.with_seq(1))
    assert system.is_new(NEUTRAL_ORDER.with_seq(1))


def test_wheel_order_command_switches_behaviour():
    system, _ = _wheel_system()
    command = WheelOrderCommand(system)
    command.execute(0, Reverse(Advance()))
    system.execute_cycle_orders(CycleCommand(0, 0, Order.velocity(50.0).with_seq(1)))
    assert system.volts == pytest.approx(-5.0)
    with pytest.raises(TypeError):
        command.execute(0, 'reverse')


def test_behaviour_change_during_stop_applies_after_it():
    system, _ = _wheel_system()
    system.execute_cycle_orders(CycleCommand(0, 0, Order.stop().with_seq(1)))
    WheelOrderCommand(system).execute(50_000, Reverse(Advance()))
    assert isinstance(system.behaviour, Stop)
    system.execute_cycle_orders(CycleCommand(1, 100_000, Order.velocity(50.0).with_seq(2)))
    assert system.volts == pytest.approx(-5.0)


def test_current_window_restarts_each_cycle(assembly):
    assembly.kernel.advance_by(ms(250))
    wheel = assembly.wheels[0]
    assert len(wheel.current_collector.samples) == 5
    assert wheel.cur_reader.pipe.latest().value == pytest.approx(sum(wheel.current_collector.samples) / 5)
