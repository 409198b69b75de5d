"""Direction control: turn decisions, enable states and the steering sub-system."""

import pytest

from firmware.direction_control import (
    DirController,
    DirCtrlTimeout,
    DirSystem,
    Enablement,
    SteeringCtrlState,
    SteeringOpState,
    SteeringOrderCommand,
    dir_control_step,
    set_enabled,
)
from firmware.kernel import SimKernel
from firmware.messages import Order
from firmware.pipes import Pipe
from firmware.sensors import DirSensor
from firmware.wheel_control import CycleCommand
from models.plant import SteeringDevice, SteeringPlant


@pytest.mark.parametrize("target, measured, direction, hold", [
    (10.0, 10.0, 0, True),
    (30.0, 0.0, 1, False),
    (-30.0, 0.0, -1, False),
    (10.0, 9.6, 0, True),
    (10.0, 9.4, 1, False),
])
def test_dir_control_step(target, measured, direction, hold):
    cmd = dir_control_step(target, measured, deadband=0.5)
    assert (cmd.direction, cmd.hold) == (direction, hold)


def test_set_enabled_transitions():
    turning = SteeringCtrlState(Enablement.ENABLED, SteeringOpState.TURNING, 20.0)
    disabled = set_enabled(turning, False)
    assert disabled == SteeringCtrlState(Enablement.DISABLED, SteeringOpState.IDLE, 20.0)
    enabled = set_enabled(disabled, True)
    assert enabled.enabled is Enablement.ENABLED and enabled.op_state is SteeringOpState.IDLE
    assert set_enabled(turning, True) is turning


def _steering():
    kernel = SimKernel()
    plant = SteeringPlant(kernel)
    pipe = Pipe('steering.position', 'deg')
    controller = DirController(SteeringDevice(plant), pipe.reader(), deadband=0.5)
    tick = DirCtrlTimeout(DirSensor(lambda: plant.state.position, pipe), controller)
    return plant, controller, tick


def _run(plant, tick, steps, start=0):
    for k in range(steps):
        at = (start + k) * 10_000
        tick.execute(at)
        plant.step(at)


def test_controller_turns_then_holds():
    plant, controller, tick = _steering()
    controller.set_target(3.0)
    _run(plant, tick, 1)
    assert controller.state.op_state is SteeringOpState.TURNING
    assert controller.last_command.direction == 1
    _run(plant, tick, 10, start=1)
    assert plant.state.position == pytest.approx(3.0)
    assert controller.state.op_state is SteeringOpState.HOLDING


def test_disable_freezes_and_ignores_new_targets():
    plant, controller, tick = _steering()
    controller.set_target(30.0)
    _run(plant, tick, 5)
    frozen = plant.state.position
    SteeringOrderCommand(controller).execute(50_000, False)
    assert controller.state.op_state is SteeringOpState.IDLE
    controller.set_target(-30.0)
    _run(plant, tick, 10, start=5)
    assert plant.state.position == frozen
    assert controller.last_command is None
    SteeringOrderCommand(controller).execute(150_000, True)
    _run(plant, tick, 5, start=15)
    assert plant.state.position < frozen


def test_dir_system_follows_orders_and_keeps_target_on_stop():
    plant, controller, tick = _steering()
    pipe = controller.position_reader.pipe
    system = DirSystem(controller, pipe.reader())
    system.execute_cycle_orders(CycleCommand(0, 0, Order.velocity(0.0, steering=-12.5).with_seq(1)))
    assert controller.target == -12.5
    report = system.execute_cycle_orders(CycleCommand(1, 100_000, Order.stop().with_seq(2)))
    assert controller.target == -12.5
    assert report.setpoint == -12.5 and report.enabled
