"""
Weeding Robot MCU — Direction Control
======================================
DirController: decides the turn direction toward the steering target, with
two state machines:

    enable state:  Enabled <-> Disabled     (switch the stepper on/off)
    op state:      Idle -> Turning -> Holding

It sub-steps on every SecondTimer tick (the `dir_ctrl_timeout` interrupt);
the target is updated once per control cycle by DirSystem.
"""

import logging
from dataclasses import dataclass
from enum import Enum

from firmware.kernel import ControlCommand
from firmware.wheel_control import SubsystemOrders

logger = logging.getLogger(__name__)


class Enablement(Enum):
    ENABLED = 'enabled'
    DISABLED = 'disabled'


class SteeringOpState(Enum):
    IDLE = 'idle'
    TURNING = 'turning'
    HOLDING = 'holding'


@dataclass(frozen=True)
class SteeringCommand:
    direction: int          # -1, 0, +1
    hold: bool
    target: float


@dataclass(frozen=True)
class SteeringCtrlState:
    enabled: Enablement = Enablement.ENABLED
    op_state: SteeringOpState = SteeringOpState.IDLE
    target: float = 0.0


def _sign(x):
    return 1 if x > 0 else (-1 if x < 0 else 0)


def dir_control_step(target, measured, deadband=0.5):
    """Turn direction toward the target; hold inside the deadband."""
    error = target - measured
    if abs(error) <= deadband:
        return SteeringCommand(direction=0, hold=True, target=target)
    return SteeringCommand(direction=_sign(error), hold=False, target=target)


def set_enabled(state, on):
    if on:
        if state.enabled is Enablement.ENABLED:
            return state
        return SteeringCtrlState(Enablement.ENABLED, SteeringOpState.IDLE, state.target)
    return SteeringCtrlState(Enablement.DISABLED, SteeringOpState.IDLE, state.target)


# ============================================================
# ENABLE STATES
# ============================================================

class EnableState:
    """How a tick behaves depends on whether the device is switched on."""

    def tick(self, ctrl, measured):
        raise NotImplementedError


class EnabledState(EnableState):
    def tick(self, ctrl, measured):
        cmd = dir_control_step(ctrl.state.target, measured, ctrl.deadband)
        if cmd.hold:
            ctrl.state = SteeringCtrlState(ctrl.state.enabled, SteeringOpState.HOLDING, ctrl.state.target)
            return cmd
        ctrl.state = SteeringCtrlState(ctrl.state.enabled, SteeringOpState.TURNING, ctrl.state.target)
        ctrl.device.move_toward(cmd.target)
        return cmd


class DisabledState(EnableState):
    def tick(self, ctrl, measured):
        return None


ENABLE_STATES = {Enablement.ENABLED: EnabledState(), Enablement.DISABLED: DisabledState()}


# ============================================================
# CONTROLLER
# ============================================================

class DirController:
    def __init__(self, device, position_reader, deadband=0.5):
        self.device = device
        self.position_reader = position_reader
        self.deadband = deadband
        self.state = SteeringCtrlState()
        self.last_command = None

    @property
    def target(self):
        return self.state.target

    def set_target(self, target):
        self.state = SteeringCtrlState(self.state.enabled, self.state.op_state, float(target))

    def set_enabled(self, on):
        before = self.state.enabled
        self.state = set_enabled(self.state, on)
        self.device.set_enabled(on)
        if self.state.enabled is not before:
            logger.info("Steering %s", self.state.enabled.value)

    def tick(self, at=None):
        measured, _, _ = self.position_reader.read_latest()
        self.last_command = ENABLE_STATES[self.state.enabled].tick(self, measured)
        return self.last_command


class DirCtrlTimeout(ControlCommand):
    """`dir_ctrl_timeout` handler: sample the position, then sub-step the controller."""

    name = 'dir_ctrl_timeout'

    def __init__(self, sensor, controller):
        self.sensor = sensor
        self.controller = controller

    def execute(self, at, payload=None):
        self.sensor.sample(at)
        self.controller.tick(at)


class SteeringOrderCommand(ControlCommand):
    """`steering_order` handler: the payload switches the device on (True) or off."""

    name = 'steering_order'

    def __init__(self, controller):
        self.controller = controller

    def execute(self, at, payload=None):
        self.controller.set_enabled(bool(payload))


@dataclass(frozen=True)
class SteeringReport:
    setpoint: float
    position: float
    op_state: str
    enabled: bool


class DirSystem(SubsystemOrders):
    """Steering sub-system; takes part in the same cycle sequence as the wheels."""

    name = 'dir'

    def __init__(self, controller, position_reader):
        super().__init__()
        self.controller = controller
        self.position_reader = position_reader
        self.position = 0.0

    def read_sensors(self, cmd):
        self.position, _, _ = self.position_reader.read_latest()

    def control(self, cmd):
        # a stop keeps the previous steering target
        if not self.order.is_stop:
            self.controller.set_target(self.order.steering)

    def actuate(self, cmd):
        # motion is commanded on the SecondTimer sub-steps
        pass

    def report(self, cmd):
        state = self.controller.state
        return SteeringReport(self.controller.target, self.position, state.op_state.value,
                              state.enabled is Enablement.ENABLED)
