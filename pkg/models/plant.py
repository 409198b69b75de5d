"""
Weeding Robot MCU — Plant Models
=================================
The simulated physical process the MCU controls:

  * wheel: first-order velocity response to the applied tension, resistive
    current model, Hall edges proportional to the shaft speed
  * steering device: stepper moving toward its target at a bounded slew
    rate, limited to the extreme left / right positions

Plus the actuator facades (`Wheel`, `SteeringDevice`) through which the
controllers act on the hardware.  Constants are simulation choices taken
from the shared config, not measured robot data.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from firmware.kernel import US_PER_S, FunctionCommand

logger = logging.getLogger(__name__)


# ============================================================
# STATE
# ============================================================

@dataclass(frozen=True)
class WheelPlantState:
    omega: float = 0.0            # rpm
    applied_tension: float = 0.0  # V
    direction: int = 0            # sign of omega


@dataclass(frozen=True)
class SteeringPlantState:
    position: float = 0.0         # deg
    target: float = 0.0           # deg
    enabled: bool = True


def _sign(x):
    return 1 if x > 0 else (-1 if x < 0 else 0)


# ============================================================
# WHEEL DYNAMICS
# ============================================================

def step_wheel(state, tension, dt, kv=12.5, tau=0.5, v_max=24.0):
    """
    Integrate the wheel over `dt` seconds with `tension` applied.

    omega' = a*omega + (1 - a)*Kv*V  with  a = exp(-dt/tau); the tension is
    clamped to +/-v_max first.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    volts = float(np.clip(tension, -v_max, v_max))
    alpha = math.exp(-dt / tau)
    omega = alpha * state.omega + (1.0 - alpha) * kv * volts
    return WheelPlantState(omega=omega, applied_tension=volts, direction=_sign(omega))


def wheel_current(state, kv=12.5, r=0.5):
    """Winding current in mA: (V - omega/Kv) / R.  Unclipped; the sensor clips."""
    return (state.applied_tension - state.omega / kv) / r * 1000.0


def hall_edge_count(omega, dt, ppr=24):
    return int(math.floor(abs(omega) * ppr * dt / 60.0 + 0.5))


def emit_hall_edges(state, dt, ppr=24, t0=0):
    """
    Edge timestamps (sim us) for one window of `dt` seconds starting at t0.

    The count is round(|omega|*P*dt/60); edges are evenly spaced strictly
    inside the window.  Their direction is `state.direction`.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    n = hall_edge_count(state.omega, dt, ppr)
    span = int(round(dt * US_PER_S))
    return [t0 + ((k + 1) * span) // (n + 1) for k in range(n)]


# ============================================================
# STEERING DYNAMICS
# ============================================================

def step_steering(state, dt, slew=60.0, limit=30.0):
    """Move toward the target by at most slew*dt, never beyond +/-limit."""
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    if not state.enabled:
        return state
    target = float(np.clip(state.target, -limit, limit))
    max_step = slew * dt
    delta = float(np.clip(target - state.position, -max_step, max_step))
    position = float(np.clip(state.position + delta, -limit, limit))
    return replace(state, position=position)


# ============================================================
# SIMULATED HARDWARE
# ============================================================

class WheelPlant:
    """One wheel motor, stepped once per control period.

    Each step integrates the tension set through the `Wheel` facade and
    raises the Hall edges of the coming period as `hall.<index>` interrupts.
    """

    def __init__(self, index, kernel, kv=12.5, tau=0.5, r=0.5, ppr=24, v_max=24.0, dt=0.1):
        self.index = index
        self.kernel = kernel
        self.kv, self.tau, self.r, self.ppr, self.v_max = kv, tau, r, ppr, v_max
        self.dt = dt
        self.state = WheelPlantState()
        self.pending_tension = 0.0
        self.timer = None

    @property
    def hall_interrupt(self):
        return f"hall.{self.index}"

    def set_tension(self, volts):
        self.pending_tension = volts

    def current_ma(self):
        return wheel_current(self.state, self.kv, self.r)

    def step(self, at, _payload=None):
        self.state = step_wheel(self.state, self.pending_tension, self.dt, self.kv, self.tau, self.v_max)
        for t in emit_hall_edges(self.state, self.dt, self.ppr, t0=at):
            self.kernel.raise_interrupt(self.hall_interrupt, t, self.state.direction)

    def attach(self):
        """Start stepping every dt; call after the controller timers are scheduled."""
        self.timer = self.kernel.schedule_periodic(
            self.dt * 1000.0, FunctionCommand(self.step, f"wheel_plant.{self.index}"),
            name=f"wheel_plant.{self.index}")
        return self.timer


class SteeringPlant:
    def __init__(self, kernel, slew=60.0, limit=30.0, dt=0.01):
        self.kernel = kernel
        self.slew = slew
        self.limit = limit
        self.dt = dt
        self.state = SteeringPlantState()
        self.timer = None

    def step(self, at=None, _payload=None):
        self.state = step_steering(self.state, self.dt, self.slew, self.limit)

    def attach(self):
        self.timer = self.kernel.schedule_periodic(
            self.dt * 1000.0, FunctionCommand(self.step, 'steering_plant'), name='steering_plant')
        return self.timer


# ============================================================
# ACTUATOR FACADES
# ============================================================

class Wheel:
    """What the wheel controller sees of the motor driver."""

    def __init__(self, plant):
        self.plant = plant
        self.applied = 0.0

    def actuate(self, volts):
        self.applied = volts
        self.plant.set_tension(volts)


class SteeringDevice:
    """What the direction controller sees of the stepper driver."""

    def __init__(self, plant):
        self.plant = plant
        self.commands = 0

    def move_toward(self, target):
        self.commands += 1
        self.plant.state = replace(self.plant.state, target=float(target))

    def set_enabled(self, on):
        self.plant.state = replace(self.plant.state, enabled=bool(on))

    @property
    def position(self):
        return self.plant.state.position


def build_plants(cfg, kernel):
    """Four wheel plants and the steering plant, not yet attached to timers."""
    dt_wheel = cfg['timer.first_ms'] / 1000.0
    dt_steer = cfg['timer.second_ms'] / 1000.0
    wheels = [
        WheelPlant(i, kernel, kv=cfg['plant.kv'], tau=cfg['plant.tau'], r=cfg['plant.r'],
                   ppr=cfg['plant.ppr'], v_max=cfg['plant.v_max'], dt=dt_wheel)
        for i in range(4)
    ]
    steering = SteeringPlant(kernel, slew=cfg['plant.slew'], limit=cfg['steer.limit'], dt=dt_steer)
    logger.debug("Built 4 wheel plants (dt=%.3fs) and a steering plant (dt=%.3fs)", dt_wheel, dt_steer)
    return wheels, steering
