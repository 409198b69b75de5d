"""
Weeding Robot MCU — Builders
=============================
Assemble the system from the shared constants:

    build_wheel_system  x4 ─┐
    build_dir_system        ├─> build_pool ─> build_main_controller
                            ┘

Each builder creates the parts of its sub-system, binds their pipes and
registers their interrupt commands with the kernel.  build_assembly() runs
them in order, attaches the simulated plant and checks the result.
"""

import logging
from dataclasses import dataclass, field

from config import get_config
from firmware.direction_control import DirController, DirCtrlTimeout, DirSystem, SteeringOrderCommand
from firmware.errors import BuildError, ConfigError, DuplicateRegistrationError
from firmware.io_sources import (
    BufferReader,
    ByteChannel,
    ByteSink,
    ControlData,
    DirectionBuffer,
    PcMode,
    RcMode,
    RcPinCommand,
    SaveModeId,
    SerialLink,
    SerialReader,
    SerialWriter,
    TagSequence,
    VelocityBuffer,
)
from firmware.kernel import DispatchCommand, FunctionCommand, MacroCommand, SimKernel
from firmware.main_control import MAX_WAITING, MainController, SubsystemPool, ThreadedPool
from firmware.pipes import Pipe
from firmware.sensors import (
    ActiveSensor,
    CntSensor,
    CountSignal,
    DirSensor,
    DutyCollector,
    FrequencyCollector,
    PeriodCollector,
    ReadCnt,
    SensorCollector,
    ValueCollector,
    VelSensor,
)
from firmware.wheel_control import PIState, WheelOrderCommand, WheelSystem
from models.plant import SteeringDevice, Wheel, build_plants

logger = logging.getLogger(__name__)

WHEEL_COUNT = 4
INTERRUPT_FAMILIES = (
    'controller_timeout', 'dir_ctrl_timeout', 'hall', 'rc_pin',
    'read_cnt', 'steering_order', 'wheel_order',
)


def _get(cfg, key):
    try:
        return cfg[key]
    except ConfigError:
        raise BuildError(f"missing config key '{key}'") from None


def _register(kernel, interrupt_id, command):
    try:
        kernel.register(interrupt_id, command)
    except DuplicateRegistrationError as exc:
        raise BuildError(str(exc)) from None


def _pipe(pipes, name, unit, source, sink):
    pipe = Pipe(name, unit)
    pipe.bind_source(source)
    pipe.bind_sink(sink)
    pipes.append(pipe)
    return pipe


# ============================================================
# SUB-SYSTEM BUILDERS
# ============================================================

def build_wheel_system(cfg, index, kernel, plant, pipes=None):
    """One wheel: Hall count stack, current stack, PI controller and Wheel facade."""
    pipes = [] if pipes is None else pipes
    kp, ki = _get(cfg, 'wheel.kp'), _get(cfg, 'wheel.ki')
    kp_cur, ki_cur = _get(cfg, 'wheel.kp_cur'), _get(cfg, 'wheel.ki_cur')
    limit = _get(cfg, 'wheel.output_limit')
    dt = _get(cfg, 'timer.first_ms') / 1000.0
    owner = f"WheelSystem.{index}"

    vel_pipe = _pipe(pipes, f"wheel.{index}.velocity", 'rpm', f"VelSensor.{index}", owner)
    cur_pipe = _pipe(pipes, f"wheel.{index}.current", 'mA', f"CntSensor.{index}", owner)

    signal = CountSignal(ring=_get(cfg, 'sensor.ring'))
    _register(kernel, f"hall.{index}", ActiveSensor(signal, f"hall.{index}"))
    collector = DutyCollector(FrequencyCollector(PeriodCollector(
        SensorCollector(signal, dt=dt, ppr=_get(cfg, 'plant.ppr')))))
    vel_sensor = VelSensor(collector, vel_pipe)

    current_collector = ValueCollector()
    cnt_sensor = CntSensor(cur_pipe, limit=_get(cfg, 'sensor.current_limit'))
    _register(kernel, f"read_cnt.{index}",
              ReadCnt(plant.current_ma, current_collector, cnt_sensor, f"read_cnt.{index}"))

    system = WheelSystem(
        index, Wheel(plant), vel_sensor, vel_pipe.reader(), cur_pipe.reader(),
        pi_vel=PIState(kp, ki, output_limit=limit),
        pi_cur=PIState(kp_cur, ki_cur, output_limit=limit),
        dt=dt, output_limit=limit, current_collector=current_collector,
    )
    _register(kernel, f"wheel_order.{index}", WheelOrderCommand(system))
    return system


def build_dir_system(cfg, kernel, plant, pipes=None):
    """Steering: position sensor, DirController and the SteeringDevice facade."""
    pipes = [] if pipes is None else pipes
    deadband = _get(cfg, 'steer.deadband')
    pos_pipe = _pipe(pipes, 'steering.position', 'deg', 'DirSensor', 'DirSystem')

    sensor = DirSensor(lambda: plant.state.position, pos_pipe)
    controller = DirController(SteeringDevice(plant), pos_pipe.reader(), deadband=deadband)
    _register(kernel, 'dir_ctrl_timeout', DirCtrlTimeout(sensor, controller))
    _register(kernel, 'steering_order', SteeringOrderCommand(controller))
    return DirSystem(controller, pos_pipe.reader())


def build_pool(cfg, wheels, dir_system, threaded=False):
    wheels = list(wheels)
    if len(wheels) != WHEEL_COUNT:
        raise BuildError(f"the pool needs {WHEEL_COUNT} wheel systems, got {len(wheels)}")
    cls = ThreadedPool if threaded else SubsystemPool
    return cls(wheels, dir_system)


@dataclass
class MainParts:
    controller: MainController
    channel: ByteChannel
    sink: object
    link: SerialLink
    rc_buffers: dict
    timers: list = field(default_factory=list)


def build_main_controller(cfg, kernel, pool, sink=None, timing='wall', extra_modes=()):
    """
    Reading modes, serial link, RC buffers and the MainController, plus the
    FirstTimer / SecondTimer that drive the whole system.

    `extra_modes` join the mode rotation after RC and PC.
    """
    n = _get(cfg, 'fsm.n')
    if not 1 <= n <= MAX_WAITING:
        raise BuildError(f"fsm.n must be between 1 and {MAX_WAITING}, got {n}")

    link = SerialLink(sync_threshold=_get(cfg, 'serial.sync_threshold'))
    channel = ByteChannel()
    sink = ByteSink() if sink is None else sink
    writer = SerialWriter(sink, link, queue_size=_get(cfg, 'serial.out_queue'))

    rc_args = dict(
        min_width=_get(cfg, 'rc.min_width'), max_width=_get(cfg, 'rc.max_width'),
        center=_get(cfg, 'rc.center'), span=_get(cfg, 'rc.span'), stale_ms=_get(cfg, 'rc.stale_ms'),
    )
    rc_buffers = {
        'velocity': VelocityBuffer(full_scale=_get(cfg, 'rc.max_rpm'), **rc_args),
        'direction': DirectionBuffer(full_scale=_get(cfg, 'steer.limit'), **rc_args),
    }
    for buffer in rc_buffers.values():
        _register(kernel, f"rc_pin.{buffer.channel}", RcPinCommand(buffer))

    ctrl_data = ControlData()
    rc_reader = BufferReader(rc_buffers['velocity'], rc_buffers['direction'], clock=lambda: kernel.now)
    base_modes = [RcMode(rc_reader), PcMode(SerialReader(channel, link))] + list(extra_modes)
    modes = [SaveModeId(TagSequence(mode), ctrl_data) for mode in base_modes]
    codes = [mode.code for mode in modes]
    if len(set(codes)) != len(codes):
        raise BuildError(f"reading mode codes must be unique, got {codes}")

    controller = MainController(modes, pool, writer, n=n, rotation=codes,
                                ctrl_data=ctrl_data, timing=timing)
    _register(kernel, 'controller_timeout', FunctionCommand(controller.on_control_tick, 'controller_timeout'))

    second_tick = MacroCommand(
        [DispatchCommand(kernel, 'dir_ctrl_timeout')]
        + [DispatchCommand(kernel, f"read_cnt.{w.index}") for w in pool.wheels],
        name='second_timer',
    )
    timers = [
        kernel.schedule_periodic(_get(cfg, 'timer.first_ms'),
                                 DispatchCommand(kernel, 'controller_timeout'), name='first_timer'),
        kernel.schedule_periodic(_get(cfg, 'timer.second_ms'), second_tick, name='second_timer'),
    ]
    return MainParts(controller, channel, sink, link, rc_buffers, timers)


# ============================================================
# WHOLE SYSTEM
# ============================================================

@dataclass
class SystemAssembly:
    cfg: object
    kernel: SimKernel
    wheel_plants: list
    steering_plant: object
    wheels: list
    dir_system: DirSystem
    pool: SubsystemPool
    main: MainController
    channel: ByteChannel
    sink: object
    link: SerialLink
    rc_buffers: dict
    pipes: list
    timers: list

    def close(self):
        self.pool.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def check_assembly(assembly):
    unbound = [p.name for p in assembly.pipes if not p.is_bound]
    if unbound:
        raise BuildError(f"pipes without source or sink: {unbound}")
    missing = set(INTERRUPT_FAMILIES) - set(assembly.kernel.families())
    if missing:
        raise BuildError(f"no command registered for interrupts {sorted(missing)}")
    if set(assembly.pool.members) != set(assembly.wheels) | {assembly.dir_system}:
        raise BuildError("the pool does not hold exactly the built sub-systems")
    return assembly


def build_assembly(cfg=None, threaded=False, timing='wall', record_trace=False, sink=None, extra_modes=()):
    cfg = cfg or get_config()
    kernel = SimKernel(record_trace=record_trace)
    try:
        wheel_plants, steering_plant = build_plants(cfg, kernel)
    except ConfigError as exc:
        raise BuildError(str(exc)) from None

    pipes = []
    wheels = [build_wheel_system(cfg, i, kernel, plant, pipes) for i, plant in enumerate(wheel_plants)]
    dir_system = build_dir_system(cfg, kernel, steering_plant, pipes)
    pool = build_pool(cfg, wheels, dir_system, threaded=threaded)
    parts = build_main_controller(cfg, kernel, pool, sink=sink, timing=timing, extra_modes=extra_modes)

    # plants step after the controller timers of the same period
    timers = parts.timers + [plant.attach() for plant in wheel_plants] + [steering_plant.attach()]

    assembly = SystemAssembly(
        cfg=cfg, kernel=kernel, wheel_plants=wheel_plants, steering_plant=steering_plant,
        wheels=wheels, dir_system=dir_system, pool=pool, main=parts.controller,
        channel=parts.channel, sink=parts.sink, link=parts.link, rc_buffers=parts.rc_buffers,
        pipes=pipes, timers=timers,
    )
    check_assembly(assembly)
    logger.debug("Built assembly: %d interrupt ids, %d pipes, %d timers, threaded=%s",
                 len(kernel.interrupt_ids()), len(pipes), len(timers), threaded)
    return assembly
