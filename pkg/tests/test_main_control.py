"""Main control: the two state machines, the read phase and the control cycle."""

import hashlib
import itertools
import time
from pathlib import Path

import pytest

from firmware.builders import build_assembly
from firmware.io_sources import Mode
from firmware.kernel import ms
from firmware.main_control import (
    RECONNECTING,
    WORKING,
    Action,
    CtrlState,
    SubsystemPool,
    ThreadedPool,
    Waiting,
    fsm_step,
    initial_state,
)
from firmware.messages import Order, decode_frames, encode_frame
from firmware.wheel_control import CycleCommand

RC, PC = 0, 1
NEW, PREV = Action.READ_NEW, Action.USE_PREVIOUS

# (state, mode, message available) -> (state, mode, action), N = 5
TRANSITIONS_N5 = {
    ('Working', RC, True): ('Working', RC, NEW),
    ('Working', PC, True): ('Working', PC, NEW),
    ('Waiting1', RC, True): ('Working', RC, NEW),
    ('Waiting1', PC, True): ('Working', PC, NEW),
    ('Waiting2', RC, True): ('Working', RC, NEW),
    ('Waiting2', PC, True): ('Working', PC, NEW),
    ('Waiting3', RC, True): ('Working', RC, NEW),
    ('Waiting3', PC, True): ('Working', PC, NEW),
    ('Waiting4', RC, True): ('Working', RC, NEW),
    ('Waiting4', PC, True): ('Working', PC, NEW),
    ('Waiting5', RC, True): ('Working', RC, NEW),
    ('Waiting5', PC, True): ('Working', PC, NEW),
    ('Reconnecting', RC, True): ('Working', RC, NEW),
    ('Reconnecting', PC, True): ('Working', PC, NEW),
    ('Working', RC, False): ('Waiting1', RC, PREV),
    ('Working', PC, False): ('Waiting1', PC, PREV),
    ('Waiting1', RC, False): ('Waiting2', RC, PREV),
    ('Waiting1', PC, False): ('Waiting2', PC, PREV),
    ('Waiting2', RC, False): ('Waiting3', RC, PREV),
    ('Waiting2', PC, False): ('Waiting3', PC, PREV),
    ('Waiting3', RC, False): ('Waiting4', RC, PREV),
    ('Waiting3', PC, False): ('Waiting4', PC, PREV),
    ('Waiting4', RC, False): ('Waiting5', RC, PREV),
    ('Waiting4', PC, False): ('Waiting5', PC, PREV),
    ('Waiting5', RC, False): ('Reconnecting', RC, PREV),
    ('Waiting5', PC, False): ('Reconnecting', PC, PREV),
    ('Reconnecting', RC, False): ('Reconnecting', PC, PREV),
    ('Reconnecting', PC, False): ('Reconnecting', RC, PREV),
}


def _op_state(name):
    if name == 'Working':
        return WORKING
    if name == 'Reconnecting':
        return RECONNECTING
    return Waiting(int(name[len('Waiting'):]))


# ============================================================
# STATE MACHINES
# ============================================================

@pytest.mark.parametrize("entry", sorted(TRANSITIONS_N5, key=repr))
def test_single_transitions(entry):
    name, mode, available = entry
    state, action = fsm_step(CtrlState(_op_state(name), mode, 5), available)
    assert (state.op_state.name, state.mode, action) == TRANSITIONS_N5[entry]


def test_initial_state():
    state = initial_state(5)
    assert (state.op_state, state.mode) == (WORKING, RC)


def test_every_input_word_matches_the_table():
    n = 5
    for length in range(1, n + 4):
        for word in itertools.product((True, False), repeat=length):
            state = initial_state(n)
            expected = ('Working', RC)
            for available in word:
                state, action = fsm_step(state, available)
                name, mode, expected_action = TRANSITIONS_N5[(*expected, available)]
                assert (state.op_state.name, state.mode, action) == (name, mode, expected_action), word
                expected = (name, mode)


@pytest.mark.parametrize("k", range(2, 51))
def test_silence_alternates_modes(k):
    n = 5
    state, modes = initial_state(n), []
    for _ in range(n + k):
        state, _ = fsm_step(state, False)
        modes.append(state.mode)
    assert modes[:n + 1] == [RC] * (n + 1)
    tail = modes[n:]
    assert all(a != b for a, b in zip(tail, tail[1:]))


def test_depth_one():
    state = initial_state(1)
    names = []
    for _ in range(4):
        state, _ = fsm_step(state, False)
        names.append((state.op_state.name, state.mode))
    assert names == [('Waiting1', RC), ('Reconnecting', RC), ('Reconnecting', PC), ('Reconnecting', RC)]


def test_unrolled_silence_from_working():
    n = 5
    state, names = initial_state(n), []
    for _ in range(n + 2):
        state, _ = fsm_step(state, False)
        names.append(state.op_state.name)
    assert names == ['Waiting1', 'Waiting2', 'Waiting3', 'Waiting4', 'Waiting5', 'Reconnecting', 'Reconnecting']
    assert state.mode == PC


def test_invalid_states():
    with pytest.raises(ValueError):
        CtrlState(WORKING, RC, 0)
    with pytest.raises(ValueError):
        CtrlState(WORKING, 7, 5)
    with pytest.raises(ValueError):
        Waiting(0)


def test_third_mode_joins_the_rotation():
    state, modes = initial_state(1, rotation=(RC, PC, 2)), []
    for _ in range(6):
        state, _ = fsm_step(state, False)
        modes.append(state.mode)
    assert modes == [RC, RC, PC, 2, RC, PC]


# ============================================================
# CONTROL CYCLE
# ============================================================

def _cycles(assembly, count, frame=None):
    for _ in range(count):
        if frame is not None:
            assembly.channel.write(frame)
        assembly.kernel.advance_by(ms(100))
    return assembly.main.metrics


def test_pc_order_is_read_after_switching_modes(assembly):
    metrics = _cycles(assembly, 10, encode_frame(Order.velocity(40.0, steering=5.0)))
    states = [(m.op_state, m.mode) for m in metrics]
    assert states[:8] == [
        ('Waiting1', 'RC'), ('Waiting2', 'RC'), ('Waiting3', 'RC'), ('Waiting4', 'RC'),
        ('Waiting5', 'RC'), ('Reconnecting', 'RC'), ('Reconnecting', 'PC'), ('Working', 'PC'),
    ]
    assert metrics[6].wheel_sp == (0.0,) * 4
    assert metrics[7].wheel_sp == (40.0,) * 4
    assert metrics[7].order_source == 'PC'
    assert metrics[7].steer_sp == 5.0


def test_previous_setpoints_are_kept_through_silence(assembly):
    _cycles(assembly, 1, encode_frame(Order.velocity(120.0, steering=-10.0)))
    metrics = _cycles(assembly, 999)
    first = next(i for i, m in enumerate(metrics) if m.order_source == 'PC')
    assert first == 7
    later = metrics[first:]
    assert len(later) == 993
    assert all(m.wheel_sp == (120.0,) * 4 and m.steer_sp == -10.0 for m in later)
    assert {m.op_state for m in later[8:]} == {'Reconnecting'}
    assert {m.mode for m in later[8:]} == {'RC', 'PC'}


def test_one_telemetry_per_cycle(assembly):
    metrics = _cycles(assembly, 20, encode_frame(Order.velocity(10.0)))
    assert len(assembly.main.telemetry) == len(metrics) == 20
    sent = decode_frames(assembly.sink.getvalue())
    assert [t.cycle for t in sent] == list(range(20))
    assert sent[-1].op_state_code == 0 and sent[-1].mode_code == PC
    assert sent[5].op_state_code == 0x7F


def test_stop_order_zeroes_wheels_and_keeps_steering(assembly):
    _cycles(assembly, 10, encode_frame(Order.velocity(100.0, steering=8.0)))
    metrics = _cycles(assembly, 3, encode_frame(Order.stop()))[-3:]
    assert all(m.wheel_sp == (0.0,) * 4 for m in metrics)
    assert all(m.wheel_volts == (0.0,) * 4 for m in metrics)
    assert metrics[-1].steer_sp == 8.0


class FailingSource:
    def sample(self, at):
        raise RuntimeError("sensor bus fault")


def test_subsystem_failure_flags_the_cycle(assembly):
    _cycles(assembly, 2)
    good = assembly.wheels[2].velocity_source
    assembly.wheels[2].velocity_source = FailingSource()
    bad = _cycles(assembly, 1)[-1]
    assembly.wheels[2].velocity_source = good
    after = _cycles(assembly, 1)[-1]
    assert bad.error and not after.error
    assert assembly.main.telemetry[-2].error
    assert not assembly.main.telemetry[-1].error


@pytest.mark.parametrize("pool_cls", [SubsystemPool, ThreadedPool])
def test_pools_report_errors(pool_cls):
    class Ok:
        name = 'ok'

        def execute_cycle_orders(self, cmd):
            return None

    class Broken(Ok):
        name = 'broken'

        def execute_cycle_orders(self, cmd):
            raise ValueError('boom')

    with pool_cls([Ok(), Broken(), Ok(), Ok()], Ok()) as pool:
        errors = pool.run_cycle(CycleCommand(0, 0))
    assert len(errors) == 1 and isinstance(errors[0], ValueError)


@pytest.mark.parametrize("pool_cls, ran_after_failure", [(SubsystemPool, 0), (ThreadedPool, 3)])
def test_what_runs_after_a_failure(pool_cls, ran_after_failure):
    calls = []

    class Member:
        def __init__(self, name, broken=False):
            self.name, self.broken = name, broken

        def execute_cycle_orders(self, cmd):
            calls.append(self.name)
            if self.broken:
                raise ValueError('boom')

    wheels = [Member('w0'), Member('w1', broken=True), Member('w2'), Member('w3')]
    with pool_cls(wheels, Member('dir')) as pool:
        errors = pool.run_cycle(CycleCommand(0, 0))
    assert len(errors) == 1
    assert {'w0', 'w1'} <= set(calls)
    assert len(set(calls) & {'w2', 'w3', 'dir'}) == ran_after_failure


class SlowWriter:
    def __init__(self, inner, delay):
        self.inner, self.delay = inner, delay

    def write(self, telemetry):
        time.sleep(self.delay)
        return self.inner.write(telemetry)


def test_compute_time_includes_the_telemetry_write():
    with build_assembly(timing='wall') as assembly:
        assembly.main.writer = SlowWriter(assembly.main.writer, 0.02)
        metrics = _cycles(assembly, 3)
        telemetry = list(assembly.main.telemetry)
    assert all(m.compute_time_us >= 20_000 for m in metrics)
    assert all(t.compute_time_us < m.compute_time_us for t, m in zip(telemetry, metrics))


# ============================================================
# A THIRD READING MODE
# ============================================================

# Adding a reading mode must not touch the controller or the sources.
# Update these digests when either file changes on purpose.
PINNED_SOURCES = {
    'firmware/main_control.py': '13a41b5e2690f0651433712bef857d05bc9e059ef103aec71c06981e21178b2e',
    'firmware/io_sources.py': 'e0435c55e9ae898e642f4c8d8e4d63b99b69c602188d6f0eb742025dd8e81a05',
}
ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def unchanged_sources():
    yield
    for rel, digest in PINNED_SOURCES.items():
        assert hashlib.sha256((ROOT / rel).read_bytes()).hexdigest() == digest, rel


class ScriptedMode(Mode):
    """An extra order source (say a Bluetooth link) with scripted messages."""

    code = 2
    name = 'BT'

    def __init__(self, orders_at=None):
        self.orders_at = dict(orders_at or {})
        self.polls = 0
        self.pending = None

    def new_message(self):
        self.pending = self.orders_at.pop(self.polls, None)
        self.polls += 1
        return self.pending is not None

    def read(self):
        order, self.pending = self.pending, None
        return order


@pytest.mark.usefixtures('unchanged_sources')
def test_third_mode_is_polled_and_read():
    stub = ScriptedMode({0: Order.velocity(60.0)})
    with build_assembly(timing='off', extra_modes=[stub]) as assembly:
        metrics = _cycles(assembly, 12)
    modes = [m.mode for m in metrics]
    assert modes[:9] == ['RC'] * 6 + ['PC', 'BT', 'BT']
    assert metrics[8].op_state == 'Working'
    assert metrics[8].order_source == 'BT'
    assert metrics[8].wheel_sp == (60.0,) * 4


@pytest.mark.usefixtures('unchanged_sources')
def test_third_mode_keeps_the_state_machine_table():
    stub = ScriptedMode()
    with build_assembly(timing='off', extra_modes=[stub]) as assembly:
        metrics = _cycles(assembly, 12)
    assert [m.op_state for m in metrics[:6]] == [
        'Waiting1', 'Waiting2', 'Waiting3', 'Waiting4', 'Waiting5', 'Reconnecting']
    assert [m.mode for m in metrics[5:12]] == ['RC', 'PC', 'BT', 'RC', 'PC', 'BT', 'RC']
