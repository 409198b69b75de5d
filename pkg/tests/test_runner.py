"""Scenario runs end to end: convergence, timing budget, determinism and CSV output."""

import numpy as np
import pytest

from analysis.report import level_tracking, settling_cycle
from analysis.runner import (
    SteeringSweep,
    emit_csv,
    metrics_frame,
    rc_width,
    read_csv,
    resolve_timing,
    run_scenario,
    summarize,
)
from analysis.scenarios import builtin_scenario
from firmware.builders import build_assembly
from firmware.kernel import ms
from firmware.main_control import metrics_columns
from firmware.messages import Order, encode_frame

CONTROL_COLUMNS = [c for c in metrics_columns() if c != 'compute_time_us']


@pytest.fixture(scope='module')
def timed_runs():
    """All four built-in scenarios, 1000 cycles each, wall-clock timing."""
    return {sid: run_scenario(builtin_scenario(sid), mode='det', timing='wall') for sid in '1234'}


# ============================================================
# TIMING BUDGET
# ============================================================

def test_every_cycle_within_budget(timed_runs):
    for sid, result in timed_runs.items():
        summary = result.summary
        assert summary.cycles == 1000
        assert summary.max_ms < 100.0, sid
        assert summary.budget_violations == 0 and summary.errors == 0
        assert summary.ok and not summary.empty
        assert 0.0 < summary.avg_ms <= summary.max_ms


def test_one_telemetry_frame_per_cycle(timed_runs):
    result = timed_runs['1']
    assert len(result.telemetry) == 1000
    assert [t.cycle for t in result.telemetry[:3]] == [0, 1, 2]


# ============================================================
# CONVERGENCE
# ============================================================

def test_step_to_fifty_rpm_settles(timed_runs):
    metrics = timed_runs['1'].metrics
    settled = settling_cycle(metrics, 50.0, after=500)
    assert settled is not None and settled <= 550
    for m in metrics[settled:]:
        assert all(abs(rpm - 50.0) <= 2.5 for rpm in m.wheel_rpm), m.cycle
    assert all(m.wheel_rpm == (0.0,) * 4 for m in metrics[:500])


def test_staircase_levels_are_tracked(timed_runs):
    levels = level_tracking(timed_runs['3'].metrics)
    assert len(levels) == 13
    assert levels['setpoint'].tolist() == [0, 50, 100, 150, 200, 250, 300, 250, 200, 150, 100, 50, 0]
    assert levels['tracked'].all(), levels


def test_sweep_reaches_both_extremes(timed_runs):
    metrics = timed_runs['2'].metrics
    positions = np.array([m.steer_pos for m in metrics])
    assert positions.max() >= 29.5 and positions.min() <= -29.5
    targets = {m.steer_sp for m in metrics[7:]}
    assert targets == {30.0, -30.0}


def test_sweep_flips_at_the_target():
    sweep = SteeringSweep(30.0, 0.5)
    assert sweep.next_target(None) == 30.0
    assert sweep.next_target(12.0) == 30.0
    assert sweep.next_target(29.6) == -30.0
    assert sweep.next_target(-29.5) == 30.0


# ============================================================
# DETERMINISM
# ============================================================

def test_det_runs_are_byte_identical(tmp_path):
    paths = [tmp_path / 'a.csv', tmp_path / 'b.csv']
    for path in paths:
        result = run_scenario(builtin_scenario('1'), mode='det', seed=7)
        emit_csv(result.metrics, path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert set(metrics_frame(result.metrics)['compute_time_us']) == {0}


def test_threaded_matches_det_on_control_columns():
    scenario = builtin_scenario('4', cycles=200)
    det = metrics_frame(run_scenario(scenario, mode='det', seed=3).metrics)
    threaded = metrics_frame(run_scenario(scenario, mode='threaded', seed=3).metrics)
    assert det[CONTROL_COLUMNS].equals(threaded[CONTROL_COLUMNS])


def test_rc_run_and_trace_replay(tmp_path):
    scenario = builtin_scenario('1', cycles=120, source='rc')
    trace_path = tmp_path / 'rc.csv'
    first = run_scenario(scenario, seed=11, dump_rc_trace=str(trace_path))
    replay = run_scenario(scenario, seed=99, rc_trace=str(trace_path))
    assert metrics_frame(first.metrics).equals(metrics_frame(replay.metrics))
    assert first.metrics[0].order_source == 'RC' and first.metrics[0].op_state == 'Working'
    expected_sp = (rc_width(50.0, 300.0) - 1500) / 500 * 300.0
    assert first.metrics[-1].wheel_sp == pytest.approx((expected_sp,) * 4)
    assert len(first.rc_edges) == 120 * 5 * 4


def test_pipe_decoupling_with_scripted_velocity_source():
    frame = encode_frame(Order.velocity(80.0, steering=12.0))

    def run(script=None):
        with build_assembly(timing='off') as assembly:
            if script is not None:
                for wheel, values in zip(assembly.wheels, script):
                    wheel.velocity_source = ScriptedVelocity(wheel.vel_reader.pipe, values)
            for _ in range(100):
                assembly.channel.write(frame)
                assembly.kernel.advance_by(ms(100))
            return list(assembly.main.metrics)

    real = run()
    script = [[m.wheel_rpm[i] for m in real] for i in range(4)]
    mocked = run(script)
    assert metrics_frame(mocked).equals(metrics_frame(real))
    assert any(m.wheel_rpm[0] > 0 for m in real)


class ScriptedVelocity:
    def __init__(self, pipe, values):
        self.pipe = pipe
        self.values = list(values)

    def sample(self, at):
        value = self.values.pop(0)
        self.pipe.write(value, at)
        return value


# ============================================================
# SUMMARY AND CSV
# ============================================================

def test_empty_run_is_flagged():
    result = run_scenario(builtin_scenario('1', cycles=0))
    assert result.metrics == []
    assert result.summary.empty
    assert (result.summary.avg_ms, result.summary.max_ms) == (0.0, 0.0)


def test_summary_counts_budget_violations():
    class Fake:
        def __init__(self, us, error=False):
            self.compute_time_us, self.error = us, error

    scenario = builtin_scenario('1', cycles=3)
    summary = summarize(scenario, [Fake(1_000), Fake(150_000), Fake(2_000, error=True)])
    assert summary.budget_violations == 1 and summary.errors == 1
    assert summary.max_ms == 150.0
    assert not summary.ok


def test_csv_round_trip(tmp_path):
    result = run_scenario(builtin_scenario('2', cycles=60), timing='wall')
    path = tmp_path / 'run.csv'
    emit_csv(result.metrics, path)
    assert read_csv(path) == result.metrics


def test_csv_line_counts(tmp_path, timed_runs):
    path = tmp_path / 'full.csv'
    emit_csv(timed_runs['3'].metrics, path)
    lines = path.read_text(encoding='utf-8').splitlines()
    assert len(lines) == 1001
    assert lines[0].split(',') == metrics_columns()

    empty = tmp_path / 'empty.csv'
    emit_csv([], empty)
    assert empty.read_text(encoding='utf-8').splitlines() == [','.join(metrics_columns())]


@pytest.mark.parametrize("timing, mode, expected", [
    ('auto', 'det', 'off'), ('auto', 'threaded', 'wall'), ('wall', 'det', 'wall'), ('off', 'threaded', 'off'),
])
def test_resolve_timing(timing, mode, expected):
    assert resolve_timing(timing, mode) == expected


def test_bad_mode_and_timing():
    with pytest.raises(ValueError):
        run_scenario(builtin_scenario('1', cycles=1), mode='parallel')
    with pytest.raises(ValueError):
        resolve_timing('cpu', 'det')
