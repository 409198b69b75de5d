"""Scenarios: built-in schedules and the scenario file loader."""

import numpy as np
import pytest

from analysis.scenarios import (
    STAIRCASE_LEVELS,
    Scenario,
    builtin_scenario,
    list_scenarios,
    load_scenario,
    parse_scenario_lines,
    staircase_schedule,
    step_schedule,
)
from firmware.errors import ScenarioLoadError


def test_scenario_one_split():
    s1 = builtin_scenario('1')
    assert s1.velocity_at(499) == 0.0
    assert s1.velocity_at(500) == 50.0
    assert s1.fixed_steering() == 0.0 and not s1.sweeps


def test_scenario_three_staircase():
    s3 = builtin_scenario('3')
    values = [s3.velocity_at(c) for c in range(1000)]
    assert values[0] == 0.0
    assert values[75] == 0.0 and values[76] == 50.0
    assert values[6 * 76] == 300.0
    assert values[999] == 0.0
    levels = [v for i, v in enumerate(values) if i == 0 or v != values[i - 1]]
    assert levels == [float(level) for level in STAIRCASE_LEVELS]
    peak = int(np.argmax(values))
    assert np.all(np.diff(values[:peak + 1]) >= 0)
    assert np.all(np.diff(values[peak:]) <= 0)


def test_staircase_remainder_on_last_level():
    steps = staircase_schedule(1000)
    assert len(steps) == 13
    assert steps[-1] == (912, 0.0)
    assert staircase_schedule(5) == ((0, 0.0),)


def test_step_schedule_edges():
    assert step_schedule(1) == ((0, 50.0),)
    assert step_schedule(10) == ((0, 0.0), (5, 50.0))


def test_sweeping_scenarios():
    assert builtin_scenario('2').sweeps and builtin_scenario('4').sweeps
    assert builtin_scenario('2').velocity_at(0) == 50.0


def test_unknown_builtin():
    with pytest.raises(ScenarioLoadError):
        builtin_scenario('9')
    assert [s['id'] for s in list_scenarios()] == ['1', '2', '3', '4']


def test_invalid_scenarios():
    with pytest.raises(ScenarioLoadError):
        Scenario('x', '', cycle_count=-1)
    with pytest.raises(ScenarioLoadError):
        Scenario('x', '', velocity_steps=((5, 10.0),))
    with pytest.raises(ScenarioLoadError):
        Scenario('x', '', source='bluetooth')


def test_load_builtin_with_overrides():
    scenario = load_scenario('3', cycles=130, source='rc')
    assert scenario.cycle_count == 130 and scenario.source == 'rc'
    assert scenario.velocity_at(10) == 50.0


def test_scenario_file(tmp_path):
    path = tmp_path / 'ramp.scenario'
    path.write_text(
        "# ramp\n"
        "scenario.id=ramp\n"
        "scenario.cycles=300\n"
        "scenario.steering=sweep\n"
        "scenario.source=rc\n"
        "schedule.velocity=0:0, 100:25 ,200:0\n"
        "plant.tau=0.4\n",
        encoding='utf-8',
    )
    scenario = load_scenario(str(path), cycles=50)
    assert scenario.id == 'ramp'
    assert scenario.cycle_count == 50
    assert scenario.sweeps and scenario.source == 'rc'
    assert scenario.velocity_steps == ((0, 0.0), (100, 25.0), (200, 0.0))
    assert scenario.overrides == {'plant.tau': 0.4}


@pytest.mark.parametrize("lines", [
    ["scenario.id=x"],
    ["schedule.velocity=0:a"],
    ["schedule.velocity=0-10"],
    ["schedule.velocity=0:0", "plant.kv=fast"],
    ["no equals sign"],
    ["schedule.velocity=0:0", "scenario.cycles=many"],
])
def test_malformed_scenario_lines(lines):
    with pytest.raises(ScenarioLoadError):
        parse_scenario_lines(lines)


def test_missing_file():
    with pytest.raises(ScenarioLoadError):
        load_scenario('/nonexistent/scenario.txt')
