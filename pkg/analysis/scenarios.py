"""
Weeding Robot — Scenarios
==========================
The four timing experiments, each a set-point schedule over a number of
control cycles:

    1  wheels at 0 rpm for the first half, then 50 rpm
    2  wheels at 50 rpm, steering back and forth between the extremes
    3  wheels stepped 0 -> 300 -> 0 rpm in 50 rpm levels
    4  the scenario 3 staircase with the scenario 2 steering sweep

Scenario files are flat key=value text:

    scenario.id=ramp
    scenario.description=slow ramp
    scenario.cycles=400
    scenario.source=pc              # pc | rc
    scenario.steering=sweep         # sweep | <degrees>
    schedule.velocity=0:0,100:50,300:0
    plant.tau=0.4                   # any other key overrides the config
"""

import bisect
import logging
import os
from dataclasses import dataclass, field

from config import parse_value
from firmware.errors import ScenarioLoadError

logger = logging.getLogger(__name__)

DEFAULT_CYCLES = 1000
DEFAULT_BUDGET_MS = 100.0
SWEEP = 'sweep'
SOURCES = ('pc', 'rc')

# 0, 50, ..., 300, 250, ..., 0  (13 levels)
STAIRCASE_LEVELS = tuple(range(0, 301, 50)) + tuple(range(250, -1, -50))


@dataclass(frozen=True)
class Scenario:
    id: str
    description: str
    cycle_count: int = DEFAULT_CYCLES
    cycle_budget_ms: float = DEFAULT_BUDGET_MS
    velocity_steps: tuple = ((0, 0.0),)      # (first cycle, rpm), ascending
    steering: object = 0.0                    # degrees, or SWEEP
    source: str = 'pc'
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.cycle_count < 0:
            raise ScenarioLoadError(f"scenario {self.id}: negative cycle count")
        if self.source not in SOURCES:
            raise ScenarioLoadError(f"scenario {self.id}: source must be one of {SOURCES}, got {self.source!r}")
        starts = [start for start, _ in self.velocity_steps]
        if not starts or starts[0] != 0 or starts != sorted(set(starts)):
            raise ScenarioLoadError(
                f"scenario {self.id}: velocity schedule must start at cycle 0 and be strictly ascending")

    @property
    def sweeps(self):
        return self.steering == SWEEP

    def velocity_at(self, cycle):
        starts = [start for start, _ in self.velocity_steps]
        i = bisect.bisect_right(starts, cycle) - 1
        return self.velocity_steps[i][1]

    def fixed_steering(self):
        return 0.0 if self.sweeps else float(self.steering)

    def with_cycles(self, cycles):
        if cycles is None or cycles == self.cycle_count:
            return self
        return Scenario(self.id, self.description, cycles, self.cycle_budget_ms,
                        self.velocity_steps, self.steering, self.source, self.overrides)

    def with_source(self, source):
        if source is None or source == self.source:
            return self
        return Scenario(self.id, self.description, self.cycle_count, self.cycle_budget_ms,
                        self.velocity_steps, self.steering, source, self.overrides)


# ============================================================
# BUILT-IN SCHEDULES
# ============================================================

def step_schedule(cycles, rpm=50.0):
    """0 rpm for the first half, `rpm` for the second."""
    half = cycles // 2
    return ((0, 0.0), (half, float(rpm))) if half > 0 else ((0, float(rpm)),)


def staircase_schedule(cycles, levels=STAIRCASE_LEVELS):
    """Equal dwell per level (floor division); the remainder goes to the last level."""
    dwell = cycles // len(levels)
    if dwell == 0:
        return ((0, float(levels[0])),)
    return tuple((i * dwell, float(level)) for i, level in enumerate(levels))


BUILTIN = {
    '1': 'Velocity set-points 0 rpm, then raised to 50 rpm',
    '2': 'Velocity 50 rpm, steering back and forth between extreme left and right',
    '3': 'Velocity raised 0 -> 300 rpm in 50 rpm steps, then lowered back to 0',
    '4': 'Velocity staircase as in 3 while steering sweeps as in 2',
}


def builtin_scenario(scenario_id, cycles=DEFAULT_CYCLES, source='pc'):
    scenario_id = str(scenario_id)
    if scenario_id not in BUILTIN:
        raise ScenarioLoadError(f"unknown scenario id {scenario_id!r}; built-ins are {sorted(BUILTIN)}")
    if scenario_id == '1':
        steps, steering = step_schedule(cycles), 0.0
    elif scenario_id == '2':
        steps, steering = ((0, 50.0),), SWEEP
    elif scenario_id == '3':
        steps, steering = staircase_schedule(cycles), 0.0
    else:
        steps, steering = staircase_schedule(cycles), SWEEP
    return Scenario(scenario_id, BUILTIN[scenario_id], cycles, DEFAULT_BUDGET_MS, steps, steering, source)


def list_scenarios():
    return [{'id': sid, 'description': text} for sid, text in BUILTIN.items()]


# ============================================================
# FILE LOADER
# ============================================================

def parse_velocity_schedule(text):
    steps = []
    for item in text.split(','):
        item = item.strip()
        if not item:
            continue
        cycle, sep, rpm = item.partition(':')
        if not sep:
            raise ScenarioLoadError(f"velocity step {item!r} is not cycle:rpm")
        try:
            steps.append((int(cycle), float(rpm)))
        except ValueError:
            raise ScenarioLoadError(f"velocity step {item!r} is not numeric") from None
    return tuple(steps)


def parse_scenario_lines(lines, source='<text>'):
    meta, overrides = {}, {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split('#', 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition('=')
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ScenarioLoadError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        if key.startswith(('scenario.', 'schedule.')):
            meta[key] = value
            continue
        try:
            overrides[key] = parse_value(value)
        except ValueError:
            raise ScenarioLoadError(f"{source}:{lineno}: {key} has non-numeric value {value!r}") from None

    try:
        cycles = int(meta.get('scenario.cycles', DEFAULT_CYCLES))
        budget = float(meta.get('scenario.budget_ms', DEFAULT_BUDGET_MS))
        steering = meta.get('scenario.steering', '0')
        steering = SWEEP if steering == SWEEP else float(steering)
    except ValueError as exc:
        raise ScenarioLoadError(f"{source}: {exc}") from None
    if 'schedule.velocity' not in meta:
        raise ScenarioLoadError(f"{source}: schedule.velocity is required")

    return Scenario(
        id=meta.get('scenario.id', os.path.splitext(os.path.basename(source))[0]),
        description=meta.get('scenario.description', ''),
        cycle_count=cycles,
        cycle_budget_ms=budget,
        velocity_steps=parse_velocity_schedule(meta['schedule.velocity']),
        steering=steering,
        source=meta.get('scenario.source', 'pc'),
        overrides=overrides,
    )


def load_scenario(ref, cycles=None, source=None):
    """Built-in id (1-4) or the path of a scenario file."""
    ref = str(ref)
    if ref in BUILTIN:
        scenario = builtin_scenario(ref, DEFAULT_CYCLES if cycles is None else cycles)
        return scenario.with_source(source)
    if not os.path.isfile(ref):
        raise ScenarioLoadError(f"{ref!r} is neither a built-in scenario id nor a file")
    with open(ref, 'r', encoding='utf-8') as f:
        scenario = parse_scenario_lines(f.readlines(), source=ref)
    logger.info("Loaded scenario %s from %s (%d cycles)", scenario.id, ref, scenario.cycle_count)
    return scenario.with_cycles(cycles).with_source(source)
