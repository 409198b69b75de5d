"""
Weeding Robot — Scenario Runner
================================
Runs a scenario end to end on a freshly built assembly:

    for each cycle c:
        inject the order for c (PC frame into the serial channel, or RC
        pulses on the two pins inside the coming period)
        advance the kernel to the next FirstTimer pulse, which runs the
        control cycle

Per-cycle metrics come back as CycleMetrics rows; the summary holds the
Avg/Max compute time and the budget check.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from config import get_config
from firmware.builders import build_assembly
from firmware.io_sources import (
    pulse_edges,
    read_pc_stream,
    read_rc_trace,
    write_pc_stream,
    write_rc_trace,
)
from firmware.kernel import ms
from firmware.main_control import CycleMetrics, metrics_columns
from firmware.messages import Order, encode_frame

logger = logging.getLogger(__name__)

TIMING_MODES = ('auto', 'wall', 'off')
RUN_MODES = ('det', 'threaded')
RC_FRAME_US = 20_000        # 50 Hz pulse train
RC_PHASE_JITTER_US = 2_000
RC_DIRECTION_OFFSET_US = 2_500


@dataclass(frozen=True)
class RunSummary:
    scenario_id: str
    description: str
    cycles: int
    avg_ms: float
    max_ms: float
    budget_ms: float
    budget_violations: int
    errors: int
    empty: bool = False

    @property
    def ok(self):
        return self.budget_violations == 0 and self.errors == 0

    def as_dict(self):
        return {
            'scenario': self.scenario_id,
            'description': self.description,
            'cycles': self.cycles,
            'avg_ms': self.avg_ms,
            'max_ms': self.max_ms,
            'budget_ms': self.budget_ms,
            'budget_violations': self.budget_violations,
            'errors': self.errors,
            'empty': self.empty,
            'ok': self.ok,
        }


@dataclass
class RunResult:
    scenario: object
    metrics: list
    summary: RunSummary
    rc_edges: list = field(default_factory=list)
    telemetry: list = field(default_factory=list)
    sent_bytes: bytes = b''


def summarize(scenario, metrics):
    """Avg/Max compute time in ms; an empty run reports 0 with the empty flag."""
    if not metrics:
        return RunSummary(scenario.id, scenario.description, 0, 0.0, 0.0,
                          scenario.cycle_budget_ms, 0, 0, empty=True)
    compute_ms = np.array([m.compute_time_us for m in metrics], dtype=float) / 1000.0
    return RunSummary(
        scenario_id=scenario.id,
        description=scenario.description,
        cycles=len(metrics),
        avg_ms=float(compute_ms.mean()),
        max_ms=float(compute_ms.max()),
        budget_ms=scenario.cycle_budget_ms,
        budget_violations=int((compute_ms > scenario.cycle_budget_ms).sum()),
        errors=sum(1 for m in metrics if m.error),
    )


def resolve_timing(timing, mode):
    if timing not in TIMING_MODES:
        raise ValueError(f"timing must be one of {TIMING_MODES}, got {timing!r}")
    if timing == 'auto':
        return 'off' if mode == 'det' else 'wall'
    return timing


class SteeringSweep:
    """Flips the steering target to the other extreme once it has been reached."""

    def __init__(self, limit=30.0, deadband=0.5):
        self.limit = limit
        self.deadband = deadband
        self.target = limit

    def next_target(self, measured):
        if measured is not None and abs(measured - self.target) <= self.deadband:
            self.target = -self.target
        return self.target


def rc_width(setpoint, full_scale, center=1500, span=500):
    """Pulse width (us) that an RC transmitter sends for `setpoint`."""
    return int(round(center + np.clip(setpoint / full_scale, -1.0, 1.0) * span))


def rc_cycle_edges(start, period_us, rpm, steering, cfg, rng):
    """Trace rows for one control period of a 50 Hz two-channel RC pulse train."""
    center, span = cfg['rc.center'], cfg['rc.span']
    vel_width = rc_width(rpm, cfg['rc.max_rpm'], center, span)
    dir_width = rc_width(steering, cfg['steer.limit'], center, span)
    phase = int(rng.integers(1, RC_PHASE_JITTER_US))
    edges = []
    for k in range(period_us // RC_FRAME_US):
        t = start + phase + k * RC_FRAME_US
        edges += pulse_edges('velocity', vel_width, t)
        edges += pulse_edges('direction', dir_width, t + RC_DIRECTION_OFFSET_US)
    return edges


def run_scenario(scenario, mode='det', seed=0, cfg=None, timing='auto', rc_trace=None,
                 dump_rc_trace=None, pc_replay=None, dump_pc_stream=None):
    """Build an assembly for `scenario` and run all its cycles.

    `pc_replay` feeds a captured serial stream instead of the scenario's
    orders, chunk i in cycle i; cycles past the end of the capture are silent.
    """
    if mode not in RUN_MODES:
        raise ValueError(f"mode must be one of {RUN_MODES}, got {mode!r}")
    cfg = (cfg or get_config()).with_overrides(scenario.overrides)
    timing = resolve_timing(timing, mode)
    rng = np.random.default_rng(seed)
    period_us = ms(cfg['timer.first_ms'])
    sweep = SteeringSweep(cfg['steer.limit'], cfg['steer.deadband']) if scenario.sweeps else None

    logger.info("Running scenario %s: %d cycles, mode=%s, source=%s, timing=%s",
                scenario.id, scenario.cycle_count, mode, scenario.source, timing)

    with build_assembly(cfg, threaded=(mode == 'threaded'), timing=timing) as assembly:
        kernel, main = assembly.kernel, assembly.main
        replay = rc_trace is not None
        if replay:
            trace = rc_trace if isinstance(rc_trace, pd.DataFrame) else read_rc_trace(rc_trace)
            for row in trace.itertuples(index=False):
                kernel.raise_interrupt(f"rc_pin.{row.channel}", int(row.time_us), row.level)
        rc_edges, pc_frames = [], []
        pc_chunks = read_pc_stream(pc_replay) if pc_replay else None

        for cycle in range(scenario.cycle_count):
            start = cycle * period_us
            rpm = scenario.velocity_at(cycle)
            if sweep is not None:
                last_pos = main.metrics[-1].steer_pos if main.metrics else None
                steering = sweep.next_target(last_pos)
            else:
                steering = scenario.fixed_steering()

            if pc_chunks is not None:
                if cycle < len(pc_chunks):
                    assembly.channel.write(pc_chunks[cycle])
            elif scenario.source == 'pc':
                frame = encode_frame(Order.velocity(rpm, steering))
                assembly.channel.write(frame)
                pc_frames.append(frame)
            elif not replay:
                edges = rc_cycle_edges(start, period_us, rpm, steering, cfg, rng)
                for at, channel, level in edges:
                    kernel.raise_interrupt(f"rc_pin.{channel}", at, level)
                rc_edges += edges

            kernel.advance_until(start + period_us)

        metrics = list(main.metrics)
        telemetry = list(main.telemetry)
        sent = assembly.sink.getvalue() if hasattr(assembly.sink, 'getvalue') else b''

    if dump_rc_trace:
        write_rc_trace(rc_edges, dump_rc_trace)
    if dump_pc_stream:
        write_pc_stream(pc_frames, dump_pc_stream)
    summary = summarize(scenario, metrics)
    logger.info("Scenario %s done: avg %.3f ms, max %.3f ms, %d budget violations, %d errors",
                scenario.id, summary.avg_ms, summary.max_ms, summary.budget_violations, summary.errors)
    return RunResult(scenario, metrics, summary, rc_edges, telemetry, sent)


# ============================================================
# CSV
# ============================================================

def metrics_frame(metrics):
    return pd.DataFrame([m.as_row() for m in metrics], columns=metrics_columns())


def emit_csv(metrics, path):
    """Header plus one row per cycle, '.' decimal point."""
    metrics_frame(metrics).to_csv(path, index=False, lineterminator='\n')


def read_csv(path):
    frame = pd.read_csv(path, float_precision='round_trip',
                        dtype={'op_state': str, 'mode': str, 'order_source': str})
    return [CycleMetrics.from_row(row) for row in frame.to_dict('records')]
