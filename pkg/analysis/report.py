"""
Weeding Robot — Run Reports
============================
Turns run results into the timing table (scenario, description, Avg ms,
Max ms) and checks how well the wheels tracked their set-points.
"""

import numpy as np
import pandas as pd

from analysis.runner import metrics_frame

TOLERANCE = 0.05


def timing_table(summaries):
    """One row per scenario with the Avg/Max compute time and the budget check."""
    rows = [{
        'Scenario': s.scenario_id,
        'Description': s.description,
        'Cycles': s.cycles,
        'Avg (ms)': round(s.avg_ms, 3),
        'Max (ms)': round(s.max_ms, 3),
        'Budget (ms)': s.budget_ms,
        'Violations': s.budget_violations,
        'Errors': s.errors,
    } for s in summaries]
    return pd.DataFrame(rows, columns=['Scenario', 'Description', 'Cycles', 'Avg (ms)', 'Max (ms)',
                                       'Budget (ms)', 'Violations', 'Errors'])


def format_summary(summaries):
    table = timing_table(summaries)
    lines = ["=" * 78, "CONTROL CYCLE TIMING", "=" * 78]
    for _, row in table.iterrows():
        lines.append(f"Scenario {row['Scenario']}: {row['Description']}")
        lines.append(f"    cycles={row['Cycles']}  Avg={row['Avg (ms)']:.3f} ms  "
                     f"Max={row['Max (ms)']:.3f} ms  budget={row['Budget (ms)']:g} ms  "
                     f"violations={row['Violations']}  errors={row['Errors']}")
    lines.append("=" * 78)
    return "\n".join(lines)


def level_tracking(metrics, wheel=0, tolerance=TOLERANCE):
    """
    Split a run into set-point levels and report how each one ended.

    A level is a run of consecutive cycles with the same set-point.  It is
    tracked when the measured speed on its last cycle is within `tolerance`
    of the set-point (exactly equal for a 0 rpm level).
    """
    frame = metrics_frame(metrics)
    if frame.empty:
        return pd.DataFrame(columns=['setpoint', 'first_cycle', 'last_cycle', 'final_rpm',
                                     'settled_cycle', 'tracked'])
    sp = frame[f'w{wheel}_sp']
    level_id = (sp != sp.shift()).cumsum()
    rows = []
    for _, level in frame.groupby(level_id, sort=True):
        setpoint = float(level[f'w{wheel}_sp'].iloc[0])
        measured = level[f'w{wheel}_rpm'].to_numpy()
        inside = _within(measured, setpoint, tolerance)
        rows.append({
            'setpoint': setpoint,
            'first_cycle': int(level['cycle'].iloc[0]),
            'last_cycle': int(level['cycle'].iloc[-1]),
            'final_rpm': float(measured[-1]),
            'settled_cycle': _settled_cycle(inside, level['cycle'].to_numpy()),
            'tracked': bool(inside[-1]),
        })
    return pd.DataFrame(rows)


def _within(measured, setpoint, tolerance):
    return np.abs(measured - setpoint) <= tolerance * abs(setpoint)


def _settled_cycle(inside, cycles):
    """First cycle from which the measurement stays inside the band, or -1."""
    if not inside[-1]:
        return -1
    outside = np.flatnonzero(~inside)
    return int(cycles[0] if outside.size == 0 else cycles[outside[-1] + 1])


def settling_cycle(metrics, setpoint, after=0, wheel=0, tolerance=TOLERANCE):
    """First cycle >= `after` with the measured speed within tolerance of `setpoint`."""
    for m in metrics:
        if m.cycle >= after and abs(m.wheel_rpm[wheel] - setpoint) <= tolerance * abs(setpoint):
            return m.cycle
    return None
