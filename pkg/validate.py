"""Quick validation of the simulator: codec, the four scenarios and level tracking."""
import sys
sys.path.insert(0, '.')

from firmware.messages import Order, decode_frames, encode_frame
frame = encode_frame(Order.stop())
print(f"STOP frame: {frame.hex(' ').upper()}")
assert decode_frames(frame) == [Order.stop()]
print('Codec OK')

from analysis.scenarios import load_scenario
from analysis.runner import run_scenario
from analysis.report import format_summary, level_tracking

results = [run_scenario(load_scenario(sid), mode='det', timing='wall') for sid in ('1', '2', '3', '4')]
print(format_summary([r.summary for r in results]))

for result in (results[0], results[2]):
    levels = level_tracking(result.metrics)
    print(f"Scenario {result.scenario.id}: {int(levels['tracked'].sum())}/{len(levels)} levels tracked")
    for _, r in levels.iterrows():
        print(f"  - {r['setpoint']:6.1f} rpm: final {r['final_rpm']:6.1f}, settled at cycle {r['settled_cycle']}")

threaded = run_scenario(load_scenario('2', cycles=200), mode='threaded')
print(f"Threaded run: {threaded.summary.cycles} cycles, {threaded.summary.errors} errors")

failed = [r.summary.scenario_id for r in results if not r.summary.ok]
if failed:
    print(f"\nBUDGET OR ERROR CHECK FAILED: scenarios {failed}")
    sys.exit(1)
print("\nALL SCENARIOS VALIDATED SUCCESSFULLY")
