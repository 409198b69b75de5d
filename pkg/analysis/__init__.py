"""
analysis -- Timing experiments over the simulated robot.

Modules:
    scenarios   Built-in scenarios 1-4 and the scenario file loader
    runner      End-to-end scenario runs, per-cycle metrics, CSV in/out
    report      Avg/Max timing table and set-point tracking checks
"""
