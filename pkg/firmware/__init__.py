"""
firmware -- Weeding robot MCU control software, runnable on a host.

Modules:
    errors             Exception hierarchy (WeedbotError and friends)
    messages           Order / Telemetry model and the framed CRC-8 wire codec
    pipes              Latest-value connectors between sensors and controllers
    kernel             Virtual clock, timers and interrupt -> command dispatch
    calculations       Interchangeable calculations and their argument records
    sensors            Velocity, current and position measurement stacks
    wheel_control      Per-wheel PI strategies, behaviours and cycle sequence
    direction_control  Steering controller with enable and operation states
    io_sources         PC serial link, RC pulse buffers and reading modes
    main_control       Operation/mode state machines and the control cycle
    builders           Assembly of the whole system from the shared constants
"""
