"""
models -- Simulated physical process for the weeding robot.

Modules:
    plant   Wheel motor and steering stepper dynamics, Hall edges, actuator facades
"""
