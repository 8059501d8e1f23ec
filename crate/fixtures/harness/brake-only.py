"""Fixed-force braking test stub."""

from testbench import can_bus


def control_step():
    can_bus.send("BrakeCmd", force=80)
