"""Camera pedestrian braking for the testbench ego vehicle."""

from testbench import can_bus, camera, vss

FULL_BRAKE = 100
CRUISE_SPEED = 25


def control_step():
    vss.set("Vehicle.ADAS.Camera.IsActive", True)
    frame = camera.capture()

    detected = camera.detect_pedestrian(frame)
    vss.set("Vehicle.ADAS.Camera.PedestrianDetected", detected)

    if detected:
        can_bus.send("BrakeCmd", force=FULL_BRAKE)
    else:
        vss.set("Vehicle.Speed.Target", CRUISE_SPEED)
