"""Camera pedestrian braking for the testbench ego vehicle."""

from testbench import can_bus, camera, vss

FULL_BRAKE = 100


def control_step():
    vss.set("Vehicle.ADAS.Camera.IsActive", True)
    frame = camera.capture()

    can_bus.send("BrakeCmd", force=FULL_BRAKE)

    detected = camera.detect_pedestrian(frame)
    vss.set("Vehicle.ADAS.Camera.PedestrianDetected", detected)
