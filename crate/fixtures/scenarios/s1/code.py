"""Camera-only pedestrian handling for the testbench ego vehicle."""

from testbench import can_bus, camera, vss

CRUISE_PEDAL = 40


def control_step():
    vss.set("Vehicle.ADAS.Camera.IsActive", True)
    frame = camera.capture()

    detected = camera.detect_pedestrian(frame)
    vss.set("Vehicle.ADAS.Camera.PedestrianDetected", detected)

    can_bus.send("ThrottleCmd", pedal=CRUISE_PEDAL)
