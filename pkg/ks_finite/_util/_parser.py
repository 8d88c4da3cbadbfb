import math
import re

ANGLE_UNIT_TO_RADIANS = {
    "rad": 1.0,
    "mrad": 1e-3,
    "deg": math.pi / 180,
}


def parse_angle(angle):
    """Convert an angle to radians.

    Numbers are taken as radians, strings may carry one of the units in
    `ANGLE_UNIT_TO_RADIANS`, e.g. "0.5deg" or "20mrad".
    """
    if isinstance(angle, bool):
        raise RuntimeError("Invalid angle format")

    if isinstance(angle, (int, float)):
        radians = float(angle)
    else:
        if not angle:
            raise RuntimeError("Angle is an empty string")

        angle_pattern = (
            r"\s*(?P<value>(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)"
            r"\s*(?P<unit>rad|mrad|deg)?\s*"
        )

        match = re.fullmatch(angle_pattern, angle)
        if match is None:
            raise RuntimeError("Invalid angle format")

        unit = match["unit"] or "rad"
        radians = float(match["value"]) * ANGLE_UNIT_TO_RADIANS[unit]

    if not math.isfinite(radians) or radians < 0:
        raise RuntimeError("Angle must be finite and non-negative")

    return radians
