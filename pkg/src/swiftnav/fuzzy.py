"""Directional fuzzy safety score computed from a radial range scan."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Tuple


@dataclass(frozen=True)
class FuzzyConfig:
    unsafe_range: float = 2.0
    safe_range: float = 10.0

    def __post_init__(self):
        if not self.safe_range > self.unsafe_range >= 0:
            raise ValueError("need safe_range > unsafe_range >= 0")


DEFAULT_FUZZY = FuzzyConfig()


def membership(d: float, cfg: FuzzyConfig = DEFAULT_FUZZY) -> float:
    """Linear distance-to-safety ramp: 0 at or below unsafe_range, 1 at or above safe_range."""
    if d >= cfg.safe_range:
        return 1.0
    if d <= cfg.unsafe_range:
        return 0.0
    return (d - cfg.unsafe_range) / (cfg.safe_range - cfg.unsafe_range)


def weight(theta_deg: float) -> float:
    """Directional importance of a body-relative bearing in degrees.

    Front [330, 360] u [0, 30] -> 1.0, rear [150, 210] -> 0.2, everything
    else (the open side intervals) -> 0.5.
    """
    t = theta_deg % 360.0
    if t <= 30.0 or t >= 330.0:
        return 1.0
    if 150.0 <= t <= 210.0:
        return 0.2
    return 0.5


def bearing_degrees(theta_rad: float) -> float:
    # rounding keeps exact sector boundaries (30, 150, ...) from drifting by one ulp
    deg = round(math.degrees(theta_rad) % 360.0, 9)
    return 0.0 if deg >= 360.0 else deg


def safety_score(scan: Iterable[Tuple[float, float]], cfg: FuzzyConfig = DEFAULT_FUZZY) -> float:
    """Weighted mean of per-ray memberships; ``scan`` holds (bearing_rad, range) pairs."""
    num = 0.0
    den = 0.0
    for theta, d in scan:
        w = weight(bearing_degrees(theta))
        num += membership(d, cfg) * w
        den += w
    if den == 0.0:
        raise ValueError("empty scan")
    return min(1.0, max(0.0, num / den))
