"""Planar world: circular obstacles, range sensing and the vehicle integrator.

Coordinates are metres in a right-handed x/y plane; yaw is measured from +x
counter-clockwise and always stored wrapped to (-pi, pi].
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = a - TWO_PI * math.ceil((a - math.pi) / TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def vec2(x: float, y: float) -> np.ndarray:
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError(f"non-finite vector ({x}, {y})")
    return np.array([float(x), float(y)])


@dataclass(frozen=True)
class Obstacle:
    x: float
    y: float
    r: float

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError(f"obstacle radius must be positive, got {self.r}")
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("obstacle centre must be finite")


@dataclass(frozen=True)
class Bounds:
    xmin: float
    ymin: float
    xmax: float
    ymax: float

    def contains(self, p) -> bool:
        return self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax


class World:
    """Static obstacle field. Immutable after construction."""

    def __init__(
        self,
        bounds: Bounds,
        obstacles: Sequence[Obstacle] = (),
        start=(0.0, 0.0),
        goal=(1.0, 0.0),
        goal_altitude: float = 0.0,
        name: str = "",
        safety_radius: Optional[float] = None,
    ):
        self.bounds = bounds
        self.obstacles: Tuple[Obstacle, ...] = tuple(obstacles)
        self.start = vec2(*start)
        self.goal = vec2(*goal)
        self.goal_altitude = float(goal_altitude)
        self.name = name
        if self.obstacles:
            arr = np.array([(o.x, o.y, o.r) for o in self.obstacles], dtype=float)
        else:
            arr = np.zeros((0, 3))
        self.centers = arr[:, :2].copy()
        self.radii = arr[:, 2].copy()
        self.centers.setflags(write=False)
        self.radii.setflags(write=False)
        for label, p in (("start", self.start), ("goal", self.goal)):
            if not bounds.contains(p):
                raise ValueError(f"{label} {tuple(p)} lies outside bounds")
            if safety_radius is not None and collides(self, p, safety_radius):
                raise ValueError(f"{label} {tuple(p)} lies inside an inflated obstacle")

    def translated(self, dx: float, dy: float) -> "World":
        b = self.bounds
        return World(
            Bounds(b.xmin + dx, b.ymin + dy, b.xmax + dx, b.ymax + dy),
            [Obstacle(o.x + dx, o.y + dy, o.r) for o in self.obstacles],
            self.start + (dx, dy),
            self.goal + (dx, dy),
            self.goal_altitude,
            self.name,
        )

    def to_json(self) -> dict:
        b = self.bounds
        return {
            "bounds": {"xmin": b.xmin, "ymin": b.ymin, "xmax": b.xmax, "ymax": b.ymax},
            "start": [float(self.start[0]), float(self.start[1])],
            "goal": [float(self.goal[0]), float(self.goal[1])],
            "goal_altitude": self.goal_altitude,
            "obstacles": [{"x": o.x, "y": o.y, "r": o.r} for o in self.obstacles],
        }


def load_world(path, safety_radius: Optional[float] = None) -> World:
    path = Path(path)
    doc = json.loads(path.read_text())
    try:
        b = doc["bounds"]
        bounds = Bounds(float(b["xmin"]), float(b["ymin"]), float(b["xmax"]), float(b["ymax"]))
        obstacles = [Obstacle(float(o["x"]), float(o["y"]), float(o["r"])) for o in doc.get("obstacles", [])]
        return World(
            bounds,
            obstacles,
            doc["start"],
            doc["goal"],
            float(doc.get("goal_altitude", 0.0)),
            name=path.stem,
            safety_radius=safety_radius,
        )
    except KeyError as exc:
        raise ValueError(f"{path}: missing field {exc.args[0]!r}") from None


def bundled_world_path(name: str) -> Path:
    return Path(__file__).parent / "data" / f"{name}.json"


# ---------------------------------------------------------------------------
# Sensing
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SensorConfig:
    ray_count: int = 36
    max_range: float = 55.0

    def __post_init__(self):
        if self.ray_count < 4:
            raise ValueError("ray_count must be >= 4")
        if not self.max_range > 0:
            raise ValueError("max_range must be positive")

    @property
    def angular_offsets(self) -> np.ndarray:
        return np.arange(self.ray_count) * (TWO_PI / self.ray_count)


def _bounds_distance(bounds: Bounds, ox: float, oy: float, dx: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Distance from an interior point to the bounding box along each direction."""
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        tx = np.where(dx > 0, (bounds.xmax - ox) / dx, np.where(dx < 0, (bounds.xmin - ox) / dx, np.inf))
        ty = np.where(dy > 0, (bounds.ymax - oy) / dy, np.where(dy < 0, (bounds.ymin - oy) / dy, np.inf))
    return np.minimum(tx, ty)


def _cast(world: World, origin, headings: np.ndarray, max_range: float) -> np.ndarray:
    ox, oy = float(origin[0]), float(origin[1])
    headings = np.asarray(headings, dtype=float)
    if not world.bounds.contains((ox, oy)):
        return np.zeros_like(headings)
    dx, dy = np.cos(headings), np.sin(headings)
    best = np.minimum(_bounds_distance(world.bounds, ox, oy, dx, dy), max_range)
    if len(world.radii):
        # rays x obstacles
        rx = ox - world.centers[:, 0]
        ry = oy - world.centers[:, 1]
        c = rx * rx + ry * ry - world.radii**2
        if np.any(c <= 0.0):
            return np.zeros_like(headings)
        b = np.outer(dx, rx) + np.outer(dy, ry)
        disc = b * b - c
        hit = (disc >= 0.0) & (b < 0.0)
        t = np.where(hit, -b - np.sqrt(np.where(hit, disc, 0.0)), np.inf)
        best = np.minimum(best, t.min(axis=1))
    return np.maximum(best, 0.0)


def raycast(world: World, origin, heading: float, max_range: float) -> float:
    """Range to the first obstacle or boundary along ``heading``, clamped to ``max_range``."""
    if not max_range > 0:
        raise ValueError("max_range must be positive")
    return float(_cast(world, origin, np.array([heading]), max_range)[0])


def scan(world: World, state: "VehicleState", cfg: SensorConfig) -> List[Tuple[float, float]]:
    """Body-relative radial scan; angle 0 points along the vehicle heading."""
    offsets = cfg.angular_offsets
    ranges = _cast(world, state.position, state.yaw + offsets, cfg.max_range)
    return list(zip(offsets.tolist(), ranges.tolist()))


def surface_distances(world: World, position) -> np.ndarray:
    if not len(world.radii):
        return np.zeros(0)
    d = np.hypot(world.centers[:, 0] - position[0], world.centers[:, 1] - position[1]) - world.radii
    return np.maximum(d, 0.0)


def min_range(world: World, position, R: float) -> Optional[float]:
    """Closest obstacle-surface distance among obstacles whose surface is within ``R``."""
    d = surface_distances(world, position)
    d = d[d <= R]
    if d.size == 0:
        return None
    return float(d.min())


def segment_point_distance(a, b, p) -> float:
    ax, ay = a[0], a[1]
    abx, aby = b[0] - ax, b[1] - ay
    L2 = abx * abx + aby * aby
    if L2 == 0.0:
        return math.hypot(p[0] - ax, p[1] - ay)
    t = ((p[0] - ax) * abx + (p[1] - ay) * aby) / L2
    t = min(1.0, max(0.0, t))
    return math.hypot(p[0] - (ax + t * abx), p[1] - (ay + t * aby))


def line_of_sight(world: World, a, b, clearance: float) -> bool:
    """True iff the segment a-b stays at least ``clearance`` from every obstacle surface."""
    if clearance < 0:
        raise ValueError("clearance must be non-negative")
    if not len(world.radii):
        return True
    a = np.asarray(a, dtype=float)
    ab = np.asarray(b, dtype=float) - a
    L2 = float(ab @ ab)
    rel = world.centers - a
    if L2 == 0.0:
        t = np.zeros(len(rel))
    else:
        t = np.clip(rel @ ab / L2, 0.0, 1.0)
    closest = a + t[:, None] * ab
    dist = np.hypot(*(world.centers - closest).T)
    return bool(np.all(dist - world.radii >= clearance))


def collides(world: World, position, safety_radius: float) -> bool:
    if safety_radius < 0:
        raise ValueError("safety_radius must be non-negative")
    if not world.bounds.contains(position):
        return True
    if not len(world.radii):
        return False
    raw =np.hypot(world.centers[:, 0] - position[0], world.centers[:, 1] - position[1]) - world.radii
    return bool(np.any(raw < safety_radius))


# ---------------------------------------------------------------------------
# Vehicle
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KinematicLimits:
    v_max: float = 3.0
    yaw_rate_max: float = 1.5
    vz_max: float = 1.0


@dataclass(frozen=True)
class VehicleState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(2))
    z: float = 0.0
    yaw: float = 0.0
    speed: float = 0.0
    yaw_rate: float = 0.0
    vertical_rate: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "position", vec2(*self.position))
        object.__setattr__(self, "yaw", wrap_angle(float(self.yaw)))

    @property
    def velocity(self) -> np.ndarray:
        return self.speed * np.array([math.cos(self.yaw), math.sin(self.yaw)])


def step_kinematics(state: VehicleState, cmd, dt: float, limits: KinematicLimits = KinematicLimits()) -> VehicleState:
    """Unicycle step: rotate first, then advance along the new heading."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    v, w, vz = cmd
    v = min(max(float(v), 0.0), limits.v_max)
    w = min(max(float(w), -limits.yaw_rate_max), limits.yaw_rate_max)
    vz = min(max(float(vz), -limits.vz_max), limits.vz_max)
    yaw = wrap_angle(state.yaw + w * dt)
    pos = state.position + v * dt * np.array([math.cos(yaw), math.sin(yaw)])
    return replace(
        state,
        position=pos,
        z=state.z + vz * dt,
        yaw=yaw,
        speed=v,
        yaw_rate=w,
        vertical_rate=vz,
    )
