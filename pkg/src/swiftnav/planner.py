"""RL-mode waypoint pipeline: action decoding, waypoint-space exploration,
trajectory checking/repair and the free-sector escape line."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .world import TWO_PI, VehicleState, World, wrap_angle

N_WAYPOINTS = 5
ACTION_DIM = 2 * N_WAYPOINTS
ACTION_BOUND = 3.0
MIN_SEGMENT = 1e-3
STUB_SPACING = 0.5


@dataclass(frozen=True)
class WaypointPolyline:
    origin: np.ndarray
    waypoints: np.ndarray  # (5, 2) world frame
    provenance: str = "actor"  # actor | random | modified | escape

    def __post_init__(self):
        w = np.asarray(self.waypoints, dtype=float)
        if w.shape != (N_WAYPOINTS, 2):
            raise ValueError(f"expected {N_WAYPOINTS} waypoints, got shape {w.shape}")
        object.__setattr__(self, "waypoints", w)
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=float))

    @property
    def points(self) -> np.ndarray:
        """Origin followed by the five waypoints."""
        return np.vstack([self.origin, self.waypoints])

    @property
    def length(self) -> float:
        return float(np.sum(np.hypot(*np.diff(self.points, axis=0).T)))

    def translated(self, d) -> "WaypointPolyline":
        d = np.asarray(d, dtype=float)
        return replace(self, origin=self.origin + d, waypoints=self.waypoints + d)


def _rot(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def decode_action(a, state: VehicleState) -> WaypointPolyline:
    """Chain five body-frame (x, y) offsets from the vehicle position.

    ``a`` is read row-major as (x1, y1, ..., x5, y5) and clamped to +-3.
    An offset shorter than 1 mm is replaced by a 0.5 m step continuing the
    previous direction (vehicle heading for the first), so an all-zero
    action becomes a straight forward stub.
    """
    a = np.clip(np.asarray(a, dtype=float).reshape(N_WAYPOINTS, 2), -ACTION_BOUND, ACTION_BOUND)
    R = _rot(state.yaw)
    pts = [state.position.copy()]
    direction = np.array([math.cos(state.yaw), math.sin(state.yaw)])
    for off in a:
        step = R @ off
        n = math.hypot(*step)
        if n <= MIN_SEGMENT:
            step = STUB_SPACING * direction
        else:
            direction = step / n
        pts.append(pts[-1] + step)
    return WaypointPolyline(pts[0], np.array(pts[1:]), "actor")


def encode_polyline(poly: WaypointPolyline, state: VehicleState) -> np.ndarray:
    """Inverse of :func:`decode_action` (clipped to the action box)."""
    offsets = np.diff(poly.points, axis=0) @ _rot(state.yaw)  # row-vector form of R^T
    return np.clip(offsets.reshape(-1), -ACTION_BOUND, ACTION_BOUND)


# ---------------------------------------------------------------------------
# Exploration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExplorationSchedule:
    eps0: float = 1.0
    decay: float = 0.995
    eps_min: float = 0.05
    rho: float = 1.0
    episode_index: int = 0
    heading_scale: float = math.pi / 2
    max_spacing: float = 3.0
    min_spacing: float = 1.0

    def __post_init__(self):
        if not 0 < self.decay < 1:
            raise ValueError("decay must lie in (0, 1)")
        if not 0 <= self.eps_min <= self.eps0:
            raise ValueError("need 0 <= eps_min <= eps0")

    @property
    def epsilon(self) -> float:
        return epsilon_at(self, self.episode_index)


def epsilon_at(sched: ExplorationSchedule, t: int) -> float:
    return max(sched.eps_min, sched.eps0 * sched.decay**t)


def random_proposal(origin, goal, u: np.ndarray, sched: ExplorationSchedule) -> WaypointPolyline:
    """Synthesize a detour polyline from a parameter vector in [-1, 1]^d.

    u[0] picks detour side and angle off the goal bearing, u[1] how quickly
    the path bends back toward the goal, u[2] the waypoint spacing.
    """
    origin = np.asarray(origin, dtype=float)
    to_goal = np.asarray(goal, dtype=float) - origin
    base = math.atan2(to_goal[1], to_goal[0])
    detour = float(u[0]) * sched.heading_scale
    blend = 0.5 * (float(u[1]) + 1.0)
    spacing = sched.min_spacing + 0.5 * (float(u[2]) + 1.0) * (sched.max_spacing - sched.min_spacing)
    pts = [origin]
    for k in range(N_WAYPOINTS):
        h = base + detour * (1.0 - blend * k / (N_WAYPOINTS - 1))
        pts.append(pts[-1] + spacing * np.array([math.cos(h), math.sin(h)]))
    return WaypointPolyline(origin, np.array(pts[1:]), "random")


def explore(
    poly: WaypointPolyline,
    sched: ExplorationSchedule,
    rng: np.random.Generator,
    goal=None,
    branch: Optional[str] = None,
) -> WaypointPolyline:
    """Geometry-space epsilon exploration.

    With probability epsilon the proposal is replaced by a parametric random
    detour; otherwise each waypoint moves by epsilon * dw with |dw| <= rho.
    ``branch`` ("random" / "perturb") forces a branch; the draws made are the
    same either way so a seeded stream stays aligned.
    """
    eps = sched.epsilon
    coin = rng.random()
    u = rng.uniform(-1.0, 1.0, size=ACTION_DIM)
    radius = sched.rho * np.sqrt(rng.random(N_WAYPOINTS))
    angle = rng.uniform(0.0, TWO_PI, size=N_WAYPOINTS)
    if eps == 0.0 and branch is None:
        return poly
    take_random = coin < eps if branch is None else branch == "random"
    if take_random:
        target = poly.waypoints[-1] if goal is None else goal
        return random_proposal(poly.origin, target, u, sched)
    dw = np.column_stack([radius * np.cos(angle), radius * np.sin(angle)])
    return replace(poly, waypoints=poly.waypoints + eps * dw)


# ---------------------------------------------------------------------------
# Checker
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckerConfig:
    clearance_margin: float = 1.0
    sample_step: float = 0.25
    w_goal: float = 1.0
    w_clear: float = 0.5
    w_curv: float = 0.2
    max_modify_iters: int = 10
    clear_cap: float = 5.0
    enabled: bool = True
    free_sector_deg: float = 60.0
    free_range: float = 10.0

    def __post_init__(self):
        if not self.clearance_margin > 0:
            raise ValueError("clearance_margin must be positive")
        if not 0 < self.sample_step < self.clearance_margin:
            raise ValueError("sample_step must lie in (0, clearance_margin)")


def sample_polyline(points: np.ndarray, step: float) -> np.ndarray:
    """Points every ``step`` metres along each segment, segment endpoints included."""
    out = [points[:1]]
    for a, b in zip(points[:-1], points[1:]):
        n = max(1, int(math.ceil(math.hypot(*(b - a)) / step)))
        t = np.arange(1, n + 1)[:, None] / n
        out.append(a + t * (b - a))
    return np.vstack(out)


def clearance_field(world: World, pts: np.ndarray) -> np.ndarray:
    """Signed clearance of each point to the nearest obstacle surface or boundary wall."""
    b = world.bounds
    walls = np.minimum.reduce([pts[:, 0] - b.xmin, b.xmax - pts[:, 0], pts[:, 1] - b.ymin, b.ymax - pts[:, 1]])
    if not len(world.radii):
        return walls
    d = np.hypot(pts[:, None, 0] - world.centers[None, :, 0], pts[:, None, 1] - world.centers[None, :, 1])
    return np.minimum(walls, (d - world.radii[None, :]).min(axis=1))


def _required(origin_clear: float, pts: np.ndarray, origin: np.ndarray, margin: float) -> np.ndarray:
    # a vehicle already inside the margin may leave it along a cone, never deeper
    if origin_clear >= margin:
        return np.full(len(pts), margin)
    return np.minimum(margin, origin_clear + np.hypot(*(pts - origin).T))


def turning_total(points: np.ndarray) -> float:
    seg = np.diff(points, axis=0)
    h = np.arctan2(seg[:, 1], seg[:, 0])
    return float(sum(abs(wrap_angle(b - a)) for a, b in zip(h[:-1], h[1:])))


def polyline_clearance(poly: WaypointPolyline, world: World, step: float) -> float:
    return float(clearance_field(world, sample_polyline(poly.points, step)).min())


def score_polyline(poly: WaypointPolyline, world: World, goal, cfg: CheckerConfig) -> float:
    goal = np.asarray(goal, dtype=float)
    clear = polyline_clearance(poly, world, cfg.sample_step)
    if clear < 0.0:
        return -math.inf
    progress = math.hypot(*(poly.origin - goal)) - math.hypot(*(poly.waypoints[-1] - goal))
    return cfg.w_goal * progress + cfg.w_clear * min(clear, cfg.clear_cap) - cfg.w_curv * turning_total(poly.points)


def _violations(poly: WaypointPolyline, world: World, cfg: CheckerConfig, origin_clear: float):
    """Per-segment worst violating sample: list of (segment_index, point, deficit)."""
    pts = poly.points
    out = []
    for i, (a, b) in enumerate(zip(pts[:-1], pts[1:])):
        s = sample_polyline(np.vstack([a, b]), cfg.sample_step)
        c = clearance_field(world, s)
        deficit = _required(origin_clear, s, poly.origin, cfg.clearance_margin) - c
        j = int(np.argmax(deficit))
        if deficit[j] > 0:
            out.append((i, s[j], float(deficit[j])))
    return out


def _push_direction(world: World, p: np.ndarray, seg_dir: np.ndarray) -> np.ndarray:
    """Outward surface normal at ``p`` from its nearest obstacle (or wall)."""
    b = world.bounds
    walls = [
        (p[0] - b.xmin, np.array([1.0, 0.0])),
        (b.xmax - p[0], np.array([-1.0, 0.0])),
        (p[1] - b.ymin, np.array([0.0, 1.0])),
        (b.ymax - p[1], np.array([0.0, -1.0])),
    ]
    best_d, best_n = min(walls, key=lambda w: w[0])
    if len(world.radii):
        rel = p - world.centers
        dist = np.hypot(rel[:, 0], rel[:, 1])
        k = int(np.argmin(dist - world.radii))
        if dist[k] - world.radii[k] < best_d:
            if dist[k] > 1e-9:
                return rel[k] / dist[k]
            return np.array([-seg_dir[1], seg_dir[0]])
    return best_n


def modify_polyline(poly: WaypointPolyline, world: World, cfg: CheckerConfig) -> WaypointPolyline:
    """Push offending waypoints along the local surface normal until the margin holds."""
    origin_clear = float(clearance_field(world, poly.origin[None, :])[0])
    pts = poly.points.copy()
    for _ in range(cfg.max_modify_iters):
        cur = WaypointPolyline(pts[0], pts[1:], "modified")
        viol = _violations(cur, world, cfg, origin_clear)
        if not viol:
            break
        shift = np.zeros_like(pts)
        for i, p, deficit in viol:
            seg = pts[i + 1] - pts[i]
            n = math.hypot(*seg)
            seg_dir = seg / n if n > 0 else np.array([1.0, 0.0])
            push = _push_direction(world, p, seg_dir) * (deficit + 0.1 * cfg.clearance_margin)
            # both endpoints of an offending segment move; the origin is pinned
            for k in (i, i + 1):
                if k > 0 and np.linalg.norm(push) > np.linalg.norm(shift[k]):
                    shift[k] = push
        pts = pts + shift
    return WaypointPolyline(pts[0], pts[1:], "modified")


def _feasible(poly: WaypointPolyline, world: World, cfg: CheckerConfig, origin_clear: float) -> bool:
    if np.any(np.hypot(*np.diff(poly.points, axis=0).T) <= MIN_SEGMENT):
        return False
    return not _violations(poly, world, cfg, origin_clear)


def check_and_score(
    poly: WaypointPolyline, world: World, goal, cfg: CheckerConfig
) -> Tuple[WaypointPolyline, float, str]:
    """Keep, repair or reject a candidate polyline.

    A candidate that breaks the clearance margin scores -inf; the better of
    {keep, modify} is returned, and "reject" when neither is feasible.
    """
    if not cfg.enabled:
        return poly, score_polyline(poly, world, goal, cfg), "keep"
    origin_clear = float(clearance_field(world, poly.origin[None, :])[0])
    keep_score = score_polyline(poly, world, goal, cfg) if _feasible(poly, world, cfg, origin_clear) else -math.inf
    candidates = [(keep_score, 0, poly, "keep")]
    if keep_score == -math.inf:
        mod = modify_polyline(poly, world, cfg)
        mod_score = score_polyline(mod, world, goal, cfg) if _feasible(mod, world, cfg, origin_clear) else -math.inf
        candidates.append((mod_score, 1, mod, "modify"))
    best_score, _, best, verdict = max(candidates, key=lambda c: (c[0], -c[1]))
    if best_score == -math.inf:
        return poly, -math.inf, "reject"
    return best, best_score, verdict


# ---------------------------------------------------------------------------
# Escape line
# ---------------------------------------------------------------------------


def _free_runs(free: np.ndarray) -> List[Tuple[int, int]]:
    """Maximal circular runs of True as (start_index, length)."""
    n = len(free)
    if free.all():
        return [(0, n)]
    start = int(np.argmin(free))  # a blocked ray, so runs never wrap past it
    runs = []
    i = 0
    while i < n:
        k = (start + i) % n
        if free[k]:
            j = i
            while j < n and free[(start + j) % n]:
                j += 1
            runs.append((k, j - i))
            i = j
        else:
            i += 1
    return runs


def escape_line(
    state: VehicleState,
    scan: Sequence[Tuple[float, float]],
    goal,
    cfg: CheckerConfig = CheckerConfig(),
    max_range: float = 55.0,
) -> Optional[WaypointPolyline]:
    """Straight 5-point line along the bisector of the widest free sector.

    A ray is free when its range reaches ``min(max_range, cfg.free_range)``.
    Sectors must span at least ``cfg.free_sector_deg``; equal-width sectors are
    resolved toward the goal bearing, and a fully free scan heads at the goal.
    """
    if not scan:
        raise ValueError("empty scan")
    theta = np.array([t for t, _ in scan])
    d = np.array([r for _, r in scan])
    n = len(theta)
    spacing = TWO_PI / n
    free = d >= min(max_range, cfg.free_range) - 1e-9
    goal = np.asarray(goal, dtype=float)
    to_goal = goal - state.position
    dist_goal = math.hypot(*to_goal)
    goal_bearing = wrap_angle(math.atan2(to_goal[1], to_goal[0]) - state.yaw)

    runs = _free_runs(free)
    if runs and runs[0][1] == n:
        body_dir = goal_bearing
    else:
        best = None
        for k, length in runs:
            span = (length - 1) * spacing
            if span < math.radians(cfg.free_sector_deg) - 1e-9:
                continue
            bis = wrap_angle(theta[k] + 0.5 * span)
            key = (length, -abs(wrap_angle(bis - goal_bearing)))
            if best is None or key > best[0]:
                best = (key, bis)
        if best is None:
            return None
        body_dir = best[1]
    length = min(0.5 * max_range, dist_goal)
    if length <= MIN_SEGMENT * N_WAYPOINTS:
        return None
    heading = state.yaw + body_dir
    u = np.array([math.cos(heading), math.sin(heading)])
    steps = (np.arange(1, N_WAYPOINTS + 1) * (length / N_WAYPOINTS))[:, None]
    return WaypointPolyline(state.position.copy(), state.position + steps * u, "escape")
