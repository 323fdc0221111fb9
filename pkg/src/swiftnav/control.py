"""Guidance-line travel controller and the final-approach landing controller.

Both return ``(speed, yaw_rate, vertical_rate)`` commands for
:func:`swiftnav.world.step_kinematics`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .world import VehicleState, wrap_angle

EPS_VERTICAL = 1e-6

Command = Tuple[float, float, float]


@dataclass(frozen=True)
class GuidanceLine:
    anchor: np.ndarray
    goal: np.ndarray
    heading: float
    slope: Optional[float]
    intercept: Optional[float]
    length: float

    @property
    def vertical(self) -> bool:
        return self.slope is None

    @property
    def tangent(self) -> np.ndarray:
        return np.array([math.cos(self.heading), math.sin(self.heading)])

    @property
    def normal(self) -> np.ndarray:
        return np.array([-math.sin(self.heading), math.cos(self.heading)])


def make_guidance_line(p_d, p_g, eps_vertical: float = EPS_VERTICAL) -> GuidanceLine:
    """Freeze the straight line from the Travel-entry point ``p_d`` to the goal."""
    p_d = np.array(p_d, dtype=float)
    p_g = np.array(p_g, dtype=float)
    dx, dy = p_g - p_d
    if dx == 0.0 and dy == 0.0:
        raise ValueError("degenerate line")
    heading = math.atan2(dy, dx)
    if abs(dx) > eps_vertical:
        k = dy / dx
        b = p_d[1] - k * p_d[0]
    else:
        k = b = None
    return GuidanceLine(p_d, p_g, heading, k, b, math.hypot(dx, dy))


def travel_errors(line: GuidanceLine, position, yaw: float) -> Tuple[float, float, float]:
    """Signed cross-track error (left positive), wrapped heading error, along-line progress."""
    rel = np.asarray(position, dtype=float) - line.anchor
    c, s = math.cos(line.heading), math.sin(line.heading)
    e_perp = -s * rel[0] + c * rel[1]
    progress = c * rel[0] + s * rel[1]
    return float(e_perp), wrap_angle(yaw - line.heading), float(progress)


@dataclass(frozen=True)
class TravelGains:
    k_s: float = 1.0
    k_psi: float = 1.5
    k_y: float = 0.6
    eps_speed: float = 0.1
    v_cruise: float = 2.0
    yaw_rate_max: float = 1.5
    law: str = "pd"  # "pd" or "stanley"

    def __post_init__(self):
        for name in ("k_s", "k_psi", "k_y", "eps_speed", "v_cruise", "yaw_rate_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.law not in ("pd", "stanley"):
            raise ValueError(f"unknown steering law {self.law!r}")


def _sat(x: float, lim: float) -> float:
    return min(max(x, -lim), lim)


def travel_command(errors, v: float, gains: TravelGains = TravelGains()) -> Command:
    e_perp, e_psi = errors[0], errors[1]
    if gains.law == "stanley":
        delta = e_psi + math.atan(gains.k_s * e_perp / (v + gains.eps_speed))
        u = gains.k_psi * delta
    else:
        u = gains.k_psi * e_psi + gains.k_y * e_perp
    # positive e_perp is left of the line, so the correction turns right
    return gains.v_cruise, -_sat(u, gains.yaw_rate_max), 0.0


@dataclass(frozen=True)
class LandingConfig:
    delta_in: float = 2.0
    delta_out: float = 3.0
    S_land: float = 0.5
    d_land: float = 1.0
    k_v: float = 0.8
    v_min: float = 0.2
    v_max: float = 1.5
    k_perp: float = 0.8
    k_z: float = 0.5
    vz_max: float = 0.5
    r_desc: float = 1.5
    psi_th: float = 0.5
    r_tol: float = 0.3
    h_tol: float = 0.1
    v_tol: float = 0.1
    psi_tol: float = 0.3
    T_settle: float = 1.0
    k_yaw: float = 1.5
    yaw_rate_max: float = 1.5

    def __post_init__(self):
        if not self.delta_out > self.delta_in:
            raise ValueError("delta_out must exceed delta_in")
        if not self.v_min <= self.v_max:
            raise ValueError("v_min must not exceed v_max")
        for name in ("r_tol", "h_tol", "v_tol", "psi_tol", "k_v", "k_z", "vz_max"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def capture_radius(self) -> float:
        # inside this radius the approach stops so the speed tolerance can be met
        return 0.5 * self.r_tol


def approach_speed(distance: float, cfg: LandingConfig) -> float:
    return min(max(cfg.k_v * distance, cfg.v_min), cfg.v_max)


def descent_rate(z: float, z_g: float, cfg: LandingConfig) -> float:
    return -min(max(cfg.k_z * (z - z_g), 0.0), cfg.vz_max)


def landing_command(
    state: VehicleState,
    goal,
    z_g: float,
    line: GuidanceLine,
    cfg: LandingConfig = LandingConfig(),
    hold_altitude: bool = False,
) -> Command:
    """Final approach: distance-scheduled closing speed, lateral pull onto the goal line,
    and a rate-limited descent once close and aligned.

    ``hold_altitude`` pauses the descent (landing safety currently violated).
    """
    e_p = np.asarray(goal, dtype=float) - state.position
    dist = float(math.hypot(*e_p))
    e_perp, e_psi, _ = travel_errors(line, state.position, state.yaw)

    if dist < cfg.capture_radius:
        speed, yaw_rate = 0.0, 0.0
    else:
        t_hat = e_p / dist
        v_par = approach_speed(dist, cfg)
        v_des = v_par * t_hat - cfg.k_perp * e_perp * line.normal
        desired_yaw = math.atan2(v_des[1], v_des[0])
        heading_err = wrap_angle(state.yaw - desired_yaw)
        yaw_rate = -_sat(cfg.k_yaw * heading_err, cfg.yaw_rate_max)
        # do not drive off while pointing away from the approach direction
        speed = v_par * max(0.0, math.cos(heading_err))

    vz = 0.0
    if not hold_altitude and dist < cfg.r_desc and abs(e_psi) < cfg.psi_th:
        vz = descent_rate(state.z, z_g, cfg)
    return speed, yaw_rate, vz


def touchdown_conditions(state: VehicleState, goal, z_g: float, line: GuidanceLine, cfg: LandingConfig) -> bool:
    """Instantaneous touchdown tolerances (no dwell)."""
    dist = math.hypot(*(np.asarray(goal, dtype=float) - state.position))
    e_psi = wrap_angle(state.yaw - line.heading)
    return (
        dist < cfg.r_tol
        and abs(state.z - z_g) < cfg.h_tol
        and abs(state.speed) < cfg.v_tol
        and abs(e_psi) < cfg.psi_tol
    )


def touchdown_met(
    state: VehicleState, goal, z_g: float, cfg: LandingConfig, settle_clock: float, line: Optional[GuidanceLine] = None
) -> bool:
    """Tolerances hold now and have held for ``settle_clock`` >= T_settle seconds.

    The caller owns the settle clock: it accumulates dt while
    :func:`touchdown_conditions` holds and resets to zero otherwise.
    """
    if settle_clock < 0:
        raise ValueError("settle_clock must be non-negative")
    if line is None:
        line = GuidanceLine(state.position, np.asarray(goal, dtype=float), state.yaw, None, None, 0.0)
    return touchdown_conditions(state, goal, z_g, line, cfg) and settle_clock >= cfg.T_settle
