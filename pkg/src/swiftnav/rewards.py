"""Per-step reward tables for the two bundled scenarios."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

COLLISION_NONE = "none"
COLLISION_RECOVERABLE = "recoverable"
COLLISION_TERMINAL = "terminal"

ENDPOINT_NONE = "none"
ENDPOINT_NOVEL = "novel"
ENDPOINT_REVISIT = "revisit"


@dataclass(frozen=True)
class RewardTable:
    """Coefficients; ``None`` disables a row."""

    step_cost: float = -1.0
    progress_gain: float = 2.0
    goal_bonus: float = 200.0
    goal_radius: float = 2.0
    crash_recoverable: Optional[float] = None
    crash_terminal: float = -1000.0
    no_progress_penalty: Optional[float] = None
    no_progress_window: int = 50
    no_progress_displacement: float = 0.5
    line_departure_penalty: Optional[float] = None
    line_departure_threshold: float = 3.0
    proximity_gain: Optional[float] = None
    proximity_radius: float = 5.0
    switch_bonus: Optional[float] = None
    exit_zone_bonus: Optional[float] = None
    novelty_bonus: Optional[float] = None
    revisit_penalty: Optional[float] = None
    bypass_bonus: Optional[float] = None

    @property
    def collision_terminal(self) -> bool:
        """Any obstacle contact ends the episode when no recoverable row exists."""
        return self.crash_recoverable is None


TRAJ1 = RewardTable(
    step_cost=-1.0,
    progress_gain=2.0,
    goal_bonus=200.0,
    crash_terminal=-1000.0,
    line_departure_penalty=-50.0,
    bypass_bonus=100.0,
)

TRAJ2 = RewardTable(
    step_cost=-0.5,
    progress_gain=1.5,
    goal_bonus=3500.0,
    crash_recoverable=-200.0,
    crash_terminal=-1500.0,
    no_progress_penalty=-500.0,
    proximity_gain=1.2,
    proximity_radius=5.0,
    revisit_penalty=-10.0,
    switch_bonus=500.0,
    exit_zone_bonus=50.0,
    novelty_bonus=20.0,
)

PRESETS = {"traj1": TRAJ1, "traj2": TRAJ2}


def preset(name: str) -> RewardTable:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown reward preset {name!r}; choose from {sorted(PRESETS)}") from None


@dataclass(frozen=True)
class StepEvents:
    progress: float = 0.0  # d_prev - d_curr
    d_min: Optional[float] = None
    collision: str = COLLISION_NONE
    no_progress: bool = False
    line_departure: bool = False  # onset of a guidance-line excursion
    safe_switch: bool = False  # RL -> Travel exit eligible for the one-shot bonus
    bypass: bool = False  # RL -> Travel exit with a collision-free RL segment
    endpoint: str = ENDPOINT_NONE
    zone_exit: bool = False
    goal: bool = False


def reward_step(ev: StepEvents, table: RewardTable) -> float:
    r = table.step_cost + table.progress_gain * ev.progress
    if ev.goal:
        r += table.goal_bonus
    if ev.collision == COLLISION_TERMINAL:
        r += table.crash_terminal
    elif ev.collision == COLLISION_RECOVERABLE:
        r += table.crash_terminal if table.crash_recoverable is None else table.crash_recoverable
    if ev.no_progress and table.no_progress_penalty is not None:
        r += table.no_progress_penalty
    if ev.line_departure and table.line_departure_penalty is not None:
        r += table.line_departure_penalty
    if table.proximity_gain is not None and ev.d_min is not None and ev.d_min < table.proximity_radius:
        r -= table.proximity_gain * (table.proximity_radius - ev.d_min)
    if ev.safe_switch and table.switch_bonus is not None:
        r += table.switch_bonus
    if ev.bypass and table.bypass_bonus is not None:
        r += table.bypass_bonus
    if ev.zone_exit and table.exit_zone_bonus is not None:
        r += table.exit_zone_bonus
    if ev.endpoint == ENDPOINT_NOVEL and table.novelty_bonus is not None:
        r += table.novelty_bonus
    elif ev.endpoint == ENDPOINT_REVISIT and table.revisit_penalty is not None:
        r += table.revisit_penalty
    return r


def table_fields():
    return [f.name for f in fields(RewardTable)]
