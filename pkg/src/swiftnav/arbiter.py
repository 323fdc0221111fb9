"""Travel / RL / Landing mode arbitration with hysteresis, debounce and dwell time."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple


class Mode(str, enum.Enum):
    TRAVEL = "Travel"
    RL = "RL"
    LANDING = "Landing"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class ArbiterConfig:
    d_thresh: float = 8.0
    S_thresh: float = 0.6
    d_exit: float = 10.0
    S_exit: float = 0.7
    debounce_N: int = 3
    dwell_min: int = 20
    los_clearance: float = 0.5
    delta_in: float = 2.0
    delta_out: float = 3.0
    S_land: float = 0.5
    d_land: float = 1.0
    stability_enabled: bool = True
    force_rl: bool = False

    def __post_init__(self):
        if self.d_exit < self.d_thresh or self.S_exit < self.S_thresh:
            raise ValueError("exit thresholds must not be below entry thresholds")
        if self.debounce_N < 1 or self.dwell_min < 0:
            raise ValueError("debounce_N must be >= 1 and dwell_min >= 0")
        if not self.delta_out > self.delta_in:
            raise ValueError("delta_out must exceed delta_in")


@dataclass(frozen=True)
class RiskInputs:
    d_min: Optional[float]
    S_fuzzy: float
    dist_to_goal: float
    los_to_goal: bool


def landing_safe(d_min: Optional[float], S_fuzzy: float, cfg: ArbiterConfig) -> bool:
    return S_fuzzy > cfg.S_land and (d_min is None or d_min > cfg.d_land)


def desired_mode(inputs: RiskInputs, current: Mode, cfg: ArbiterConfig) -> Mode:
    """Mode the raw trigger logic asks for this step (before debounce and dwell).

    A missing ``d_min`` means nothing is within sensing range and counts as
    arbitrarily far. Priority: Landing, then RL entry, then RL exit.
    """
    d = float("inf") if inputs.d_min is None else inputs.d_min
    S = inputs.S_fuzzy
    safe_to_land = landing_safe(inputs.d_min, S, cfg)

    if current is Mode.LANDING:
        if not safe_to_land:
            return Mode.RL
        # hysteresis collapses onto the entry thresholds when stability logic is off
        delta_out = cfg.delta_out if cfg.stability_enabled else cfg.delta_in
        if inputs.dist_to_goal > delta_out:
            return Mode.RL if cfg.force_rl else Mode.TRAVEL
        return Mode.LANDING

    if inputs.dist_to_goal < cfg.delta_in and safe_to_land:
        return Mode.LANDING
    if cfg.force_rl:
        return Mode.RL
    if current is not Mode.RL:
        if d < cfg.d_thresh and S < cfg.S_thresh:
            return Mode.RL
        return current
    d_exit = cfg.d_exit if cfg.stability_enabled else cfg.d_thresh
    S_exit = cfg.S_exit if cfg.stability_enabled else cfg.S_thresh
    if S > S_exit and d > d_exit and inputs.los_to_goal:
        return Mode.TRAVEL
    return current


@dataclass(frozen=True)
class ArbiterState:
    mode: Mode = Mode.TRAVEL
    step: int = 0
    steps_in_mode: int = 0
    pending_mode: Optional[Mode] = None
    pending_count: int = 0
    line_stale: bool = True
    # switches as a cons chain (entry, parent) so committing one is O(1)
    log_chain: Optional[tuple] = None
    n_switches: int = 0

    @property
    def switch_log(self) -> Tuple[Tuple[int, Mode, Mode], ...]:
        out = []
        node = self.log_chain
        while node is not None:
            out.append(node[0])
            node = node[1]
        return tuple(reversed(out))


def initial_state(cfg: ArbiterConfig) -> ArbiterState:
    return ArbiterState(mode=Mode.RL if cfg.force_rl else Mode.TRAVEL)


def _switch(state: ArbiterState, to: Mode) -> ArbiterState:
    return replace(
        state,
        mode=to,
        steps_in_mode=0,
        pending_mode=None,
        pending_count=0,
        log_chain=((state.step, state.mode, to), state.log_chain),
        n_switches=state.n_switches + 1,
        line_stale=to in (Mode.TRAVEL, Mode.LANDING),
    )


def step_arbiter(state: ArbiterState, desired: Mode, cfg: ArbiterConfig) -> Tuple[ArbiterState, bool]:
    """Advance one control step and commit a switch if debounce and dwell allow it.

    A Landing -> RL request is a landing abort and skips the debounce count,
    but it still waits out the dwell time like any other switch.
    """
    state = replace(state, step=state.step + 1, steps_in_mode=state.steps_in_mode + 1)
    if desired is state.mode:
        return replace(state, pending_mode=None, pending_count=0), False

    if not cfg.stability_enabled:
        return _switch(state, desired), True

    if desired is state.pending_mode:
        count = min(state.pending_count + 1, cfg.debounce_N)
    else:
        count = 1
    state = replace(state, pending_mode=desired, pending_count=count)

    abort = state.mode is Mode.LANDING and desired is Mode.RL
    debounced = abort or count >= cfg.debounce_N
    if debounced and state.steps_in_mode >= cfg.dwell_min:
        return _switch(state, desired), True
    return state, False


def switch_count(state: ArbiterState) -> int:
    return state.n_switches


def switch_log_rows(state: ArbiterState) -> List[Tuple[int, str, str]]:
    return [(step, str(a), str(b)) for step, a, b in state.switch_log]
