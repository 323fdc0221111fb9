"""The navigation MDP: state encoding, the closed-loop episode and the training loop."""
from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from . import arbiter as arb
from .arbiter import ArbiterConfig, Mode, RiskInputs
from .control import (
    GuidanceLine,
    LandingConfig,
    TravelGains,
    landing_command,
    make_guidance_line,
    touchdown_conditions,
    travel_command,
    travel_errors,
)
from .fuzzy import FuzzyConfig, safety_score
from .planner import (
    CheckerConfig,
    ExplorationSchedule,
    WaypointPolyline,
    check_and_score,
    decode_action,
    encode_polyline,
    escape_line,
    explore,
)
from .replay import PERBuffer, Transition
from .rewards import (
    COLLISION_NONE,
    COLLISION_RECOVERABLE,
    COLLISION_TERMINAL,
    ENDPOINT_NONE,
    ENDPOINT_NOVEL,
    ENDPOINT_REVISIT,
    RewardTable,
    StepEvents,
    reward_step,
)
from .td3 import TD3Agent
from .world import KinematicLimits, SensorConfig, VehicleState, World, collides, line_of_sight, min_range, scan, step_kinematics

log = logging.getLogger(__name__)

STATE_DIM = 72
ACTION_DIM = 10
N_CONTEXT = 20
INTRINSIC_DIM = 12


@dataclass(frozen=True)
class EnvConfig:
    dt: float = 0.1
    safety_radius: float = 0.5
    start_altitude: float = 2.0
    step_limit: int = 2000
    pad_range: float = 55.0
    rl_speed: float = 1.0
    waypoint_tolerance: float = 0.3
    polyline_step_cap: int = 150
    hold_steps: int = 10
    revisit_radius: float = 1.0
    revisit_memory: int = 10
    warmup: int = 128
    learn_every: int = 5  # RL control steps per TD3 update
    beta_horizon: int = 200_000
    save_trajectory_every: int = 25


# ---------------------------------------------------------------------------
# State
# ---------------------------------------------------------------------------


def encode_state(world: World, state: VehicleState, max_range: float = 55.0, pad_range: float = 55.0) -> np.ndarray:
    """12 intrinsics (roll/pitch terms zero) followed by 20 nearest-obstacle
    (dx, dy, distance) triples in world axes, ascending by centre distance."""
    v = state.velocity
    intr = [
        state.position[0], state.position[1], state.z,
        0.0, 0.0, state.yaw,
        0.0, 0.0, state.yaw_rate,
        v[0], v[1], state.vertical_rate,
    ]
    ctx = np.tile([0.0, 0.0, pad_range], N_CONTEXT)
    if len(world.radii):
        rel = world.centers - state.position
        d = np.hypot(rel[:, 0], rel[:, 1])
        keep = np.flatnonzero(d <= max_range)
        order = keep[np.argsort(d[keep], kind="stable")][:N_CONTEXT]
        for j, k in enumerate(order):
            ctx[3 * j : 3 * j + 3] = (rel[k, 0], rel[k, 1], d[k])
    return np.concatenate([np.asarray(intr, dtype=float), ctx])


def state_scale(max_range: float = 55.0) -> np.ndarray:
    intr = [50.0, 50.0, 10.0, 1.0, 1.0, math.pi, 1.0, 1.0, 1.5, 3.0, 3.0, 1.0]
    return np.concatenate([intr, np.tile([max_range, max_range, max_range], N_CONTEXT)])


# ---------------------------------------------------------------------------
# Episode
# ---------------------------------------------------------------------------


@dataclass
class Stack:
    """Everything an episode needs besides the world."""

    table: RewardTable
    env: EnvConfig = field(default_factory=EnvConfig)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    fuzzy: FuzzyConfig = field(default_factory=FuzzyConfig)
    travel: TravelGains = field(default_factory=TravelGains)
    landing: LandingConfig = field(default_factory=LandingConfig)
    arbiter: ArbiterConfig = field(default_factory=ArbiterConfig)
    checker: CheckerConfig = field(default_factory=CheckerConfig)
    exploration: ExplorationSchedule = field(default_factory=ExplorationSchedule)
    limits: KinematicLimits = field(default_factory=KinematicLimits)
    agent: Optional[TD3Agent] = None
    buffer: Optional[PERBuffer] = None
    learn: bool = False
    explore: bool = True
    total_env_steps: int = 0
    rl_steps: int = 0
    verbose: bool = False


@dataclass
class EpisodeResult:
    outcome: str
    steps: int
    ret: float
    switch_count: int
    trajectory: List[Tuple[float, float, float, float, str]]
    switch_log: List[Tuple[int, str, str]]
    rl_transitions: int = 0
    proposals: List[dict] = field(default_factory=list)

    @property
    def success(self) -> bool:
        return self.outcome == "success"

    @property
    def path_length(self) -> float:
        xy = np.array([(x, y) for _, x, y, _, _ in self.trajectory])
        if len(xy) < 2:
            return 0.0
        return float(np.sum(np.hypot(*np.diff(xy, axis=0).T)))


class _RLSegment:
    """Bookkeeping for the polyline currently executed in RL mode."""

    def __init__(self, s0, a, poly: Optional[WaypointPolyline], hold_steps: int):
        self.s0 = s0
        self.a = a
        self.poly = poly
        self.index = 0
        self.steps = 0
        self.reward = 0.0
        self.hold_left = hold_steps if poly is None else 0
        self.collided = False

    def target_line(self) -> GuidanceLine:
        pts = self.poly.points
        return make_guidance_line(pts[self.index], pts[self.index + 1])

    def endpoint(self):
        return None if self.poly is None else self.poly.waypoints[-1]


def _follow_polyline(seg: _RLSegment, state: VehicleState, stack: Stack) -> Tuple[Tuple[float, float, float], bool]:
    """Line-follow the active polyline segment; returns (command, finished)."""
    if seg.poly is None:
        seg.hold_left -= 1
        return (0.0, 0.0, 0.0), seg.hold_left <= 0
    tol = stack.env.waypoint_tolerance
    while True:
        line = seg.target_line()
        e_perp, e_psi, s = travel_errors(line, state.position, state.yaw)
        wp = seg.poly.points[seg.index + 1]
        if s >= line.length - tol * 0.5 or math.hypot(*(wp - state.position)) < tol:
            seg.index += 1
            if seg.index >= len(seg.poly.points) - 1:
                return (0.0, 0.0, 0.0), True
            continue
        break
    gains = replace(stack.travel, v_cruise=stack.env.rl_speed)
    v, w, vz = travel_command((e_perp, e_psi), state.speed, gains)
    v *= max(0.1, math.cos(e_psi))
    return (v, w, vz), False


def _propose(world: World, state: VehicleState, scan_, stack: Stack, rng: np.random.Generator, goal) -> _RLSegment:
    s0 = encode_state(world, state, stack.sensor.max_range, stack.env.pad_range)
    if stack.agent is not None:
        a = stack.agent.act(s0)
    else:
        a = np.zeros(ACTION_DIM)
    poly = decode_action(a, state)
    if stack.explore:
        poly = explore(poly, stack.exploration, rng, goal=goal)
    checked, score, verdict = check_and_score(poly, world, goal, stack.checker)
    record = {"provenance": poly.provenance, "verdict": verdict, "score": score}
    if verdict == "reject":
        esc = escape_line(state, scan_, goal, stack.checker, stack.sensor.max_range)
        checked = None
        if esc is not None:
            esc_checked, _, esc_verdict = check_and_score(esc, world, goal, stack.checker)
            if esc_verdict != "reject":
                checked = esc_checked
        record["fallback"] = "escape" if checked is not None else "hold"
    seg = _RLSegment(s0, a, checked, stack.env.hold_steps)
    if checked is not None:
        seg.a = encode_polyline(checked, state)
    seg.record = record
    return seg


def run_episode(
    world: World,
    stack: Stack,
    seed: int = 0,
    on_transition: Optional[Callable[[Transition], None]] = None,
) -> Tuple[EpisodeResult, List[Transition]]:
    """Closed loop: sense, score, arbitrate, control, integrate, reward.

    Only RL-mode polylines become transitions; they go to ``stack.buffer``
    (when present) and to the returned list. When ``stack.learn`` is set the
    agent takes one TD3 step per RL-mode control step once the buffer holds
    ``env.warmup`` transitions.
    """
    rng = np.random.default_rng(seed)
    ecfg = stack.env
    table = stack.table
    goal = world.goal
    z_g = world.goal_altitude
    R = stack.sensor.max_range

    to_goal = goal - world.start
    state = VehicleState(world.start.copy(), ecfg.start_altitude, math.atan2(to_goal[1], to_goal[0]))
    astate = arb.initial_state(stack.arbiter)
    line: Optional[GuidanceLine] = make_guidance_line(state.position, goal)
    seg: Optional[_RLSegment] = None

    transitions: List[Transition] = []
    trajectory = [(0.0, float(state.position[0]), float(state.position[1]), state.z, str(astate.mode))]
    proposals: List[dict] = []
    recent_endpoints: deque = deque(maxlen=ecfg.revisit_memory)
    positions: deque = deque(maxlen=table.no_progress_window + 1)
    positions.append(state.position.copy())

    ret = 0.0
    settle = 0.0
    in_contact = False
    on_departure = False
    switch_paid = False
    bypass_paid = False
    rl_collided = False
    d_prev_goal = float(math.hypot(*(goal - state.position)))
    dmin_prev = min_range(world, state.position, R)
    outcome = "step_limit"
    t = 0

    def close_segment(s_next_state: VehicleState, done: bool):
        nonlocal seg
        if seg is None:
            return
        s1 = encode_state(world, s_next_state, R, ecfg.pad_range)
        tr = Transition(seg.s0, np.asarray(seg.a, dtype=float), seg.reward, s1, done)
        transitions.append(tr)
        if stack.buffer is not None:
            stack.buffer.push(tr)
        if on_transition is not None:
            on_transition(tr)
        seg = None

    for t in range(1, ecfg.step_limit + 1):
        scan_ = scan(world, state, stack.sensor)
        S = safety_score(scan_, stack.fuzzy)
        dmin = min_range(world, state.position, R)
        dist = float(math.hypot(*(goal - state.position)))
        los = line_of_sight(world, state.position, goal, stack.arbiter.los_clearance)
        prev_mode = astate.mode
        want = arb.desired_mode(RiskInputs(dmin, S, dist, los), astate.mode, stack.arbiter)
        astate, switched = arb.step_arbiter(astate, want, stack.arbiter)

        events = {}
        exiting = None
        if switched:
            if prev_mode is Mode.RL:
                # the outgoing segment is closed after this step's reward so
                # exit bonuses are credited to the RL decision that earned them
                exiting, seg = seg, None
                if astate.mode is Mode.TRAVEL:
                    if not switch_paid:
                        events["safe_switch"] = True
                        switch_paid = True
                    if not bypass_paid and not rl_collided:
                        events["bypass"] = True
                        bypass_paid = True
            if astate.mode is Mode.RL:
                rl_collided = False
            if astate.mode in (Mode.TRAVEL, Mode.LANDING) and dist > 1e-6:
                line = make_guidance_line(state.position, goal)
            on_departure = False

        mode = astate.mode
        if mode is Mode.RL:
            if seg is None:
                seg = _propose(world, state, scan_, stack, rng, goal)
                if stack.verbose:
                    proposals.append({"t": t, **seg.record})
            cmd, finished = _follow_polyline(seg, state, stack)
            if finished:
                endpoint = seg.endpoint()
                if endpoint is not None:
                    revisit = any(math.hypot(*(endpoint - q)) < ecfg.revisit_radius for q in recent_endpoints)
                    events["endpoint"] = ENDPOINT_REVISIT if revisit else ENDPOINT_NOVEL
                    recent_endpoints.append(endpoint.copy())
                close_segment(state, False)
                seg = _propose(world, state, scan_, stack, rng, goal)
                if stack.verbose:
                    proposals.append({"t": t, **seg.record})
                cmd, _ = _follow_polyline(seg, state, stack)
        elif mode is Mode.LANDING:
            unsafe = not arb.landing_safe(dmin, S, stack.arbiter)
            cmd = landing_command(state, goal, z_g, line, stack.landing, hold_altitude=unsafe)
        else:
            e_perp, e_psi, _ = travel_errors(line, state.position, state.yaw)
            cmd = travel_command((e_perp, e_psi), state.speed, stack.travel)
            departed = abs(e_perp) > table.line_departure_threshold
            if departed and not on_departure:
                events["line_departure"] = True
            on_departure = departed

        new_state = step_kinematics(state, cmd, ecfg.dt, stack.limits)
        collision = COLLISION_NONE
        terminal = None
        if not world.bounds.contains(new_state.position):
            collision = COLLISION_TERMINAL
            terminal = "out_of_bounds"
        elif collides(world, new_state.position, ecfg.safety_radius):
            if table.collision_terminal:
                collision = COLLISION_TERMINAL
                terminal = "crash"
            else:
                if not in_contact:
                    collision = COLLISION_RECOVERABLE
                in_contact = True
                # blocked: the vehicle stays where it was, stopped
                new_state = replace(new_state, position=state.position, speed=0.0)
            if mode is Mode.RL:
                rl_collided = True
        else:
            in_contact = False
        state = new_state

        d_goal = float(math.hypot(*(goal - state.position)))
        dmin_new = min_range(world, state.position, R)
        r_prox = table.proximity_radius
        was_in_zone = dmin_prev is not None and dmin_prev < r_prox
        now_clear = dmin_new is None or dmin_new > r_prox
        positions.append(state.position.copy())

        no_progress = False
        if (
            terminal is None
            and table.no_progress_penalty is not None
            and astate.mode is not Mode.LANDING  # hovering for touchdown is not a stall
            and len(positions) == positions.maxlen
            and math.hypot(*(positions[-1] - positions[0])) < table.no_progress_displacement
        ):
            no_progress = True
            terminal = "no_progress"

        goal_reached = False
        if terminal is None and astate.mode is Mode.LANDING:
            if touchdown_conditions(state, goal, z_g, line, stack.landing):
                settle += ecfg.dt
            else:
                settle = 0.0
            if settle >= stack.landing.T_settle - 1e-9:
                goal_reached = True
                terminal = "success"
        else:
            settle = 0.0

        ev = StepEvents(
            progress=d_prev_goal - d_goal,
            d_min=dmin_new,
            collision=collision,
            no_progress=no_progress,
            line_departure=events.get("line_departure", False),
            safe_switch=events.get("safe_switch", False),
            bypass=events.get("bypass", False),
            endpoint=events.get("endpoint", ENDPOINT_NONE),
            zone_exit=was_in_zone and now_clear,
            goal=goal_reached,
        )
        r = reward_step(ev, table)
        ret += r
        if exiting is not None:
            seg, exiting = exiting, None
            seg.reward += r
            if terminal is None:
                close_segment(state, False)
        elif seg is not None:
            seg.reward += r
            seg.steps += 1
            if seg.steps >= ecfg.polyline_step_cap and terminal is None:
                close_segment(state, False)
        d_prev_goal = d_goal
        dmin_prev = dmin_new
        trajectory.append((round(t * ecfg.dt, 10), float(state.position[0]), float(state.position[1]), state.z, str(astate.mode)))

        stack.total_env_steps += 1
        if stack.learn and stack.agent is not None and stack.buffer is not None and astate.mode is Mode.RL:
            stack.rl_steps += 1
            ready = len(stack.buffer) >= max(ecfg.warmup, stack.agent.cfg.batch)
            if ready and stack.rl_steps % ecfg.learn_every == 0:
                stack.buffer.anneal_beta(min(1.0, stack.total_env_steps / ecfg.beta_horizon))
                stack.agent.learn(stack.buffer, rng)

        if terminal is not None:
            outcome = terminal
            close_segment(state, True)
            break
    else:
        close_segment(state, False)

    result = EpisodeResult(
        outcome=outcome,
        steps=t,
        ret=ret,
        switch_count=arb.switch_count(astate),
        trajectory=trajectory,
        switch_log=arb.switch_log_rows(astate),
        rl_transitions=len(transitions),
        proposals=proposals,
    )
    return result, transitions


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def moving_average(series, window: int = 15) -> List[float]:
    """Trailing mean over the last ``window`` entries (fewer during warm-up)."""
    if window < 1:
        raise ValueError("window must be >= 1")
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        return []
    return [float(np.mean(x[max(0, i + 1 - window) : i + 1])) for i in range(x.size)]


@dataclass
class EpisodeRow:
    episode: int
    steps: int
    ret: float
    success: bool
    switches: int
    outcome: str


@dataclass
class TrainingLog:
    rows: List[EpisodeRow] = field(default_factory=list)
    saved: Dict[int, EpisodeResult] = field(default_factory=dict)
    diverged: Optional[str] = None

    @property
    def successes(self) -> int:
        return sum(r.success for r in self.rows)


def train(
    world: World,
    stack: Stack,
    seed: int = 0,
    episode_cap: int = 2000,
    success_target: int = 100,
    on_episode: Optional[Callable[[EpisodeRow, EpisodeResult], None]] = None,
) -> TrainingLog:
    """Run episodes with per-episode epsilon decay until ``success_target``
    successes or ``episode_cap`` episodes. A divergence stops the run and is
    recorded on the log; rows gathered so far are kept."""
    from .td3 import DivergenceError

    tlog = TrainingLog()
    stack.learn = True
    stack.explore = True
    successes = 0
    first_success_saved = False
    for ep in range(episode_cap):
        stack.exploration = replace(stack.exploration, episode_index=ep)
        if stack.agent is not None:
            stack.agent.episode_index = ep
        try:
            result, _ = run_episode(world, stack, seed=seed * 100_003 + ep)
        except DivergenceError as exc:
            tlog.diverged = str(exc)
            log.error("episode %d: %s", ep, exc)
            break
        row = EpisodeRow(ep, result.steps, result.ret, result.success, result.switch_count, result.outcome)
        tlog.rows.append(row)
        every = stack.env.save_trajectory_every
        if (every and ep % every == 0) or (result.success and not first_success_saved):
            tlog.saved[ep] = result
            first_success_saved = first_success_saved or result.success
        if on_episode is not None:
            on_episode(row, result)
        successes += result.success
        if successes >= success_target:
            tlog.saved[ep] = result
            break
    return tlog
