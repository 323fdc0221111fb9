"""Acceptance suite: one test per headline criterion, each printing a single
PASS/FAIL line (collected and echoed in the terminal summary as well).

The two dense-world criteria train for tens of minutes and sit in the slow
suite (``pytest --runslow``).
"""
import functools
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from conftest import record
from swiftnav.arbiter import ArbiterConfig, Mode, initial_state, step_arbiter
from swiftnav.cli import build_stack, main, resolve_world
from swiftnav.config import RunConfig, with_ablation
from swiftnav.env import moving_average, train
from swiftnav.fuzzy import membership, safety_score, weight
from swiftnav.planner import N_WAYPOINTS, CheckerConfig, WaypointPolyline, check_and_score, clearance_field, sample_polyline
from swiftnav.replay import PERBuffer, SumTree, Transition
from swiftnav.td3 import DenseNet, TD3Agent, TD3Config
from swiftnav.world import Bounds, Obstacle, World


def verdict(name, ok, detail, elapsed=None, budget=None):
    if budget is not None:
        ok = ok and elapsed < budget
        detail = f"{detail}; {elapsed:.1f}s (budget {budget:g}s)"
    record(name, ok, detail)
    assert ok, f"{name}: {detail}"


# ---------------------------------------------------------------- fuzzy


def test_fuzzy_exactness():
    t0 = time.perf_counter()
    errs = []
    # membership ramp: closed form (d - 2) / 8 clipped to [0, 1]
    for d in np.linspace(0.0, 20.0, 2001):
        errs.append(abs(membership(d) - min(1.0, max(0.0, (d - 2.0) / 8.0))))
    # sector weights including the three boundary angles
    for theta, w in ((30.0, 1.0), (150.0, 0.2), (210.0, 0.2), (330.0, 1.0), (0.0, 1.0), (90.0, 0.5), (270.0, 0.5)):
        errs.append(abs(weight(theta) - w))
    for theta_deg, w in ((30, 1.0), (150, 0.2), (210, 0.2)):
        got = safety_score([(math.radians(theta_deg), 6.0), (math.radians(90), 6.0)])
        errs.append(abs(got - 0.5))  # both rays sit at membership 0.5 whatever their weights
        got = safety_score([(math.radians(theta_deg), 2.0), (math.radians(90), 10.0)])
        errs.append(abs(got - 0.5 / (w + 0.5)))
    hand = safety_score([(0.0, 6.0), (math.radians(90), 12.0), (math.radians(180), 2.0)])
    errs.append(abs(hand - (0.5 * 1.0 + 1.0 * 0.5 + 0.0 * 0.2) / 1.7))
    ok = max(errs) <= 1e-12 and abs(hand - 0.5882) < 1e-4
    verdict("fuzzy exactness", ok, f"max error {max(errs):.1e}, hand case {hand:.6f}",
            time.perf_counter() - t0, 1.0)


# ---------------------------------------------------------------- arbiter


def _oscillating_desire(T, seed):
    """Travel/RL desire with run lengths of 1 or 3: short runs keep the
    debounce counter busy, runs of 3 are just long enough to pass it."""
    g = np.random.default_rng(seed)
    out = []
    mode = Mode.RL
    while len(out) < T:
        out.extend([mode] * (3 if g.random() < 0.3 else 1))
        mode = Mode.TRAVEL if mode is Mode.RL else Mode.RL
    return out[:T]


def _drive(desires, cfg):
    st = initial_state(cfg)
    for d in desires:
        st, _ = step_arbiter(st, d, cfg)
    return st.switch_log


def test_switch_bound():
    t0 = time.perf_counter()
    T = 100_000
    desires = _oscillating_desire(T, seed=0)
    on = _drive(desires, ArbiterConfig(dwell_min=20, debounce_N=3))
    off = _drive(desires, ArbiterConfig(dwell_min=20, debounce_N=3, stability_enabled=False))
    steps = [s for s, _, _ in on]
    gap = min(np.diff(steps)) if len(steps) > 1 else T
    ok = len(on) <= T // 20 + 1 and gap >= 20 and len(off) >= 10 * len(on)
    verdict("switch bound", ok,
            f"stable {len(on)} switches (bound {T // 20 + 1}, min gap {gap}), unstable {len(off)}",
            time.perf_counter() - t0, 5.0)


# ---------------------------------------------------------------- replay


def _transition(r=0.0):
    return Transition(np.zeros(72), np.zeros(10), r, np.zeros(72), False)


def test_per_statistics():
    t0 = time.perf_counter()
    g = np.random.default_rng(0)
    buf = PERBuffer(10, alpha=0.6)
    for _ in range(10):
        buf.push(_transition())
    p = g.uniform(0.05, 3.0, size=10)
    buf.update_priorities(np.arange(10), p)
    expect = np.maximum(p, buf.priority_floor) ** 0.6
    expect /= expect.sum()
    counts = np.zeros(10)
    for _ in range(10_000):
        idx, *_ = buf.sample(10, g)
        np.add.at(counts, idx, 1)
    freq_err = float(np.abs(counts / counts.sum() - expect).max())

    tree = SumTree(64)
    ref = np.zeros(64)
    for _ in range(10_000):
        i = int(g.integers(64))
        v = float(g.uniform(0, 5)) ** 0.6 if g.random() < 0.9 else 0.0
        tree.set(i, v)
        ref[i] = v
    root_err = abs(tree.total - ref.sum()) / ref.sum()
    ok = freq_err <= 0.01 and root_err <= 1e-6
    verdict("PER statistics", ok, f"max freq error {freq_err:.4f}, root rel error {root_err:.1e}",
            time.perf_counter() - t0, 10.0)


# ---------------------------------------------------------------- td3


def _fd_error(net, g, n_checks):
    x = g.normal(size=(4, net.W[0].shape[0]))
    up = g.normal(size=(4, net.W[-1].shape[1]))
    net.forward(x)
    grads, dx = net.backward(up)
    worst = 0.0
    h = 1e-5
    for k, (p, gk) in enumerate(zip(net.params, grads)):
        for _ in range(n_checks):
            idx = tuple(int(g.integers(s)) for s in p.shape)
            old = p[idx]
            p[idx] = old + h
            fp = float(np.sum(net.forward(x) * up))
            p[idx] = old - h
            fm = float(np.sum(net.forward(x) * up))
            p[idx] = old
            num = (fp - fm) / (2 * h)
            worst = max(worst, abs(num - gk[idx]) / max(1e-8, abs(num) + abs(gk[idx])))
    return worst


def test_gradient_oracle():
    t0 = time.perf_counter()
    g = np.random.default_rng(0)
    shapes = [((72, 256, 256, 10), "tanh"), ((82, 256, 256, 1), "linear")]
    for _ in range(18):
        d = [int(g.integers(2, 12)) for _ in range(int(g.integers(3, 5)))]
        shapes.append((tuple(d), "tanh" if g.random() < 0.5 else "linear"))
    worst = 0.0
    for dims, out in shapes:
        net = DenseNet(dims, output=out, rng=g)
        worst = max(worst, _fd_error(net, g, 8 if max(dims) > 100 else 20))
    verdict("gradient oracle", worst < 1e-4, f"{len(shapes)} nets, worst relative error {worst:.1e}",
            time.perf_counter() - t0, 30.0)


class _ConstCritic:
    def __init__(self, q):
        self.q = np.asarray(q, dtype=float)

    def forward(self, x):
        return self.q[:, None]


def test_td3_mechanics():
    t0 = time.perf_counter()
    agent = TD3Agent(72, 10, TD3Config(hidden=8, gamma=0.99, reward_scale=1.0), seed=0)
    agent.critic1_t = _ConstCritic([2.0, 2.0, -4.0])
    agent.critic2_t = _ConstCritic([3.0, 1.5, -1.0])
    batch = {"s_next": np.zeros((3, 72)), "r": np.array([1.0, 1.0, 0.5]), "done": np.array([0.0, 1.0, 0.0])}
    y = agent.compute_targets(batch, np.random.default_rng(0))
    expect = np.array([1.0 + 0.99 * 2.0, 1.0, 0.5 + 0.99 * -4.0])
    target_err = float(np.abs(y - expect).max())

    contraction_err = 0.0
    g = np.random.default_rng(1)
    for tau in (0.0, 0.005, 1.0):
        src = DenseNet((5, 7, 3), rng=g)
        dst = DenseNet((5, 7, 3), rng=g)
        before = [p.copy() for p in dst.params]
        gap0 = [s - p for s, p in zip(src.params, before)]
        dst.soft_update_from(src, tau)
        for s, p, b, d0 in zip(src.params, dst.params, before, gap0):
            contraction_err = max(contraction_err, float(np.abs(p - (tau * s + (1 - tau) * b)).max()))
            contraction_err = max(contraction_err, float(np.abs((s - p) - (1 - tau) * d0).max()))
    ok = abs(y[0] - 2.98) < 1e-12 and target_err < 1e-12 and contraction_err < 1e-12
    verdict("TD3 mechanics", ok, f"y0={y[0]:.12g}, target error {target_err:.1e}, contraction error {contraction_err:.1e}",
            time.perf_counter() - t0, 1.0)


# ---------------------------------------------------------------- checker


def _scene(g):
    bounds = Bounds(0.0, 0.0, 40.0, 40.0)
    obs = [Obstacle(float(g.uniform(2, 38)), float(g.uniform(2, 38)), float(g.uniform(0.3, 2.0)))
           for _ in range(int(g.integers(3, 25)))]
    world = World(bounds, obs, (0.0, 0.0), (39.0, 39.0))
    while True:
        origin = g.uniform(2, 38, size=2)
        if clearance_field(world, origin[None, :])[0] >= 1.0:
            break
    wps = origin + np.cumsum(g.normal(0, 3.0, size=(N_WAYPOINTS, 2)), axis=0)
    return world, WaypointPolyline(origin, wps, "actor"), g.uniform(2, 38, size=2)


def test_checker_safety():
    t0 = time.perf_counter()
    g = np.random.default_rng(2024)
    cfg = CheckerConfig()
    unsafe, verdicts = 0, {"keep": 0, "modify": 0, "reject": 0}
    for _ in range(1000):
        world, poly, goal = _scene(g)
        out, _, v = check_and_score(poly, world, goal, cfg)
        verdicts[v] += 1
        if v != "reject":
            dense = clearance_field(world, sample_polyline(out.points, 0.25)).min()
            unsafe += dense < cfg.clearance_margin - 1e-9
    verdict("checker safety", unsafe == 0, f"{unsafe} unsafe outputs; verdicts {verdicts}",
            time.perf_counter() - t0, 30.0)


# ---------------------------------------------------------------- training


@functools.lru_cache(maxsize=None)
def _train(world: str, ablation: str = "none", seed: int = 7):
    cfg = RunConfig()
    cfg = replace(cfg, run=replace(cfg.run, world=world, seed=seed))
    cfg = with_ablation(cfg, ablation)
    t0 = time.perf_counter()
    tlog = train(resolve_world(world, cfg.env.safety_radius), build_stack(cfg), seed, cfg.run.episode_cap,
                 cfg.run.success_target)
    return tlog, time.perf_counter() - t0


def _first_ma_index(n, window=15):
    return window - 1 if n >= window else 0


def test_convergence_signature():
    tlog, elapsed = _train("traj1")
    rows = tlog.rows
    ma_r = moving_average([r.ret for r in rows])
    ma_s = moving_average([r.steps for r in rows])
    k = _first_ma_index(len(rows))
    rate = float(np.mean([r.success for r in rows[-50:]]))
    ok = (tlog.diverged is None and tlog.successes >= 100 and len(rows) <= 2000
          and ma_r[-1] > ma_r[k] and ma_s[-1] < ma_s[k] and rate >= 0.8)
    verdict("convergence signature", ok,
            f"{tlog.successes} successes in {len(rows)} episodes; MA return {ma_r[k]:.1f} -> {ma_r[-1]:.1f}; "
            f"MA steps {ma_s[k]:.1f} -> {ma_s[-1]:.1f}; last-50 success {rate:.2f}", elapsed, 20 * 60)


def _quartiles(values):
    ma = moving_average(values)
    q = max(1, len(ma) // 4)
    return float(np.mean(ma[:q])), float(np.mean(ma[-q:]))


@pytest.mark.slow
def test_dense_world_trend():
    tlog, elapsed = _train("traj2")
    first, last = _quartiles([r.ret for r in tlog.rows])
    n = len(tlog.rows)
    succ = {ep: res for ep, res in sorted(tlog.saved.items()) if res.success}
    earliest = min(succ) if succ else None
    late = [res.path_length for ep, res in succ.items() if ep >= 3 * n // 4 and ep != earliest]
    base = succ[earliest].path_length if succ else math.nan
    ok = tlog.diverged is None and last > first and bool(late) and float(np.mean(late)) < base
    verdict("dense-world trend", ok,
            f"{n} episodes; quartile MA return {first:.1f} -> {last:.1f}; earliest saved success "
            f"ep {earliest} path {base:.1f} m; late saved paths {[round(x, 1) for x in late]}", elapsed, 45 * 60)


def _switches_per_success(tlog):
    return sum(r.switches for r in tlog.rows) / tlog.successes if tlog.successes else math.inf


@pytest.mark.slow
def test_ablation_stagnation():
    full, _ = _train("traj2")
    no_chk, _ = _train("traj2", "no_checker")
    no_stab, _ = _train("traj2", "no_stability")
    _, full_last = _quartiles([r.ret for r in full.rows])
    _, chk_last = _quartiles([r.ret for r in no_chk.rows])
    sps_full, sps_stab = _switches_per_success(full), _switches_per_success(no_stab)
    ok = chk_last <= full_last and sps_full < sps_stab
    verdict("ablation stagnation", ok,
            f"final-quartile MA return full {full_last:.1f} vs no-checker {chk_last:.1f}; "
            f"switches/success full {sps_full:.2f} vs no-stability {sps_stab:.2f}")


# ---------------------------------------------------------------- determinism


def test_determinism(tmp_path, monkeypatch):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[run]\nworld = traj1\nepisode_cap = 4\n\n[env]\nwarmup = 128\n")
    logs = []
    for k in range(2):
        monkeypatch.setenv("SWIFTNAV_OUT", str(tmp_path / f"run{k}"))
        assert main(["train", "--config", str(cfg), "--seed", "7", "--quiet"]) == 0
        logs.append((tmp_path / f"run{k}" / "episodes.csv").read_bytes())
    verdict("determinism", logs[0] == logs[1] and len(logs[0].splitlines()) == 5,
            f"episode logs {len(logs[0])} and {len(logs[1])} bytes, identical={logs[0] == logs[1]}")
