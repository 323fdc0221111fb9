import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swiftnav.control import (
    LandingConfig,
    TravelGains,
    approach_speed,
    landing_command,
    make_guidance_line,
    touchdown_met,
    travel_command,
    travel_errors,
)
from swiftnav.world import VehicleState, step_kinematics


def test_line_slope_intercept():
    line = make_guidance_line((0, 0), (4, 2))
    assert line.slope == pytest.approx(0.5) and line.intercept == pytest.approx(0.0)
    line = make_guidance_line((1, 1), (5, 3))
    assert line.slope == pytest.approx(0.5) and line.intercept == pytest.approx(0.5)
    assert line.length == pytest.approx(math.hypot(4, 2))


def test_vertical_line():
    line = make_guidance_line((2, 0), (2, 9))
    assert line.vertical and line.intercept is None
    assert line.heading == pytest.approx(math.pi / 2)


def test_degenerate_line():
    with pytest.raises(ValueError, match="degenerate line"):
        make_guidance_line((1, 1), (1, 1))


@settings(max_examples=200, deadline=None)
@given(st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50), st.floats(-50, 50))
def test_line_frame_is_orthonormal(x0, y0, x1, y1):
    if math.hypot(x1 - x0, y1 - y0) < 1e-3:
        return
    line = make_guidance_line((x0, y0), (x1, y1))
    t, n = line.tangent, line.normal
    assert abs(np.linalg.norm(t) - 1) < 1e-12 and abs(np.linalg.norm(n) - 1) < 1e-12
    assert abs(t @ n) < 1e-12
    if not line.vertical:
        assert line.intercept == y0 - line.slope * x0


def test_travel_errors_examples():
    line = make_guidance_line((0, 0), (10, 0))
    assert travel_errors(line, (2, 1), 0.0) == pytest.approx((1.0, 0.0, 2.0))
    assert travel_errors(line, (5, 0), 0.0) == pytest.approx((0.0, 0.0, 5.0))
    assert travel_errors(line, (0, 0), 3 * math.pi / 2)[1] == pytest.approx(-math.pi / 2)


def test_travel_command_zero_and_saturation():
    g = TravelGains()
    assert travel_command((0.0, 0.0), 2.0, g) == (2.0, -0.0, 0.0)
    assert travel_command((1e6, 0.0), 2.0, g)[1] == -g.yaw_rate_max
    assert travel_command((-1e6, 0.0), 2.0, g)[1] == g.yaw_rate_max


def test_travel_command_steers_back():
    assert travel_command((1.0, 0.0), 2.0)[1] < 0
    assert travel_command((-1.0, 0.0), 2.0)[1] > 0


def _simulate(line, state, steps, gains=TravelGains()):
    errs = []
    for _ in range(steps):
        e_perp, e_psi, _ = travel_errors(line, state.position, state.yaw)
        errs.append(e_perp)
        state = step_kinematics(state, travel_command((e_perp, e_psi), state.speed, gains), 0.1)
    errs.append(travel_errors(line, state.position, state.yaw)[0])
    return errs


def test_closed_loop_contracts():
    line = make_guidance_line((0, 0), (1000, 0))
    errs = _simulate(line, VehicleState((0, 1.0), 0, 0.0), 200)
    assert abs(errs[-1]) < abs(errs[0])
    assert abs(errs[-1]) < 0.01


@pytest.mark.parametrize("e0", [-5.0, -2.0, 0.5, 3.0, 5.0])
@pytest.mark.parametrize("psi0", [-math.pi / 2, -0.7, 0.0, 0.9, math.pi / 2])
def test_closed_loop_converges_from_envelope(e0, psi0):
    line = make_guidance_line((0, 0), (1000, 0))
    errs = _simulate(line, VehicleState((0, e0), 0, psi0), 300)
    assert abs(errs[-1]) < 0.1


def test_stanley_law_also_steers_back():
    g = TravelGains(law="stanley")
    assert travel_command((1.0, 0.0), 2.0, g)[1] < 0
    line = make_guidance_line((0, 0), (1000, 0))
    errs = _simulate(line, VehicleState((0, 3.0), 0, 0.0), 300, g)
    assert abs(errs[-1]) < 0.1


def test_landing_speed_profile():
    cfg = LandingConfig()
    line = make_guidance_line((0, 0), (20, 0))
    far = VehicleState((0, 0), 2.0, 0.0)
    assert landing_command(far, (20, 0), 0.0, line, cfg)[0] == pytest.approx(cfg.v_max)
    d = cfg.v_min / cfg.k_v
    at = VehicleState((20 - d, 0), 2.0, 0.0)
    assert landing_command(at, (20, 0), 0.0, line, cfg)[0] == pytest.approx(cfg.v_min)


def test_landing_speed_monotone():
    cfg = LandingConfig()
    ds = np.linspace(0, 5, 200)
    v = [approach_speed(d, cfg) for d in ds]
    assert all(b >= a for a, b in zip(v, v[1:]))
    lo, hi = cfg.v_min / cfg.k_v, cfg.v_max / cfg.k_v
    assert all(x == cfg.v_min for d, x in zip(ds, v) if d <= lo)
    assert all(x == cfg.v_max for d, x in zip(ds, v) if d >= hi)


def test_descent_only_when_close_and_aligned():
    cfg = LandingConfig()
    line = make_guidance_line((0, 0), (10, 0))
    near = VehicleState((9.5, 0), 3.0, 0.0)
    assert landing_command(near, (10, 0), 0.0, line, cfg)[2] == pytest.approx(-cfg.vz_max)
    assert landing_command(near, (10, 0), 0.0, line, cfg, hold_altitude=True)[2] == 0.0
    misaligned = VehicleState((9.5, 0), 3.0, 1.0)
    assert landing_command(misaligned, (10, 0), 0.0, line, cfg)[2] == 0.0
    far = VehicleState((5, 0), 3.0, 0.0)
    assert landing_command(far, (10, 0), 0.0, line, cfg)[2] == 0.0
    at_alt = VehicleState((9.5, 0), 0.0, 0.0)
    assert landing_command(at_alt, (10, 0), 0.0, line, cfg)[2] == 0.0


@settings(max_examples=200, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-3, 3), st.floats(-10, 50))
def test_descent_rate_bounded(x, y, yaw, z):
    cfg = LandingConfig()
    line = make_guidance_line((-10, 0), (0, 0))
    vz = landing_command(VehicleState((x, y), z, yaw), (0, 0), 0.0, line, cfg)[2]
    assert -cfg.vz_max <= vz <= 0.0


def test_touchdown_dwell():
    cfg = LandingConfig()
    s = VehicleState((0.05, 0), 0.02, 0.0, speed=0.0)
    assert not touchdown_met(s, (0, 0), 0.0, cfg, settle_clock=0.5)
    assert touchdown_met(s, (0, 0), 0.0, cfg, settle_clock=1.0)
    moving = VehicleState((0.05, 0), 0.02, 0.0, speed=0.2)
    assert not touchdown_met(moving, (0, 0), 0.0, cfg, settle_clock=2.0)


def test_landing_closes_in_and_touches_down():
    cfg = LandingConfig()
    goal = np.array([10.0, 0.0])
    line = make_guidance_line((0, 0.5), goal)
    s = VehicleState((0, 0.5), 2.0, 0.1)
    settle = 0.0
    from swiftnav.control import touchdown_conditions

    for k in range(2000):
        s = step_kinematics(s, landing_command(s, goal, 0.0, line, cfg), 0.1)
        settle = settle + 0.1 if touchdown_conditions(s, goal, 0.0, line, cfg) else 0.0
        if touchdown_met(s, goal, 0.0, cfg, settle, line):
            break
    else:
        pytest.fail("no touchdown")
    assert np.linalg.norm(s.position - goal) < cfg.r_tol


def test_landing_config_validation():
    with pytest.raises(ValueError):
        LandingConfig(delta_in=3.0, delta_out=2.0)
    with pytest.raises(ValueError):
        LandingConfig(v_min=2.0, v_max=1.0)
