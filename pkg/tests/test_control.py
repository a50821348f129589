"""Velocity-command mapping and point tracker tests."""

import math

import numpy as np
import pytest

from fleetsim.control import SiToUniParams, TrackerGains, si_to_unicycle, track_point
from fleetsim.dynamics import IntegratorConfig, UnicycleState, step
from fleetsim.errors import ModelError


def test_si_to_unicycle_aligned():
    p = SiToUniParams(lookahead=0.1)
    cmd = si_to_unicycle(np.array([1.0, 0.0]), 0.0, p)
    assert cmd.v == pytest.approx(1.0)
    assert cmd.omega == pytest.approx(0.0)


def test_si_to_unicycle_perpendicular():
    # heading +y, command +x: all of the request goes into turning
    p = SiToUniParams(lookahead=0.1)
    cmd = si_to_unicycle(np.array([1.0, 0.0]), math.pi / 2, p)
    assert cmd.v == pytest.approx(0.0, abs=1e-12)
    assert cmd.omega == pytest.approx(-10.0)


def test_si_to_unicycle_zero():
    cmd = si_to_unicycle(np.zeros(2), 1.234, SiToUniParams())
    assert cmd.v == 0.0 and cmd.omega == 0.0


def test_si_to_unicycle_clamps():
    p = SiToUniParams(lookahead=0.1, v_max=0.5, omega_max=2.0)
    cmd = si_to_unicycle(np.array([3.0, 0.0]), 0.0, p)
    assert cmd.v == 0.5
    cmd = si_to_unicycle(np.array([1.0, 0.0]), math.pi / 2, p)
    assert cmd.omega == -2.0


def test_si_to_unicycle_shape_check():
    with pytest.raises(ModelError):
        si_to_unicycle(np.zeros(3), 0.0, SiToUniParams())


def test_lookahead_must_be_positive():
    with pytest.raises(ModelError):
        SiToUniParams(lookahead=0.0)
    with pytest.raises(ModelError):
        SiToUniParams(lookahead=-0.1)


def test_track_point_straight_ahead():
    gains = TrackerGains(k_lin=1.0, k_ang=2.0)
    cmd = track_point(UnicycleState(0.0, 0.0, 0.0), np.array([1.0, 0.0]), gains)
    assert cmd.v == pytest.approx(1.0)
    assert cmd.omega == pytest.approx(0.0)


def test_track_point_arrival_stops():
    gains = TrackerGains(arrive_radius=0.05)
    cmd = track_point(UnicycleState(0.0, 0.0, 1.0), np.array([0.03, 0.0]), gains)
    assert cmd.v == 0.0 and cmd.omega == 0.0


def test_track_point_target_abeam():
    # target straight to the left: no forward progress, pure rotation
    gains = TrackerGains(k_lin=1.0, k_ang=2.0)
    cmd = track_point(UnicycleState(0.0, 0.0, 0.0), np.array([0.0, 1.0]), gains)
    assert cmd.v == pytest.approx(0.0, abs=1e-12)
    assert cmd.omega == pytest.approx(math.pi)


def test_track_point_never_reverses():
    gains = TrackerGains(k_lin=1.0, k_ang=2.0)
    # target directly behind
    cmd = track_point(UnicycleState(0.0, 0.0, 0.0), np.array([-1.0, 0.0]), gains)
    assert cmd.v == 0.0


def test_track_point_converges_from_random_poses():
    """Default gains bring 100 random poses onto the target within 60 s."""
    rng = np.random.default_rng(7)
    gains = TrackerGains()
    dt = 0.01
    cfg = IntegratorConfig(dt=dt)
    target = np.zeros(2)
    max_steps = int(60 / dt)
    for _ in range(100):
        ang = rng.uniform(-math.pi, math.pi)
        rho = rng.uniform(0.1, 5.0)
        pose = UnicycleState(
            rho * math.cos(ang), rho * math.sin(ang), rng.uniform(-math.pi, math.pi)
        )
        done = False
        for _ in range(max_steps):
            cmd = track_point(pose, target, gains)
            if cmd.v == 0.0 and cmd.omega == 0.0:
                done = True
                break
            pose = step(pose, cmd, cfg)
        assert done
        assert math.hypot(pose.x, pose.y) < gains.arrive_radius


@pytest.mark.parametrize("theta0", [0.0, math.pi / 2])
def test_offset_point_follows_commanded_velocity(theta0):
    """Driving the mapped command moves the lookahead point like the SI input.

    The point l ahead of the axle should track p0 + t*u to well under 0.01.
    """
    lookahead = 0.05
    params = SiToUniParams(lookahead=lookahead)
    dt = 1e-3
    cfg = IntegratorConfig(dt=dt)
    u = np.array([1.0, 0.0])
    pose = UnicycleState(0.0, 0.0, theta0)

    def handle(p):
        return np.array(
            [p.x + lookahead * math.cos(p.theta), p.y + lookahead * math.sin(p.theta)]
        )

    start = handle(pose)
    worst = 0.0
    for k in range(1, 1001):
        pose = step(pose, si_to_unicycle(u, pose.theta, params), cfg)
        want = start + k * dt * u
        worst = max(worst, float(np.linalg.norm(handle(pose) - want)))
    assert worst < 0.01


def test_tracker_gains_defaults():
    g = TrackerGains()
    assert g.k_lin > 0 and g.k_ang > 0 and g.arrive_radius > 0
