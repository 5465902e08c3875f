import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quadlab.dynamics import (DivergenceError, GimbalLockError, MotorBoundViolation, NonFiniteState,
                              QuadParams, hover_rpm, make_state, rotor_forces_to_wrench, simulate,
                              step, wrap_angle, wrench_to_rotor_forces, write_trajectory_csv)

Q = QuadParams()


def hover(t, s):
    return (hover_rpm(Q),) * 4


def test_hover_rpm_constructed_inverse():
    kf = 9.8 * 0.027 / (4 * 1000.0 ** 2)
    assert hover_rpm(QuadParams(thrust_coeff=kf)) == pytest.approx(1000.0, rel=1e-12)


def test_hover_rpm_residual_and_mass_scaling():
    r = hover_rpm(Q)
    assert abs(4 * Q.thrust_coeff * r * r - Q.mass * Q.gravity) < 1e-12
    assert hover_rpm(QuadParams(mass=2 * Q.mass)) == pytest.approx(math.sqrt(2) * r, rel=1e-12)


@pytest.mark.parametrize("kw", [{"mass": 0.0}, {"mass": -1.0}, {"physics_dt": 1 / 100},
                                {"inertia_diag": (1e-5, 1e-5)}, {"gravity": float("nan")}])
def test_params_validation(kw):
    with pytest.raises(ValueError):
        QuadParams(**kw)


def test_free_fall_matches_closed_form():
    traj = simulate(make_state(), lambda t, s: (0.0,) * 4, 1.0, Q)
    assert abs(traj[-1, 2] - (-0.5 * Q.gravity)) < 1e-3
    assert traj.shape == (241, 12)


def test_hover_holds_position():
    traj = simulate(make_state(pos=(0.3, -0.2, 1.0)), hover, 1.0, Q)
    assert np.max(np.abs(traj[:, :3] - traj[0, :3])) < 1e-6


def test_step_force_impulse():
    traj = simulate(make_state(), hover, 1.0, Q, ext_schedule=lambda t: (0.01, 0.0, 0.0))
    assert abs(traj[-1, 6] - 0.01 / Q.mass) < 1e-3


def test_mirror_symmetry():
    s0 = make_state(pos=(0.1, 0.2, 0.3), att=(0.05, 0.02, 0.1), lin_vel=(0.1, -0.3, 0.2),
                    ang_vel=(0.3, -0.2, 0.1))
    rpm = (15000.0, 15200.0, 14900.0, 15100.0)
    # mirroring about x-z swaps rotors 0<->3 and 1<->2 in the X layout
    mrpm = (rpm[3], rpm[2], rpm[1], rpm[0])
    mirror = np.array([1, -1, 1, -1, 1, -1, 1, -1, 1, -1, 1, -1], float)
    a, b = s0, s0 * mirror
    for _ in range(100):
        a = step(a, rpm, (0.01, 0.02, 0.0), Q)
        b = step(b, mrpm, (0.01, -0.02, 0.0), Q)
    assert np.max(np.abs(a * mirror - b)) < 1e-9


def test_mixer_round_trip():
    f = (0.06, 0.07, 0.065, 0.08)
    assert np.allclose(wrench_to_rotor_forces(*rotor_forces_to_wrench(f, Q), Q), f, atol=1e-15)


@given(st.floats(-50, 50))
def test_wrap_angle_range(a):
    w = wrap_angle(a)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
    assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_motor_bounds():
    with pytest.raises(MotorBoundViolation):
        step(make_state(), (-1.0, 0, 0, 0), (0, 0, 0), Q)
    with pytest.raises(MotorBoundViolation):
        step(make_state(), (Q.rpm_max * 1.01, 0, 0, 0), (0, 0, 0), Q)
    with pytest.raises(MotorBoundViolation):
        step(make_state(), (0, 0, 0), (0, 0, 0), Q)


def test_non_finite_and_gimbal():
    with pytest.raises(NonFiniteState):
        step(make_state(pos=(np.nan, 0, 0)), (0.0,) * 4, (0, 0, 0), Q)
    with pytest.raises(GimbalLockError):
        step(make_state(att=(0, math.pi / 2 - 0.04, 0)), (0.0,) * 4, (0, 0, 0), Q)


def test_simulate_reports_divergence_step():
    s0 = make_state(att=(0, 1.4, 0), ang_vel=(0, 20.0, 0))
    with pytest.raises(DivergenceError) as exc:
        simulate(s0, lambda t, s: (0.0,) * 4, 1.0, Q)
    assert exc.value.step_index is not None and exc.value.step_index < 240


def test_simulate_control_period_holds_command():
    calls = []

    def ctrl(t, s):
        calls.append(t)
        return (hover_rpm(Q),) * 4

    simulate(make_state(), ctrl, 1.0, Q, control_period=1 / 50)
    assert len(calls) == 50


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 21702), min_size=4, max_size=4))
def test_step_is_finite_and_deterministic(rpm):
    a = step(make_state(pos=(0, 0, 1)), rpm, (0, 0, 0), Q)
    b = step(make_state(pos=(0, 0, 1)), rpm, (0, 0, 0), Q)
    assert np.all(np.isfinite(a)) and np.array_equal(a, b)


def test_trajectory_csv(tmp_path):
    traj = simulate(make_state(), hover, 0.1, Q)
    p = tmp_path / "t.csv"
    write_trajectory_csv(p, traj, Q.physics_dt)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,x,y,z,roll,pitch,yaw,vx,vy,vz,wx,wy,wz"
    assert len(lines) == len(traj) + 1
