"""Rigid-body quadrotor model (X configuration, Euler-angle attitude).

State vectors are plain float arrays of length 12 laid out as
``[x, y, z, roll, pitch, yaw, vx, vy, vz, wx, wy, wz]``: world-frame position
and linear velocity, ZYX Euler angles and body-frame angular rates.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields
from typing import Callable, Optional, Sequence

import numpy as np

STATE_DIM = 12
POS = slice(0, 3)
ATT = slice(3, 6)
LIN_VEL = slice(6, 9)
ANG_VEL = slice(9, 12)

STATE_COLUMNS = ("x", "y", "z", "roll", "pitch", "yaw",
                 "vx", "vy", "vz", "wx", "wy", "wz")

GIMBAL_MARGIN = 0.05


class DivergenceError(RuntimeError):
    """The simulation left the region where the model is meaningful."""

    def __init__(self, message: str, step_index: Optional[int] = None):
        super().__init__(message)
        self.step_index = step_index


class NonFiniteState(DivergenceError):
    pass


class GimbalLockError(DivergenceError):
    pass


class MotorBoundViolation(ValueError):
    pass


@dataclass(frozen=True)
class QuadParams:
    mass: float = 0.027
    arm_length: float = 0.0397
    inertia_diag: tuple = (1.4e-5, 1.4e-5, 2.17e-5)
    thrust_coeff: float = 3.16e-10
    torque_coeff: float = 7.94e-12
    gravity: float = 9.8
    rpm_max: float = 21702.0
    physics_dt: float = 1.0 / 240.0

    def __post_init__(self):
        object.__setattr__(self, "inertia_diag",
                           tuple(float(v) for v in self.inertia_diag))
        if len(self.inertia_diag) != 3:
            raise ValueError("inertia_diag must have 3 entries")
        for f in fields(self):
            vals = np.atleast_1d(getattr(self, f.name))
            if not np.all(np.isfinite(vals)) or np.any(vals <= 0):
                raise ValueError(f"QuadParams.{f.name} must be finite and > 0")
        if self.physics_dt > 1.0 / 240.0 + 1e-15:
            raise ValueError("QuadParams.physics_dt must be <= 1/240 s")

    @property
    def max_total_thrust(self) -> float:
        return 4.0 * self.thrust_coeff * self.rpm_max ** 2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["inertia_diag"] = list(self.inertia_diag)
        return d


def hover_rpm(params: QuadParams) -> float:
    return math.sqrt(params.mass * params.gravity / (4.0 * params.thrust_coeff))


def make_state(pos=(0.0, 0.0, 0.0), att=(0.0, 0.0, 0.0),
               lin_vel=(0.0, 0.0, 0.0), ang_vel=(0.0, 0.0, 0.0)) -> np.ndarray:
    return np.concatenate([pos, att, lin_vel, ang_vel]).astype(float)


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    a = math.fmod(a + math.pi, 2.0 * math.pi)
    if a <= 0.0:
        a += 2.0 * math.pi
    return a - math.pi


def rotor_forces_to_wrench(f, params: QuadParams):
    """Collective thrust and body torques for per-rotor thrusts ``f`` (CF2X sign pattern)."""
    a = params.arm_length / math.sqrt(2.0)
    c = params.torque_coeff / params.thrust_coeff
    f0, f1, f2, f3 = f
    thrust = f0 + f1 + f2 + f3
    tx = a * (f0 + f1 - f2 - f3)
    ty = a * (-f0 + f1 + f2 - f3)
    tz = c * (-f0 + f1 - f2 + f3)
    return thrust, tx, ty, tz


def wrench_to_rotor_forces(thrust, tx, ty, tz, params: QuadParams):
    """Exact inverse of :func:`rotor_forces_to_wrench` (forces may be negative)."""
    a = params.arm_length / math.sqrt(2.0)
    c = params.torque_coeff / params.thrust_coeff
    t4 = 0.25 * thrust
    x4 = 0.25 * tx / a
    y4 = 0.25 * ty / a
    z4 = 0.25 * tz / c
    return (t4 + x4 - y4 - z4,
            t4 + x4 + y4 + z4,
            t4 - x4 + y4 - z4,
            t4 - x4 - y4 + z4)


def check_motor_command(rpm, params: QuadParams) -> None:
    if len(rpm) != 4:
        raise MotorBoundViolation(f"expected 4 rotor speeds, got {len(rpm)}")
    wmax = params.rpm_max
    for w in rpm:
        if not 0.0 <= w <= wmax:
            raise MotorBoundViolation(f"rotor command {list(rpm)} outside [0, {wmax}]")


def step(state, rpm, ext_force, params: QuadParams, *, check: bool = True) -> np.ndarray:
    """Advance ``state`` by one ``physics_dt``.

    Velocities are updated first; positions then move with the mean of the old
    and new velocity (exact for piecewise-constant acceleration) and the Euler
    angles move with the updated body rates.
    """
    if isinstance(rpm, np.ndarray):
        rpm = rpm.tolist()
    if check:
        check_motor_command(rpm, params)
    if isinstance(state, np.ndarray):
        state = state.tolist()
    return np.array(step_tuple(state, rpm, ext_force, params))


def step_tuple(state, rpm, ext_force, params: QuadParams) -> tuple:
    """Unchecked :func:`step` on plain float sequences, for hot loops."""
    x, y, z, phi, theta, psi, vx, vy, vz, p, q, r = state
    if not math.isfinite(x + y + z + phi + theta + psi + vx + vy + vz + p + q + r):
        raise NonFiniteState("input state is not finite")
    dt = params.physics_dt
    kf = params.thrust_coeff
    w0, w1, w2, w3 = rpm
    thrust, tx, ty, tz = rotor_forces_to_wrench(
        (kf * w0 * w0, kf * w1 * w1, kf * w2 * w2, kf * w3 * w3), params)

    cphi, sphi = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    cpsi, spsi = math.cos(psi), math.sin(psi)
    # third column of Rz(psi) Ry(theta) Rx(phi)
    bx = cpsi * sth * cphi + spsi * sphi
    by = spsi * sth * cphi - cpsi * sphi
    bz = cth * cphi

    m = params.mass
    fx, fy, fz = ext_force
    ax = (thrust * bx + fx) / m
    ay = (thrust * by + fy) / m
    az = (thrust * bz + fz) / m - params.gravity

    jx, jy, jz = params.inertia_diag
    # Euler's equations, diagonal inertia
    dp = (tx - (jz - jy) * q * r) / jx
    dq = (ty - (jx - jz) * p * r) / jy
    dr = (tz - (jy - jx) * p * q) / jz

    nvx, nvy, nvz = vx + ax * dt, vy + ay * dt, vz + az * dt
    np_, nq, nr = p + dp * dt, q + dq * dt, r + dr * dt

    nx = x + 0.5 * (vx + nvx) * dt
    ny = y + 0.5 * (vy + nvy) * dt
    nz = z + 0.5 * (vz + nvz) * dt

    tth = sth / cth
    dphi = np_ + (sphi * nq + cphi * nr) * tth
    dtheta = cphi * nq - sphi * nr
    dpsi = (sphi * nq + cphi * nr) / cth
    nphi = wrap_angle(phi + dphi * dt)
    ntheta = wrap_angle(theta + dtheta * dt)
    npsi = wrap_angle(psi + dpsi * dt)

    out = (nx, ny, nz, nphi, ntheta, npsi, nvx, nvy, nvz, np_, nq, nr)
    if not math.isfinite(sum(out)):
        raise NonFiniteState("simulation produced a non-finite state")
    if abs(ntheta) > math.pi / 2 - GIMBAL_MARGIN:
        raise GimbalLockError(f"pitch {ntheta:.4f} rad too close to gimbal lock")
    return out


Controller = Callable[[float, np.ndarray], Sequence[float]]
ForceSchedule = Callable[[float], Sequence[float]]


def _no_force(t: float):
    return (0.0, 0.0, 0.0)


def simulate(initial, controller: Controller, duration: float, params: QuadParams,
             ext_schedule: Optional[ForceSchedule] = None,
             control_period: Optional[float] = None) -> np.ndarray:
    """Run the physics loop for ``duration`` seconds.

    ``controller(t, state)`` returns rotor speeds and is called whenever the
    simulation clock reaches the next control tick; its output is held until
    the next tick.  ``ext_schedule(t)`` is evaluated every physics step.
    Returns an array of shape ``(n_steps + 1, 12)`` including the initial state.
    """
    if duration <= 0:
        raise ValueError("duration must be positive")
    dt = params.physics_dt
    period = dt if control_period is None else float(control_period)
    n_steps = int(round(duration / dt))
    ext_schedule = ext_schedule or _no_force
    traj = np.empty((n_steps + 1, STATE_DIM))
    traj[0] = np.asarray(initial, dtype=float)
    state = tuple(traj[0].tolist())
    next_tick = 0
    cmd = None
    for k in range(n_steps):
        t = k * dt
        if cmd is None or t >= next_tick * period - 1e-12:
            cmd = controller(t, traj[k])
            if isinstance(cmd, np.ndarray):
                cmd = cmd.tolist()
            check_motor_command(cmd, params)
            next_tick += 1
        try:
            state = step_tuple(state, cmd, ext_schedule(t), params)
        except DivergenceError as exc:
            exc.step_index = k
            raise
        traj[k + 1] = state
    return traj


def write_trajectory_csv(path, traj, dt: float, t0: float = 0.0) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t",) + STATE_COLUMNS)
        for k, row in enumerate(np.asarray(traj)):
            w.writerow([f"{t0 + k * dt:.9g}"] + [f"{v:.9g}" for v in row])
