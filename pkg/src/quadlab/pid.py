"""Cascaded position -> attitude PID controller with 18 gains."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Tuple

import numpy as np

from .dynamics import QuadParams, wrap_angle, wrench_to_rotor_forces

GAIN_FIELDS = ("pos_kp", "pos_ki", "pos_kd", "att_kp", "att_ki", "att_kd")

POS_INTEGRAL_LIMIT = 2.0
ATT_INTEGRAL_LIMIT = 1.0
MAX_TILT = 0.3


def _vec3(v) -> Tuple[float, float, float]:
    t = tuple(float(x) for x in v)
    if len(t) != 3:
        raise ValueError(f"expected 3 values, got {len(t)}")
    return t


@dataclass(frozen=True)
class PidParams18:
    """Per-axis position gains (x, y, z) and attitude gains (roll, pitch, yaw)."""

    pos_kp: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    pos_ki: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    pos_kd: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    att_kp: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    att_ki: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    att_kd: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        for name in GAIN_FIELDS:
            v = _vec3(getattr(self, name))
            if not all(math.isfinite(x) and x >= 0.0 for x in v):
                raise ValueError(f"{name} gains must be finite and non-negative: {v}")
            object.__setattr__(self, name, v)

    def as_vector(self) -> np.ndarray:
        return np.array([x for name in GAIN_FIELDS for x in getattr(self, name)])

    @classmethod
    def from_vector(cls, vec) -> "PidParams18":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (18,):
            raise ValueError(f"expected 18 gains, got shape {vec.shape}")
        return cls(**{name: vec[3 * i:3 * i + 3] for i, name in enumerate(GAIN_FIELDS)})

    def to_dict(self) -> dict:
        return {name: list(getattr(self, name)) for name in GAIN_FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> "PidParams18":
        unknown = set(d) - set(GAIN_FIELDS)
        if unknown:
            raise ValueError(f"unknown gain fields: {sorted(unknown)}")
        missing = set(GAIN_FIELDS) - set(d)
        if missing:
            raise ValueError(f"missing gain fields: {sorted(missing)}")
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "PidParams18":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "PidParams18":
        with open(path) as fh:
            return cls.from_json(fh.read())


# Stable reference gains for the default QuadParams at a 50 Hz control rate.
GOLDEN_GAINS = PidParams18(
    pos_kp=(3.0, 3.0, 4.0),
    pos_ki=(0.3, 0.3, 0.5),
    pos_kd=(2.5, 2.5, 3.0),
    att_kp=(0.003, 0.003, 0.002),
    att_ki=(0.0005, 0.0005, 0.0),
    att_kd=(0.0004, 0.0004, 0.0003),
)


class PidState(NamedTuple):
    pos_integral: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    att_integral: Tuple[float, float, float] = (0.0, 0.0, 0.0)


class PidLimits(NamedTuple):
    """Anti-windup clamps and the tilt limit of the position loop."""

    pos_integral: float = POS_INTEGRAL_LIMIT
    att_integral: float = ATT_INTEGRAL_LIMIT
    max_tilt: float = MAX_TILT


def _clip(v: float, lim: float) -> float:
    return -lim if v < -lim else (lim if v > lim else v)


def position_control(state, target_pos, target_vel, p: PidParams18, s: PidState,
                     dt: float, params: QuadParams, limits: PidLimits = PidLimits()):
    """Position loop: returns ``(desired_att, collective_thrust, new_state)``.

    The horizontal acceleration demand maps to roll/pitch through the
    small-angle relation rotated by the current yaw; desired yaw is always 0.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(state, np.ndarray):
        state = state.tolist()
    kp, ki, kd = p.pos_kp, p.pos_ki, p.pos_kd
    acc = []
    integ = []
    for i in range(3):
        err = target_pos[i] - state[i]
        verr = target_vel[i] - state[6 + i]
        it = _clip(s.pos_integral[i] + err * dt, limits.pos_integral)
        integ.append(it)
        acc.append(kp[i] * err + ki[i] * it + kd[i] * verr)
    g = params.gravity
    psi = state[5]
    cpsi, spsi = math.cos(psi), math.sin(psi)
    ax, ay, az = acc
    pitch_des = _clip((ax * cpsi + ay * spsi) / g, limits.max_tilt)
    roll_des = _clip((ax * spsi - ay * cpsi) / g, limits.max_tilt)
    thrust = params.mass * (g + az)
    thrust = min(max(thrust, 0.0), params.max_total_thrust)
    return (roll_des, pitch_des, 0.0), thrust, PidState(tuple(integ), s.att_integral)


def attitude_control(state, desired_att, collective_thrust, p: PidParams18, s: PidState,
                     dt: float, params: QuadParams, limits: PidLimits = PidLimits()):
    """Attitude loop and mixer: returns ``(rpm, new_state)``.

    ``rpm`` is a 4-tuple clamped to ``[0, rpm_max]``; torque demands beyond the
    rotor limits saturate silently.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if isinstance(state, np.ndarray):
        state = state.tolist()
    kp, ki, kd = p.att_kp, p.att_ki, p.att_kd
    torque = []
    integ = []
    for i in range(3):
        err = wrap_angle(desired_att[i] - state[3 + i])
        it = _clip(s.att_integral[i] + err * dt, limits.att_integral)
        integ.append(it)
        torque.append(kp[i] * err + ki[i] * it - kd[i] * state[9 + i])
    forces = wrench_to_rotor_forces(collective_thrust, *torque, params)
    kf, wmax = params.thrust_coeff, params.rpm_max
    rpm = tuple(min(math.sqrt(f / kf), wmax) if f > 0.0 else 0.0 for f in forces)
    return rpm, PidState(s.pos_integral, tuple(integ))


def goto_setpoint(state, setpoint, p: PidParams18, s: PidState, dt: float,
                  params: QuadParams, limits: PidLimits = PidLimits()):
    """One control tick toward a position setpoint with zero target velocity."""
    att, thrust, s = position_control(state, setpoint, (0.0, 0.0, 0.0), p, s, dt, params, limits)
    return attitude_control(state, att, thrust, p, s, dt, params, limits)
