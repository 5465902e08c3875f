"""Waypoint navigation environment: RL picks relative moves, PID flies them."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from .disturbance import DisturbanceSpec, TrainingDisturbanceSchedule, force_at, schedule_next
from .dynamics import (STATE_DIM, DivergenceError, QuadParams, make_state, step_tuple,
                       write_trajectory_csv)
from .pid import GOLDEN_GAINS, PidLimits, PidParams18, PidState, goto_setpoint

MODES = ("pure_rl", "open_loop", "closed_loop_pid")
REWARD_MODES = ("commanded", "achieved")
STEP_COLUMNS = ("step", "ax", "ay", "az", "reward", "done")


def reward_fn(pos, displacement, target) -> float:
    """Negative squared distance between ``pos + displacement`` and ``target``."""
    return -sum((p + d - t) ** 2 for p, d, t in zip(pos, displacement, target))


def scale_action(action, action_scale: float = 0.05) -> np.ndarray:
    return action_scale * np.clip(np.asarray(action, dtype=float), -1.0, 1.0)


@dataclass(frozen=True)
class NavConfig:
    target: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    initial_pos: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    action_scale: float = 0.05
    control_frequency: float = 50.0
    action_window: float = 2.0
    execution_mode: str = "closed_loop_pid"
    max_rl_steps: int = 64
    success_radius: float = 0.05
    workspace_bound: float = 2.0
    reward_mode: str = "commanded"
    failure_penalty: float = -100.0
    init_jitter: float = 0.0
    geofence_margin: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(float(v) for v in self.target))
        object.__setattr__(self, "initial_pos", tuple(float(v) for v in self.initial_pos))
        if len(self.target) != 3 or len(self.initial_pos) != 3:
            raise ValueError("target and initial_pos must have 3 components")
        if not self.action_scale > 0:
            raise ValueError("action_scale must be > 0")
        if not self.control_frequency > 0 or not self.action_window > 0:
            raise ValueError("control_frequency and action_window must be > 0")
        ticks = self.control_frequency * self.action_window
        if abs(ticks - round(ticks)) > 1e-9 or round(ticks) < 1:
            raise ValueError("control_frequency * action_window must be a positive integer")
        if self.execution_mode not in MODES:
            raise ValueError(f"execution_mode must be one of {MODES}")
        if self.reward_mode not in REWARD_MODES:
            raise ValueError(f"reward_mode must be one of {REWARD_MODES}")
        if int(self.max_rl_steps) < 1 or not self.success_radius > 0 or not self.workspace_bound > 0:
            raise ValueError("max_rl_steps, success_radius and workspace_bound must be positive")
        if self.init_jitter < 0:
            raise ValueError("init_jitter must be >= 0")
        if not 0 <= self.geofence_margin < self.workspace_bound:
            raise ValueError("geofence_margin must lie in [0, workspace_bound)")

    @property
    def ticks_per_action(self) -> int:
        if self.execution_mode == "pure_rl":
            return 1
        return int(round(self.control_frequency * self.action_window))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["target"] = list(self.target)
        d["initial_pos"] = list(self.initial_pos)
        return d


class NavEnv:
    """Gym-style environment (``reset``/``step``) over the quadrotor model.

    In ``closed_loop_pid`` mode each action is a displacement in the unit cube
    scaled by ``action_scale``; the PID cascade tracks ``position + d`` for the
    full action window.  ``pure_rl`` takes four rotor commands for one control
    tick and ``open_loop`` holds the first PID output for the whole window.

    ``disturbance`` may be a :class:`DisturbanceSpec` (fixed, evaluated on the
    episode clock) or a :class:`TrainingDisturbanceSchedule` (re-drawn from the
    global RL step counter).
    """

    observation_dim = STATE_DIM

    def __init__(self, config: NavConfig = NavConfig(), quad: QuadParams = QuadParams(),
                 gains: PidParams18 = GOLDEN_GAINS, disturbance=None, record: bool = False,
                 limits: PidLimits = PidLimits()):
        self.config = config
        self.limits = limits
        self.quad = quad
        self.gains = gains
        self.disturbance = disturbance
        self.record = record
        self.global_step = 0
        self._state = None

    @property
    def action_dim(self) -> int:
        return 4 if self.config.execution_mode == "pure_rl" else 3

    @property
    def state(self) -> np.ndarray:
        return np.array(self._state)

    def reset(self, seed=None) -> np.ndarray:
        cfg = self.config
        pos = np.asarray(cfg.initial_pos, dtype=float)
        if cfg.init_jitter > 0:
            rng = np.random.default_rng(seed)
            pos = pos + rng.uniform(-cfg.init_jitter, cfg.init_jitter, 3)
        self._state = tuple(make_state(pos=pos).tolist())
        self._pid = PidState()
        self._k = 0
        self._next_tick = 0
        self._steps = 0
        self._done = False
        self.trace = [self._state] if self.record else None
        self.step_rows = [] if self.record else None
        return np.array(self._state)

    # -- inner execution -----------------------------------------------------

    def _force(self, t):
        d = self.disturbance
        if d is None:
            return (0.0, 0.0, 0.0)
        if isinstance(d, TrainingDisturbanceSchedule):
            return force_at(schedule_next(d, self.global_step), t)
        return force_at(d, t)

    def _is_tick(self):
        period = 1.0 / self.config.control_frequency
        return self._k * self.quad.physics_dt >= self._next_tick * period - 1e-9

    def _run_ticks(self, n_ticks, command, setpoint):
        """Advance the physics through ``n_ticks`` control ticks.

        ``command(state)`` is called at each tick and returns rotor speeds or
        ``None`` to hold the previous command.  Returns the distance to
        ``setpoint`` at the end of the window and the largest distance to the
        episode target seen at the ticks (window start and end included).
        """
        quad = self.quad
        dt = quad.physics_dt
        bound = self.config.workspace_bound
        state = self._state
        rpm = None
        ticks_done = 0
        far = 0.0
        sx, sy, sz = setpoint
        tx, ty, tz = self.config.target
        while True:
            if self._is_tick():
                x, y, z = state[0], state[1], state[2]
                far = max(far, math.sqrt((x - tx) ** 2 + (y - ty) ** 2 + (z - tz) ** 2))
                if ticks_done == n_ticks:
                    dev = math.sqrt((x - sx) ** 2 + (y - sy) ** 2 + (z - sz) ** 2)
                    break
                new = command(state)
                if new is not None:
                    rpm = new
                self._next_tick += 1
                ticks_done += 1
            state = step_tuple(state, rpm, self._force(self._k * dt), quad)
            self._k += 1
            self._state = state
            if self.record:
                self.trace.append(state)
            if max(abs(state[0]), abs(state[1]), abs(state[2])) > bound:
                raise DivergenceError("left the workspace", self._k)
        return dev, far

    def execute_closed_loop(self, setpoint):
        quad, gains, period = self.quad, self.gains, 1.0 / self.config.control_frequency

        def command(state):
            rpm, self._pid = goto_setpoint(state, setpoint, gains, self._pid, period, quad, self.limits)
            return rpm

        return self._run_ticks(self.config.ticks_per_action, command, setpoint)

    def execute_open_loop(self, setpoint):
        quad, gains, period = self.quad, self.gains, 1.0 / self.config.control_frequency
        first = []

        def command(state):
            if first:
                return None
            rpm, self._pid = goto_setpoint(state, setpoint, gains, self._pid, period, quad, self.limits)
            first.append(rpm)
            return rpm

        return self._run_ticks(self.config.ticks_per_action, command, setpoint)

    def execute_pure_rl(self, rpm_action):
        """Map an action in ``[-1, 1]^4`` affinely onto ``[0, rpm_max]`` for one tick."""
        a = np.clip(np.asarray(rpm_action, dtype=float), -1.0, 1.0)
        rpm = tuple((0.5 * (a + 1.0) * self.quad.rpm_max).tolist())
        return self._run_ticks(1, lambda state: rpm, self._state[:3])

    # -- gym surface ---------------------------------------------------------

    def step(self, action):
        if self._state is None or self._done:
            raise RuntimeError("call reset() before step()")
        cfg = self.config
        action = np.asarray(action, dtype=float)
        if action.shape != (self.action_dim,) or not np.all(np.isfinite(action)):
            raise ValueError(f"action must be {self.action_dim} finite values, got {action}")
        pos = self._state[:3]
        info = {"failure": False, "success": False, "truncated": False}
        if cfg.execution_mode == "pure_rl":
            disp = (0.0, 0.0, 0.0)
            setpoint = pos
        else:
            disp = tuple(scale_action(action, cfg.action_scale).tolist())
            # the controller is never asked to fly outside the fence
            lim = cfg.workspace_bound - cfg.geofence_margin
            setpoint = tuple(min(max(p + d, -lim), lim) for p, d in zip(pos, disp))
        info["setpoint"] = setpoint
        try:
            if cfg.execution_mode == "closed_loop_pid":
                dev, far = self.execute_closed_loop(setpoint)
            elif cfg.execution_mode == "open_loop":
                dev, far = self.execute_open_loop(setpoint)
            else:
                dev, far = self.execute_pure_rl(action)
        except DivergenceError as exc:
            info["failure"] = True
            info["error"] = str(exc)
            dev = far = math.inf
        new_pos = self._state[:3]
        if cfg.reward_mode == "achieved" or cfg.execution_mode == "pure_rl":
            reward = reward_fn(new_pos, (0.0, 0.0, 0.0), cfg.target)
        else:
            reward = reward_fn(pos, disp, cfg.target)
        info["max_deviation"] = dev
        info["terminal_distance"] = math.dist(new_pos, cfg.target)
        self._steps += 1
        self.global_step += 1
        done = False
        if info["failure"]:
            reward += cfg.failure_penalty
            done = True
        elif far < cfg.success_radius:
            # inside the radius for the whole window
            info["success"] = True
            done = True
        if not done and self._steps >= cfg.max_rl_steps:
            info["truncated"] = True
            done = True
        self._done = done
        if self.record:
            self.step_rows.append((self._steps, *action[:3].tolist(), reward, int(done)))
        return np.array(self._state), float(reward), done, info

    def write_trace(self, dynamics_csv=None, steps_csv=None) -> None:
        if not self.record:
            raise RuntimeError("environment was not created with record=True")
        if dynamics_csv is not None:
            write_trajectory_csv(dynamics_csv, self.trace, self.quad.physics_dt)
        if steps_csv is not None:
            with open(steps_csv, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(STEP_COLUMNS)
                for row in self.step_rows:
                    w.writerow([row[0]] + [f"{v:.9g}" for v in row[1:5]] + [row[5]])
