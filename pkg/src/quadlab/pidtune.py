"""PID gain tuning with TD3 on circle/helix tracking."""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dynamics import DivergenceError, QuadParams, make_state, step_tuple
from .pid import PidLimits, PidParams18, PidState, goto_setpoint
from .td3 import TD3Agent

TRACKING_COLUMNS = ("t", "target_x", "target_y", "target_z", "x", "y", "z", "err")

# Per-field [low, high] search ranges, in PidParams18 field order.
DEFAULT_GAIN_BOX = {
    "pos_kp": (0.0, 4.0),
    "pos_ki": (0.0, 1.0),
    "pos_kd": (0.0, 4.0),
    "att_kp": (0.0, 0.01),
    "att_ki": (0.0, 0.002),
    "att_kd": (0.0, 0.001),
}


@dataclass(frozen=True)
class TrajectorySpec:
    kind: str = "circle"
    radius: float = 0.3
    height: float = 0.5
    angular_rate: float = 2.0 * math.pi / 6.0
    duration: float = 6.0
    center: Tuple[float, float, float] = (0.0, 0.0, 0.5)

    def __post_init__(self):
        if self.kind not in ("circle", "helix"):
            raise ValueError(f"trajectory kind must be 'circle' or 'helix', got {self.kind!r}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not self.radius > 0 or not self.duration > 0 or not self.angular_rate > 0:
            raise ValueError("radius, duration and angular_rate must be > 0")
        if self.kind == "helix" and not self.height > 0:
            raise ValueError("helix height must be > 0")

    def position(self, t: float) -> Tuple[float, float, float]:
        th = self.angular_rate * t
        cx, cy, cz = self.center
        z = cz + (self.height * t / self.duration if self.kind == "helix" else 0.0)
        return (cx + self.radius * math.cos(th), cy + self.radius * math.sin(th), z)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["center"] = list(self.center)
        return d


CIRCLE = TrajectorySpec("circle", duration=6.0)
HELIX = TrajectorySpec("helix", duration=12.0)


def sample_trajectory(spec: TrajectorySpec, control_frequency: float = 50.0) -> np.ndarray:
    """Waypoints at ``t_k = k / control_frequency`` for ``k = 0..duration*f``."""
    n = int(round(spec.duration * control_frequency))
    return np.array([spec.position(k / control_frequency) for k in range(n + 1)])


class GainBox:
    """Affine map between ``[-1, 1]^18`` and per-gain search ranges."""

    def __init__(self, ranges: Optional[dict] = None):
        ranges = {**DEFAULT_GAIN_BOX, **(ranges or {})}
        lo, hi = [], []
        for name in DEFAULT_GAIN_BOX:
            a, b = ranges[name]
            lo.extend(np.broadcast_to(np.asarray(a, dtype=float), (3,)))
            hi.extend(np.broadcast_to(np.asarray(b, dtype=float), (3,)))
        self.low = np.array(lo)
        self.high = np.array(hi)
        if np.any(self.low < 0) or np.any(self.high <= self.low):
            raise ValueError("gain ranges must satisfy 0 <= low < high")

    def to_gains(self, action) -> PidParams18:
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        return PidParams18.from_vector(self.low + 0.5 * (a + 1.0) * (self.high - self.low))

    def to_action(self, gains: PidParams18) -> np.ndarray:
        v = np.clip(gains.as_vector(), self.low, self.high)
        return 2.0 * (v - self.low) / (self.high - self.low) - 1.0

    def sample(self, rng) -> PidParams18:
        return PidParams18.from_vector(rng.uniform(self.low, self.high))

    def to_dict(self) -> dict:
        return {name: [self.low[3 * i:3 * i + 3].tolist(), self.high[3 * i:3 * i + 3].tolist()]
                for i, name in enumerate(DEFAULT_GAIN_BOX)}


class Tracker:
    """Flies a waypoint sequence tick by tick, carrying state between segments."""

    def __init__(self, waypoints, quad: QuadParams, control_frequency=50.0,
                 max_track_error=1.0, record=False, limits: PidLimits = PidLimits()):
        self.limits = limits
        self.waypoints = np.asarray(waypoints, dtype=float)
        self.quad = quad
        self.period = 1.0 / control_frequency
        self.max_track_error = max_track_error
        self.state = tuple(make_state(pos=self.waypoints[0]).tolist())
        self.pid = PidState()
        self.tick = 0
        self._k = 0
        self.errors: List[float] = []
        self.rows = [] if record else None

    @property
    def n_ticks(self) -> int:
        return len(self.waypoints) - 1

    @property
    def finished(self) -> bool:
        return self.tick >= self.n_ticks

    def fly(self, gains: PidParams18, n_ticks: int) -> List[float]:
        """Track the next ``n_ticks`` waypoints; returns per-tick position errors.

        Raises :class:`DivergenceError` if the model diverges or the error
        exceeds ``max_track_error``.
        """
        quad, dt, period = self.quad, self.quad.physics_dt, self.period
        first = len(self.errors)
        state, pid = self.state, self.pid
        for _ in range(min(n_ticks, self.n_ticks - self.tick)):
            wp = tuple(self.waypoints[self.tick + 1].tolist())
            rpm, pid = goto_setpoint(state, wp, gains, pid, period, quad, self.limits)
            end = (self.tick + 1) * period - 1e-9
            while self._k * dt < end:
                state = step_tuple(state, rpm, (0.0, 0.0, 0.0), quad)
                self._k += 1
            self.state, self.pid = state, pid
            self.tick += 1
            err = math.dist(state[:3], wp)
            self.errors.append(err)
            if self.rows is not None:
                self.rows.append((self.tick * period, *wp, *state[:3], err))
            if not err <= self.max_track_error:
                raise DivergenceError(f"tracking error {err:.3f} m exceeds limit", self.tick)
        return self.errors[first:]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACKING_COLUMNS)
            for row in self.rows:
                w.writerow([f"{v:.9g}" for v in row])


@dataclass
class RolloutResult:
    total_reward: float
    errors: np.ndarray
    diverged: bool
    tracker: Tracker = field(repr=False)

    @property
    def rmse(self) -> float:
        if self.diverged or len(self.errors) == 0:
            return math.inf
        return float(np.sqrt(np.mean(self.errors ** 2)))


def rollout_gains(p: PidParams18, spec: TrajectorySpec, quad: QuadParams = QuadParams(),
                  control_frequency: float = 50.0, divergence_penalty: float = -200.0,
                  record: bool = False, limits: PidLimits = PidLimits()) -> RolloutResult:
    """Fly the whole trajectory under fixed gains; reward is ``-sum(err^2)``."""
    tr = Tracker(sample_trajectory(spec, control_frequency), quad, control_frequency,
                 record=record, limits=limits)
    diverged = False
    try:
        tr.fly(p, tr.n_ticks)
    except DivergenceError:
        diverged = True
    e = np.asarray(tr.errors)
    total = -float(np.sum(e ** 2)) + (divergence_penalty if diverged else 0.0)
    return RolloutResult(total, e, diverged, tr)


class PidTuneEnv:
    """Episodic tuning task: each step picks 18 gains and flies one segment.

    Observation is position and Euler angles (6 values).  An episode is one
    pass over the trajectory in segments of ``segment_duration`` seconds.
    """

    observation_dim = 6
    action_dim = 18

    def __init__(self, spec: TrajectorySpec = CIRCLE, quad: QuadParams = QuadParams(),
                 gain_box: Optional[GainBox] = None, control_frequency: float = 50.0,
                 segment_duration: float = 2.0, divergence_penalty: float = -200.0,
                 limits: PidLimits = PidLimits()):
        self.spec = spec
        self.limits = limits
        self.quad = quad
        self.gain_box = gain_box or GainBox()
        self.control_frequency = control_frequency
        self.segment_ticks = int(round(segment_duration * control_frequency))
        if self.segment_ticks < 1:
            raise ValueError("segment_duration too short for the control frequency")
        self.divergence_penalty = divergence_penalty
        self.waypoints = sample_trajectory(spec, control_frequency)
        self.tracker = None

    def _obs(self):
        return np.array(self.tracker.state[:6])

    def reset(self, seed=None):
        self.tracker = Tracker(self.waypoints, self.quad, self.control_frequency,
                               limits=self.limits)
        return self._obs()

    def step(self, action):
        gains = self.gain_box.to_gains(action)
        info = {"gains": gains, "failure": False, "truncated": False}
        try:
            errors = self.tracker.fly(gains, self.segment_ticks)
            reward = -float(np.sum(np.square(errors)))
            done = self.tracker.finished
        except DivergenceError as exc:
            reward = self.divergence_penalty
            info["failure"] = True
            info["error"] = str(exc)
            done = True
        return self._obs(), reward, done, info


class PidTuner(BaseEstimator):
    """Tune :class:`PidParams18` with TD3 on a training trajectory.

    After ``fit``, ``best_params_`` holds the best gains encountered: the
    ``top_k`` best-scoring segment candidates plus the final policy's proposal
    are re-flown over the full training trajectory and the highest total
    reward wins.
    """

    def __init__(self, train_trajectory: TrajectorySpec = CIRCLE, gain_ranges=None,
                 actor_arch=(50, 50, 18), critic_arch=(50, 50, 1), learning_rate=1e-3,
                 total_timesteps=1000, warmup_steps=100, batch_size=100, gamma=0.99,
                 tau=0.005, policy_delay=2, segment_duration=2.0, control_frequency=50.0,
                 divergence_penalty=-200.0, top_k=10, seed=0, quad: QuadParams = QuadParams(),
                 limits: PidLimits = PidLimits()):
        self.train_trajectory = train_trajectory
        self.gain_ranges = gain_ranges
        self.actor_arch = actor_arch
        self.critic_arch = critic_arch
        self.learning_rate = learning_rate
        self.total_timesteps = total_timesteps
        self.warmup_steps = warmup_steps
        self.batch_size = batch_size
        self.gamma = gamma
        self.tau = tau
        self.policy_delay = policy_delay
        self.segment_duration = segment_duration
        self.control_frequency = control_frequency
        self.divergence_penalty = divergence_penalty
        self.top_k = top_k
        self.seed = seed
        self.quad = quad
        self.limits = limits

    def make_env(self) -> PidTuneEnv:
        return PidTuneEnv(self.train_trajectory, self.quad, GainBox(self.gain_ranges),
                          self.control_frequency, self.segment_duration, self.divergence_penalty,
                          self.limits)

    def fit(self, X=None, y=None):
        env = self.make_env()
        candidates = []

        def record(agent, t, transition):
            _, action, reward, _, _, info = transition
            candidates.append((reward, t, info["gains"]))

        self.agent_ = TD3Agent(
            actor_arch=self.actor_arch, critic_arch=self.critic_arch,
            learning_rate=self.learning_rate, total_timesteps=self.total_timesteps,
            warmup_steps=self.warmup_steps, batch_size=self.batch_size, gamma=self.gamma,
            tau=self.tau, policy_delay=self.policy_delay, noise_mean=0.0, noise_cov=0.5,
            buffer_capacity=max(self.total_timesteps, 1), seed=self.seed,
        ).fit(env, callback=record)
        self.training_log_ = self.agent_.training_log_

        candidates.sort(key=lambda c: (-c[0], c[1]))
        pool = [c[2] for c in candidates[: self.top_k]]
        pool.append(env.gain_box.to_gains(self.agent_.predict(env.reset())))
        scored = []
        for i, g in enumerate(pool):
            res = rollout_gains(g, self.train_trajectory, self.quad, self.control_frequency,
                                self.divergence_penalty, limits=self.limits)
            scored.append((res.total_reward, -i, g))
        best = max(scored, key=lambda s: (s[0], s[1]))
        self.best_params_ = best[2]
        self.best_train_reward_ = best[0]
        return self

    def score(self, spec: TrajectorySpec = HELIX) -> float:
        """Negative tracking RMSE of ``best_params_`` on ``spec``."""
        check_is_fitted(self, "best_params_")
        return -rollout_gains(self.best_params_, spec, self.quad, self.control_frequency,
                              self.divergence_penalty, limits=self.limits).rmse
