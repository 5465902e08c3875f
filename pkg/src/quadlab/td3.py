"""Twin-delayed DDPG on top of :mod:`quadlab.nn`."""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import CheckpointError, ConfigError, InsufficientBuffer, TrainingError
from .nn import DimensionMismatch, Adam, Mlp

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


class GaussianNoise:
    """Multivariate normal sampler ``mean + L z`` with ``L L^T = cov``."""

    def __init__(self, mean=(0.0, 0.0, 0.0), cov=None, seed=None):
        self.mean = np.asarray(mean, dtype=float)
        d = self.mean.shape[0]
        cov = 0.5 * np.eye(d) if cov is None else np.asarray(cov, dtype=float)
        if cov.shape != (d, d):
            raise ValueError(f"covariance shape {cov.shape} does not match mean of length {d}")
        if not np.allclose(cov, cov.T, rtol=0.0, atol=0.0):
            raise ValueError("covariance must be symmetric")
        try:
            self.chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc
        self.cov = cov
        self.rng = np.random.default_rng(seed)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def sample(self) -> np.ndarray:
        return self.mean + self.chol @ self.rng.standard_normal(self.dim)

    def sample_n(self, n: int) -> np.ndarray:
        return self.mean + self.rng.standard_normal((n, self.dim)) @ self.chol.T


def select_action(actor: Mlp, obs, noise: Optional[GaussianNoise] = None) -> np.ndarray:
    """Actor output plus optional exploration noise, clipped to ``[-1, 1]``."""
    a = actor.forward(obs)
    if noise is not None:
        a = a + noise.sample()
    return np.clip(a, -1.0, 1.0)


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.reward)


class ReplayBuffer:
    """Ring buffer with uniform sampling."""

    def __init__(self, capacity, obs_dim, action_dim, seed=None):
        self.capacity = int(capacity)
        self.obs = np.zeros((self.capacity, obs_dim))
        self.action = np.zeros((self.capacity, action_dim))
        self.reward = np.zeros(self.capacity)
        self.next_obs = np.zeros((self.capacity, obs_dim))
        self.done = np.zeros(self.capacity)
        self.size = 0
        self.pos = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return self.size

    def add(self, obs, action, reward, next_obs, done) -> None:
        i = self.pos
        self.obs[i] = obs
        self.action[i] = action
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.done[i] = float(done)
        self.pos = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch_size: int) -> Batch:
        if self.size < batch_size:
            raise InsufficientBuffer(f"buffer holds {self.size} transitions, need {batch_size}")
        idx = self.rng.integers(0, self.size, size=batch_size)
        return Batch(self.obs[idx], self.action[idx], self.reward[idx],
                     self.next_obs[idx], self.done[idx])


class TD3Agent(BaseEstimator):
    """TD3 learner with an sklearn-style surface.

    ``fit(env)`` trains against a gym-style environment exposing
    ``observation_dim``, ``action_dim``, ``reset(seed=...)`` and ``step(a)``;
    ``predict(obs)`` returns the deterministic (noise-free) action.
    ``actor_arch`` and ``critic_arch`` list hidden sizes followed by the output
    width, so the critic arch always ends in 1.
    """

    def __init__(self, actor_arch=(50, 100, 500, 100, 50, 3),
                 critic_arch=(50, 100, 500, 100, 50, 1), learning_rate=1e-3,
                 total_timesteps=100_000, gamma=0.99, tau=0.005, policy_delay=2,
                 target_noise_std=0.2, target_noise_clip=0.5, batch_size=100,
                 buffer_capacity=100_000, warmup_steps=1000,
                 noise_mean=(0.0, 0.0, 0.0), noise_cov=0.5, hidden_activation="relu",
                 seed=0):
        self.actor_arch = actor_arch
        self.critic_arch = critic_arch
        self.learning_rate = learning_rate
        self.total_timesteps = total_timesteps
        self.gamma = gamma
        self.tau = tau
        self.policy_delay = policy_delay
        self.target_noise_std = target_noise_std
        self.target_noise_clip = target_noise_clip
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.warmup_steps = warmup_steps
        self.noise_mean = noise_mean
        self.noise_cov = noise_cov
        self.hidden_activation = hidden_activation
        self.seed = seed

    # -- setup ---------------------------------------------------------------

    def _validate_params(self, obs_dim, action_dim):
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError(f"td3.gamma must be in [0, 1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError(f"td3.tau must be in (0, 1], got {self.tau}")
        for name in ("policy_delay", "batch_size", "buffer_capacity", "total_timesteps"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"td3.{name} must be >= 1")
        if self.warmup_steps < 0:
            raise ConfigError("td3.warmup_steps must be >= 0")
        if self.learning_rate <= 0 or self.target_noise_std < 0 or self.target_noise_clip < 0:
            raise ConfigError("td3.learning_rate must be > 0 and target noise settings >= 0")
        if int(self.actor_arch[-1]) != action_dim:
            raise ConfigError(f"td3.actor_arch ends in {self.actor_arch[-1]} "
                              f"but the environment has {action_dim} action dimensions")
        if int(self.critic_arch[-1]) != 1:
            raise ConfigError(f"td3.critic_arch must end in 1, got {self.critic_arch[-1]}")
        if len(np.atleast_1d(self.noise_mean)) not in (1, action_dim):
            raise ConfigError(f"td3.noise_mean must have {action_dim} entries")

    def _noise_params(self, action_dim):
        mean = np.broadcast_to(np.asarray(self.noise_mean, dtype=float), (action_dim,)).copy()
        cov = np.asarray(self.noise_cov, dtype=float)
        if cov.ndim == 0:
            cov = float(cov) * np.eye(action_dim)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        return mean, cov

    def _initialize(self, obs_dim, action_dim):
        self._validate_params(obs_dim, action_dim)
        ss = np.random.SeedSequence(self.seed)
        (s_actor, s_c1, s_c2, s_explore, s_target, s_buffer, s_warmup,
         s_env) = ss.spawn(8)
        self.obs_dim_ = obs_dim
        self.action_dim_ = action_dim
        act = self.hidden_activation
        self.actor_ = Mlp([obs_dim, *self.actor_arch], act, "tanh", rng=s_actor)
        self.critic1_ = Mlp([obs_dim + action_dim, *self.critic_arch], act, "linear", rng=s_c1)
        self.critic2_ = Mlp([obs_dim + action_dim, *self.critic_arch], act, "linear", rng=s_c2)
        self.actor_target_ = self.actor_.copy()
        self.critic1_target_ = self.critic1_.copy()
        self.critic2_target_ = self.critic2_.copy()
        lr = self.learning_rate
        self._actor_opt = Adam(self.actor_.parameters(), lr)
        self._critic1_opt = Adam(self.critic1_.parameters(), lr)
        self._critic2_opt = Adam(self.critic2_.parameters(), lr)
        mean, cov = self._noise_params(action_dim)
        self.exploration_noise_ = GaussianNoise(mean, cov, seed=s_explore)
        self._target_rng = np.random.default_rng(s_target)
        self._warmup_rng = np.random.default_rng(s_warmup)
        self._env_seeds = np.random.default_rng(s_env)
        self.buffer_ = ReplayBuffer(self.buffer_capacity, obs_dim, action_dim, seed=s_buffer)
        self.n_updates_ = 0
        return self

    def initialize(self, obs_dim: int, action_dim: int) -> "TD3Agent":
        """Build networks, optimizers and buffer without training."""
        return self._initialize(obs_dim, action_dim)

    # -- learning ------------------------------------------------------------

    def td_target(self, batch: Batch, smoothing_noise=None):
        """Clipped double-Q target; returns ``(y, q1_target, q2_target)``."""
        n = len(batch)
        if smoothing_noise is None:
            smoothing_noise = self._target_rng.standard_normal((n, self.action_dim_)) * self.target_noise_std
        smoothing_noise = np.clip(smoothing_noise, -self.target_noise_clip, self.target_noise_clip)
        next_action = np.clip(self.actor_target_.forward(batch.next_obs) + smoothing_noise, -1.0, 1.0)
        sa = np.hstack([batch.next_obs, next_action])
        q1 = self.critic1_target_.forward(sa)[:, 0]
        q2 = self.critic2_target_.forward(sa)[:, 0]
        bootstrap = self.gamma * (1.0 - batch.done)
        y = batch.reward + bootstrap * np.minimum(q1, q2)
        return y, batch.reward + bootstrap * q1, batch.reward + bootstrap * q2

    def train_step(self, batch: Batch) -> dict:
        """One critic update and, every ``policy_delay`` calls, an actor/target update."""
        n = len(batch)
        y, _, _ = self.td_target(batch)
        sa = np.hstack([batch.obs, batch.action])
        critic_loss = 0.0
        for critic, opt in ((self.critic1_, self._critic1_opt), (self.critic2_, self._critic2_opt)):
            q, cache = critic.forward_cache(sa)
            diff = q[:, 0] - y
            critic_loss += float(np.mean(diff * diff))
            grads, _ = critic.backward(cache, (2.0 / n) * diff[:, None])
            opt.step(grads)
        self.n_updates_ += 1
        actor_loss = None
        if self.n_updates_ % int(self.policy_delay) == 0:
            a, a_cache = self.actor_.forward_cache(batch.obs)
            q, q_cache = self.critic1_.forward_cache(np.hstack([batch.obs, a]))
            actor_loss = -float(np.mean(q))
            _, d_sa = self.critic1_.backward(q_cache, np.full((n, 1), -1.0 / n))
            grads, _ = self.actor_.backward(a_cache, d_sa[:, self.obs_dim_:])
            self._actor_opt.step(grads)
            self.actor_target_.polyak_update(self.actor_, self.tau)
            self.critic1_target_.polyak_update(self.critic1_, self.tau)
            self.critic2_target_.polyak_update(self.critic2_, self.tau)
        return {"critic_loss": critic_loss, "actor_loss": actor_loss}

    def fit(self, env, callback=None):
        """Run warmup plus the TD3 interaction loop for ``total_timesteps`` steps.

        ``callback(agent, timestep, transition)`` is called after each step when
        given.  Episodes cut by a time limit (``info["truncated"]``) keep their
        bootstrap term.
        """
        self._initialize(int(env.observation_dim), int(env.action_dim))
        self.training_log_ = []
        last = {"critic_loss": None, "actor_loss": None}
        episode, ep_return = 0, 0.0
        obs = env.reset(seed=int(self._env_seeds.integers(2**31)))
        for t in range(int(self.total_timesteps)):
            if t < self.warmup_steps:
                action = self._warmup_rng.uniform(-1.0, 1.0, self.action_dim_)
            else:
                action = select_action(self.actor_, obs, self.exploration_noise_)
            try:
                next_obs, reward, done, info = env.step(action)
            except Exception as exc:
                raise TrainingError(f"environment failed at timestep {t}: {exc}", t) from exc
            terminal = bool(done) and not info.get("truncated", False)
            self.buffer_.add(obs, action, reward, next_obs, terminal)
            ep_return += reward
            if t >= self.warmup_steps and len(self.buffer_) >= self.batch_size:
                report = self.train_step(self.buffer_.sample(self.batch_size))
                last["critic_loss"] = report["critic_loss"]
                if report["actor_loss"] is not None:
                    last["actor_loss"] = report["actor_loss"]
            if callback is not None:
                callback(self, t, (obs, action, reward, next_obs, done, info))
            obs = next_obs
            if done:
                self.training_log_.append({"timestep": t + 1, "episode": episode,
                                           "episode_return": ep_return, **last})
                log.debug("episode %d ended at t=%d return=%.4f", episode, t + 1, ep_return)
                episode += 1
                ep_return = 0.0
                obs = env.reset(seed=int(self._env_seeds.integers(2**31)))
        return self

    # -- inference -----------------------------------------------------------

    def predict(self, obs) -> np.ndarray:
        check_is_fitted(self, "actor_")
        x = check_array(obs, ensure_2d=False, dtype=float)
        if x.shape[-1] != self.obs_dim_:
            raise DimensionMismatch(f"expected observations of width {self.obs_dim_}, got {x.shape}")
        return select_action(self.actor_, x)


# -- checkpoints ---------------------------------------------------------------

def _payload_digest(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def checkpoint_to_json(actor: Mlp, config: dict) -> str:
    payload = {"config": config, "actor": actor.to_dict()}
    doc = {"format_version": CHECKPOINT_FORMAT_VERSION, "sha256": _payload_digest(payload), **payload}
    return json.dumps(doc, sort_keys=True) + "\n"


def checkpoint_from_json(text: str):
    """Return ``(actor, config)``; raises :class:`CheckpointError` on any defect."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"checkpoint is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CheckpointError("checkpoint must be a JSON object")
    if doc.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {doc.get('format_version')!r}")
    try:
        payload = {"config": doc["config"], "actor": doc["actor"]}
    except KeyError as exc:
        raise CheckpointError(f"checkpoint missing field {exc}") from exc
    if doc.get("sha256") != _payload_digest(payload):
        raise CheckpointError("checkpoint checksum mismatch")
    try:
        actor = Mlp.from_dict(payload["actor"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"checkpoint actor is malformed: {exc}") from exc
    if actor.output_activation != "tanh":
        raise CheckpointError("checkpoint actor must have a tanh output layer")
    return actor, payload["config"]
