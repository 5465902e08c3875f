import dataclasses
import math

import numpy as np
import pytest

from quadlab.pid import GOLDEN_GAINS, PidParams18
from quadlab.pidtune import (CIRCLE, HELIX, GainBox, PidTuneEnv, PidTuner, TrajectorySpec,
                             rollout_gains, sample_trajectory)


def test_circle_waypoints():
    w = sample_trajectory(CIRCLE)
    assert np.allclose(w[0] - CIRCLE.center, (0.3, 0, 0), atol=1e-15)
    assert np.max(np.abs(w[-1] - w[0])) < 1e-9
    assert np.max(np.linalg.norm(np.diff(w, axis=0), axis=1)) < 0.05


def test_helix_waypoints_exact():
    w = sample_trajectory(HELIX)
    assert w[-1, 2] - w[0, 2] == pytest.approx(0.5, abs=1e-12)
    t = np.arange(len(w)) / 50.0
    th = HELIX.angular_rate * t
    ref = np.stack([0.3 * np.cos(th), 0.3 * np.sin(th), 0.5 + 0.5 * t / 12.0], axis=1)
    assert np.max(np.abs(w - ref)) < 1e-12


@pytest.mark.parametrize("kw", [{"radius": 0}, {"kind": "square"}, {"kind": "helix", "height": 0}])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        TrajectorySpec(**kw)


def test_gain_box_endpoints_and_clamp():
    box = GainBox()
    assert np.array_equal(box.to_gains(-np.ones(18)).as_vector(), box.low)
    assert np.array_equal(box.to_gains(np.ones(18)).as_vector(), box.high)
    assert np.array_equal(box.to_gains(5 * np.ones(18)).as_vector(), box.high)
    a = np.random.default_rng(0).uniform(-1, 1, 18)
    assert np.allclose(box.to_action(box.to_gains(a)), a, atol=1e-12)
    with pytest.raises(ValueError):
        GainBox({"pos_kp": (1.0, 1.0)})


@pytest.mark.parametrize("spec", [CIRCLE, HELIX])
def test_golden_beats_zero(spec):
    g = rollout_gains(GOLDEN_GAINS, spec)
    z = rollout_gains(PidParams18(), spec)
    assert not g.diverged and g.total_reward > -200
    assert g.total_reward > z.total_reward and g.rmse < z.rmse
    assert rollout_gains(GOLDEN_GAINS, spec).total_reward == g.total_reward


def test_unstable_gains_score_penalty():
    bad = dataclasses.replace(GOLDEN_GAINS, att_kd=(0.005, 0.005, 0.005))
    r = rollout_gains(bad, CIRCLE)
    assert r.diverged and math.isinf(r.rmse) and r.total_reward < -200


def test_env_episode_structure():
    env = PidTuneEnv(CIRCLE)
    obs = env.reset()
    assert obs.shape == (6,)
    box = env.gain_box
    a = box.to_action(GOLDEN_GAINS)
    steps, done = 0, False
    while not done:
        obs, r, done, info = env.step(a)
        steps += 1
    assert steps == 3 and not info["failure"]


def test_tuner_small_budget_is_deterministic():
    kw = dict(total_timesteps=60, warmup_steps=30, batch_size=16, top_k=3, seed=4)
    a, b = PidTuner(**kw).fit(), PidTuner(**kw).fit()
    assert a.best_params_ == b.best_params_
    assert a.score(CIRCLE) == b.score(CIRCLE)
    assert "top_k" in a.get_params()
