import numpy as np
import pytest

from oracles import brute_reward, brute_scale
from quadlab.dynamics import QuadParams
from quadlab.nav import NavConfig, NavEnv, reward_fn, scale_action

Q = QuadParams()


def greedy(obs, target=(0, 0, 1), scale=0.05):
    return np.clip((np.asarray(target) - obs[:3]) / scale, -1, 1)


def test_reward_examples():
    assert reward_fn((0, 0, 1), (0, 0, 0), (0, 0, 1)) == 0.0
    assert reward_fn((0, 0, 0), (0, 0, 0), (0, 0, 1)) == -1.0
    assert reward_fn((0, 0, 0), tuple(scale_action([0, 0, 1])), (0, 0, 1)) == pytest.approx(-0.9025, abs=1e-15)


def test_reward_and_scaling_dual_oracle():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        pos, tgt = rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3)
        a = rng.uniform(-2, 2, 3)
        d = scale_action(a)
        assert np.max(np.abs(d - brute_scale(a))) <= 1e-12
        assert abs(reward_fn(pos, d, tgt) - brute_reward(pos, d, tgt)) <= 1e-12
        assert reward_fn(pos, d, tgt) <= 0.0


def test_step_rewards_from_origin():
    env = NavEnv()
    env.reset()
    assert env.step(np.zeros(3))[1] == -1.0
    env.reset()
    assert env.step(np.array([0, 0, 1.0]))[1] == pytest.approx(-0.9025, abs=1e-12)


def test_reset_observations():
    assert np.array_equal(NavEnv().reset(), np.zeros(12))
    obs = NavEnv(NavConfig(initial_pos=(0, 0, 1))).reset()
    assert np.array_equal(obs, [0, 0, 1] + [0] * 9)
    env = NavEnv(NavConfig(init_jitter=0.05))
    assert np.array_equal(env.reset(seed=3), env.reset(seed=3))
    assert not np.array_equal(env.reset(seed=3), env.reset(seed=4))


def test_window_runs_100_ticks():
    env = NavEnv()
    env.reset()
    env.step(np.zeros(3))
    assert env._next_tick == 100
    assert env._k == 480


def test_greedy_policy_reaches_target():
    env = NavEnv()
    obs, done, info = env.reset(), False, {}
    while not done:
        obs, r, done, info = env.step(greedy(obs))
    assert info["success"] and np.linalg.norm(obs[:3] - (0, 0, 1)) < 0.05


def test_truncation_flag():
    env = NavEnv(NavConfig(max_rl_steps=2))
    env.reset()
    _, _, d1, _ = env.step(np.zeros(3))
    _, _, d2, info = env.step(np.zeros(3))
    assert not d1 and d2 and info["truncated"] and not info["failure"]
    with pytest.raises(RuntimeError):
        env.step(np.zeros(3))


def test_failure_is_scored_not_raised():
    env = NavEnv(NavConfig(execution_mode="pure_rl"))
    env.reset()
    done, info = False, {}
    total = 0.0
    while not done:
        _, r, done, info = env.step(-np.ones(4))
        total += r
    assert info["failure"] and total < -100


def test_geofence_clamps_setpoint_not_reward():
    cfg = NavConfig(initial_pos=(0, 0, 1.73), target=(0, 0, 0))
    env = NavEnv(cfg)
    env.reset()
    _, r, _, info = env.step(np.array([0, 0, 1.0]))
    assert info["setpoint"][2] == pytest.approx(1.75)
    assert r == pytest.approx(-(1.78 ** 2))
    env = NavEnv(NavConfig(initial_pos=(0, 0, 1.73), target=(0, 0, 0), geofence_margin=0.0))
    env.reset()
    assert env.step(np.array([0, 0, 1.0]))[3]["setpoint"][2] == pytest.approx(1.78)


def test_pure_rl_affine_endpoints():
    env = NavEnv(NavConfig(execution_mode="pure_rl"), record=True)
    assert env.action_dim == 4
    seen = []
    env.reset()
    env._run_ticks = lambda n, cmd, sp: (seen.append(cmd(env._state)), (0.0, 0.0))[1]
    env.step(-np.ones(4))
    env.reset()
    env.step(np.ones(4))
    assert seen[0] == (0.0,) * 4 and seen[1] == (Q.rpm_max,) * 4


def test_open_loop_worse_than_closed_loop_on_small_step():
    errs = {}
    for mode in ("open_loop", "closed_loop_pid"):
        env = NavEnv(NavConfig(execution_mode=mode, target=(0, 0, 0.05)))
        env.reset()
        obs, _, _, info = env.step(np.array([0, 0, 1.0]))
        errs[mode] = info["terminal_distance"]
    assert errs["closed_loop_pid"] < errs["open_loop"]


def test_action_validation():
    env = NavEnv()
    env.reset()
    with pytest.raises(ValueError):
        env.step(np.zeros(4))
    with pytest.raises(ValueError):
        env.step(np.array([np.nan, 0, 0]))


@pytest.mark.parametrize("kw", [{"action_scale": 0}, {"control_frequency": 33.3},
                                {"execution_mode": "x"}, {"reward_mode": "y"}, {"max_rl_steps": 0},
                                {"geofence_margin": -0.1}, {"geofence_margin": 2.0}])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        NavConfig(**kw)


def test_trace_files(tmp_path):
    env = NavEnv(record=True)
    env.reset()
    env.step(np.array([0, 0, 1.0]))
    env.write_trace(tmp_path / "d.csv", tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0] == "step,ax,ay,az,reward,done"
    assert len((tmp_path / "d.csv").read_text().splitlines()) == 482
