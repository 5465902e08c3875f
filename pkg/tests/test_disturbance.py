import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from quadlab.disturbance import (DisturbanceSpec, TrainingDisturbanceSchedule, compare_sweeps,
                                 force_at, monotonicity_violations, robustness_sweep, run_episode,
                                 schedule_next)
from quadlab.nav import NavConfig, NavEnv


def greedy(obs):
    return np.clip((np.array([0, 0, 1.0]) - obs[:3]) / 0.05, -1, 1)


def test_force_examples():
    s = DisturbanceSpec("step", ("x",), 0.01, 1.0)
    assert force_at(s, 0.5) == (0, 0, 0)
    assert force_at(s, 1.5) == (0.01, 0, 0)
    p = DisturbanceSpec("pulse", "x", 0.01, 1.0, 0.5)
    assert force_at(p, 1.6) == (0, 0, 0) and force_at(p, 1.2) == (0.01, 0, 0)
    assert force_at(DisturbanceSpec("step", "xyz", 0.02), 0.0) == (0.02, 0.02, 0.02)


@given(st.floats(0, 10), st.floats(0, 5), st.floats(0.01, 3))
def test_pulse_zero_outside_window(t, start, dur):
    f = force_at(DisturbanceSpec("pulse", "yz", 0.3, start, dur), t)
    inside = start <= t < start + dur
    assert f == ((0.0, 0.3, 0.3) if inside else (0.0, 0.0, 0.0))


@pytest.mark.parametrize("kw", [{"profile": "ramp"}, {"axes": ()}, {"axes": "w"},
                                {"magnitude": math.nan}, {"profile": "pulse", "duration": 0}])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        DisturbanceSpec(**kw)


def test_schedule_interval_and_seed():
    s = TrainingDisturbanceSchedule(switch_interval=10, seed=3)
    assert len({schedule_next(s, i) for i in range(10)}) == 1
    assert [schedule_next(s, i) for i in range(0, 500, 10)] == \
           [schedule_next(TrainingDisturbanceSchedule(switch_interval=10, seed=3), i) for i in range(0, 500, 10)]
    assert all(0.005 <= schedule_next(s, i).magnitude <= 0.02 for i in range(0, 1000, 10))
    with pytest.raises(ValueError):
        TrainingDisturbanceSchedule(switch_interval=0)


def test_schedule_phase_frequencies():
    from scipy import stats
    s = TrainingDisturbanceSchedule(switch_interval=1, seed=0)
    counts = {}
    for i in range(10_000):
        ax = schedule_next(s, i).axes
        counts[ax] = counts.get(ax, 0) + 1
    freq = np.array(list(counts.values())) / 10_000
    assert len(counts) == 3 and np.all(np.abs(freq - 1 / 3) < 0.03)
    assert stats.chisquare(list(counts.values())).pvalue > 0.001


def test_zero_magnitude_is_bit_identical():
    env = NavEnv(NavConfig(max_rl_steps=3), record=True)
    run_episode(env, greedy, 0)
    a = list(env.trace)
    run_episode(env, greedy, 0, DisturbanceSpec("step", "xyz", 0.0))
    assert env.trace == a


def test_sweep_shape_and_comparison():
    env = NavEnv(NavConfig(max_rl_steps=3, init_jitter=0.02))
    base, cells = robustness_sweep(env, greedy, ("x", "y", "z"), (0.0, 0.02), n_episodes=2)
    assert len(cells) == 6
    for c in cells:
        if c["magnitude_N"] == 0.0:
            assert c["returns"] == base["returns"]
    assert set(monotonicity_violations(cells)) == {"x", "y", "z"}
    same = compare_sweeps(cells, cells)
    assert same["n_significant"] == 0 and same["no_significant_impact_observed"]
    assert all(c["delta_mean_return"] == 0 and c["p_value"] == 1.0 for c in same["cells"])


def test_monotonicity_counter():
    cells = [{"axis": "x", "magnitude_N": m, "mean_return": r} for m, r in
             [(0.01, -1.0), (0.02, -2.0), (0.04, -1.5)]]
    assert monotonicity_violations(cells) == {"x": 1}
