"""Step/pulse external forces and the robustness sweep."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence, Tuple

import numpy as np

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}
DEFAULT_PHASES = (("x",), ("z",), ("x", "y", "z"))
DEFAULT_MAGNITUDES = (0.005, 0.01, 0.02, 0.04)

SWEEP_COLUMNS = ("axis", "magnitude_N", "mean_return", "mean_terminal_err_m",
                 "max_deviation_m", "recovered_frac")


def _axes(axes) -> Tuple[str, ...]:
    if isinstance(axes, str):
        axes = tuple(axes.lower())
    names = {str(a).lower() for a in axes}
    if not names or not names <= set(AXIS_INDEX):
        raise ValueError(f"axes must be a non-empty subset of x, y, z; got {axes!r}")
    return tuple(sorted(names, key=AXIS_INDEX.__getitem__))


@dataclass(frozen=True)
class DisturbanceSpec:
    """World-frame force of ``magnitude`` newtons on each active axis.

    A ``step`` switches on at ``start`` and stays on; a ``pulse`` is active on
    ``[start, start + duration)``.
    """

    profile: str = "step"
    axes: Tuple[str, ...] = ("x",)
    magnitude: float = 0.0
    start: float = 0.0
    duration: float = math.inf

    def __post_init__(self):
        if self.profile not in ("step", "pulse"):
            raise ValueError(f"profile must be 'step' or 'pulse', got {self.profile!r}")
        object.__setattr__(self, "axes", _axes(self.axes))
        if not math.isfinite(self.magnitude):
            raise ValueError("magnitude must be finite")
        if self.profile == "pulse" and not self.duration > 0:
            raise ValueError("pulse duration must be > 0")

    def force(self) -> Tuple[float, float, float]:
        f = [0.0, 0.0, 0.0]
        for a in self.axes:
            f[AXIS_INDEX[a]] = float(self.magnitude)
        return tuple(f)


def force_at(spec: Optional[DisturbanceSpec], t: float) -> Tuple[float, float, float]:
    if spec is None or t < spec.start:
        return (0.0, 0.0, 0.0)
    if spec.profile == "pulse" and t >= spec.start + spec.duration:
        return (0.0, 0.0, 0.0)
    return spec.force()


@dataclass(frozen=True)
class TrainingDisturbanceSchedule:
    """Randomly re-drawn step disturbances for training.

    The spec in force at an iteration depends only on ``(seed, iteration //
    switch_interval)``, so the sequence is reproducible and can only change at
    interval boundaries.
    """

    phases: Tuple[Tuple[str, ...], ...] = DEFAULT_PHASES
    switch_interval: int = 25
    magnitude_range: Tuple[float, float] = (0.005, 0.02)
    seed: int = 0

    def __post_init__(self):
        if int(self.switch_interval) < 1:
            raise ValueError("switch_interval must be >= 1")
        if not self.phases:
            raise ValueError("phases must be non-empty")
        object.__setattr__(self, "phases", tuple(_axes(p) for p in self.phases))
        lo, hi = self.magnitude_range
        if not (math.isfinite(lo) and math.isfinite(hi) and lo <= hi):
            raise ValueError(f"invalid magnitude_range {self.magnitude_range}")


def schedule_next(sched: TrainingDisturbanceSchedule, iteration: int) -> DisturbanceSpec:
    block = int(iteration) // int(sched.switch_interval)
    rng = np.random.default_rng([int(sched.seed), block])
    phase = sched.phases[int(rng.integers(len(sched.phases)))]
    lo, hi = sched.magnitude_range
    return DisturbanceSpec("step", phase, float(rng.uniform(lo, hi)), 0.0)


# -- evaluation ----------------------------------------------------------------

def run_episode(env, policy, seed, disturbance=None):
    """Roll out ``policy`` for one episode; returns a metrics dict."""
    env.disturbance = disturbance
    obs = env.reset(seed=seed)
    start = np.asarray(obs[:3], dtype=float)
    total, done, info = 0.0, False, {}
    max_dev = 0.0
    while not done:
        obs, r, done, info = env.step(policy(obs))
        total += r
        max_dev = max(max_dev, info.get("max_deviation", 0.0))
    pos = np.asarray(obs[:3], dtype=float)
    terminal = float(np.linalg.norm(pos - np.asarray(env.config.target, dtype=float)))
    if info.get("failure"):
        terminal = float(info.get("terminal_distance", terminal))
    return {"return": total, "terminal_err": terminal, "max_deviation": max_dev,
            "failure": bool(info.get("failure", False)), "start": start}


def evaluate(env, policy, n_episodes: int, disturbance=None, seed0: int = 0):
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    return [run_episode(env, policy, seed0 + i, disturbance) for i in range(n_episodes)]


def _cell(axis, magnitude, episodes, success_radius):
    returns = np.array([e["return"] for e in episodes])
    term = np.array([e["terminal_err"] for e in episodes])
    return {
        "axis": axis,
        "magnitude_N": float(magnitude),
        "mean_return": float(returns.mean()),
        "mean_terminal_err_m": float(term.mean()),
        "max_deviation_m": float(max(e["max_deviation"] for e in episodes)),
        "recovered_frac": float(np.mean(term < success_radius)),
        "returns": returns.tolist(),
    }


def robustness_sweep(env, policy, axes: Sequence[str] = ("x", "y", "z"),
                     magnitudes: Iterable[float] = DEFAULT_MAGNITUDES,
                     n_episodes: int = 5, seed0: int = 0):
    """Evaluate ``policy`` under fixed step forces, one cell per (axis, magnitude).

    Returns ``(baseline, cells)``: the undisturbed cell and the grid cells in
    axis-major order.  Each cell carries the per-episode returns under
    ``"returns"``.
    """
    radius = env.config.success_radius
    baseline = _cell("none", 0.0, evaluate(env, policy, n_episodes, None, seed0), radius)
    cells = []
    for axis in axes:
        for m in magnitudes:
            spec = DisturbanceSpec("step", (axis,), float(m), 0.0)
            cells.append(_cell(axis, m, evaluate(env, policy, n_episodes, spec, seed0), radius))
    return baseline, cells


def monotonicity_violations(cells) -> dict:
    """Count, per axis, adjacent magnitude pairs where mean return increases."""
    out = {}
    for axis in dict.fromkeys(c["axis"] for c in cells):
        rows = sorted((c for c in cells if c["axis"] == axis), key=lambda c: c["magnitude_N"])
        out[axis] = sum(1 for a, b in zip(rows, rows[1:]) if b["mean_return"] > a["mean_return"])
    return out


def compare_sweeps(cells_a, cells_b, alpha: float = 0.05) -> dict:
    """Per-cell Welch t-test of episode returns, ``b`` relative to ``a``."""
    from scipy import stats

    out = []
    for a, b in zip(cells_a, cells_b):
        if (a["axis"], a["magnitude_N"]) != (b["axis"], b["magnitude_N"]):
            raise ValueError("sweeps were run on different grids")
        ra, rb = np.asarray(a["returns"]), np.asarray(b["returns"])
        delta = float(rb.mean() - ra.mean())
        if np.array_equal(ra, rb) or (ra.var() == 0.0 and rb.var() == 0.0 and delta == 0.0):
            t, p = 0.0, 1.0
        else:
            res = stats.ttest_ind(rb, ra, equal_var=False)
            t, p = float(res.statistic), float(res.pvalue)
            if math.isnan(p):
                # both samples constant with different means; t is unbounded
                t, p = None, 0.0
        out.append({"axis": a["axis"], "magnitude_N": a["magnitude_N"],
                    "mean_return_a": float(ra.mean()), "mean_return_b": float(rb.mean()),
                    "delta_mean_return": delta,
                    "delta_mean_terminal_err_m": b["mean_terminal_err_m"] - a["mean_terminal_err_m"],
                    "welch_t": t, "p_value": p, "significant": bool(p < alpha)})
    n_sig = sum(c["significant"] for c in out)
    return {"alpha": alpha, "cells": out, "n_significant": n_sig,
            "no_significant_impact_observed": n_sig == 0}
