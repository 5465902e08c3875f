"""Flat, dotted-key run configuration shared by every subcommand.

A config file is YAML holding ``key: value`` pairs such as
``td3.learning_rate: 0.001``; nested mappings are flattened to the same dotted
form, so ``td3: {learning_rate: 0.001}`` is equivalent.
"""
from __future__ import annotations

import math
import zlib
from typing import Any, Dict, Iterable, Optional

import numpy as np
import yaml

from .dynamics import QuadParams
from .errors import ConfigError

DEFAULTS: Dict[str, Any] = {
    "seed": 0,
    # vehicle
    "quad.mass": 0.027,
    "quad.arm_length": 0.0397,
    "quad.inertia_diag": [1.4e-5, 1.4e-5, 2.17e-5],
    "quad.thrust_coeff": 3.16e-10,
    "quad.torque_coeff": 7.94e-12,
    "quad.gravity": 9.8,
    "quad.rpm_max": 21702.0,
    "quad.physics_dt": 1.0 / 240.0,
    # controller
    "pid.gains_file": None,
    "pid.pos_integral_limit": 2.0,
    "pid.att_integral_limit": 1.0,
    "pid.max_tilt": 0.3,
    # navigation environment
    "nav.target": [0.0, 0.0, 1.0],
    "nav.initial_pos": [0.0, 0.0, 0.0],
    "nav.action_scale": 0.05,
    "nav.control_frequency": 50.0,
    "nav.action_window": 2.0,
    "nav.execution_mode": "closed_loop_pid",
    "nav.max_rl_steps": 64,
    "nav.success_radius": 0.05,
    "nav.workspace_bound": 2.0,
    "nav.reward_mode": "commanded",
    "nav.failure_penalty": -100.0,
    "nav.init_jitter": 0.0,
    "nav.geofence_margin": 0.25,
    # navigation learner
    "td3.actor_arch": [50, 100, 500, 100, 50, 3],
    "td3.critic_arch": [50, 100, 500, 100, 50, 1],
    "td3.learning_rate": 0.001,
    "td3.total_timesteps": 100_000,
    "td3.gamma": 0.99,
    "td3.tau": 0.005,
    "td3.policy_delay": 2,
    "td3.target_noise_std": 0.2,
    "td3.target_noise_clip": 0.5,
    "td3.batch_size": 100,
    "td3.buffer_capacity": 100_000,
    "td3.warmup_steps": 1000,
    "td3.noise_mean": [0.0, 0.0, 0.0],
    "td3.noise_cov": 0.5,
    "td3.hidden_activation": "relu",
    # disturbance training
    "train.disturbance": False,
    "dist.phases": ["x", "z", "xyz"],
    "dist.switch_interval": 25,
    "dist.magnitude_range": [0.005, 0.02],
    # pid tuning
    "tune.actor_arch": [50, 50, 18],
    "tune.critic_arch": [50, 50, 1],
    "tune.learning_rate": 0.001,
    "tune.total_timesteps": 1000,
    "tune.warmup_steps": 100,
    "tune.batch_size": 100,
    "tune.segment_duration": 2.0,
    "tune.control_frequency": 50.0,
    "tune.divergence_penalty": -200.0,
    "tune.top_k": 10,
    "tune.train_trajectory": "circle",
    "tune.test_trajectory": "helix",
    "tune.baseline_samples": 50,
    "tune.range.pos_kp": [0.0, 4.0],
    "tune.range.pos_ki": [0.0, 1.0],
    "tune.range.pos_kd": [0.0, 4.0],
    "tune.range.att_kp": [0.0, 0.01],
    "tune.range.att_ki": [0.0, 0.002],
    "tune.range.att_kd": [0.0, 0.001],
    # trajectories
    "traj.circle.radius": 0.3,
    "traj.circle.angular_rate": 2.0 * math.pi / 6.0,
    "traj.circle.duration": 6.0,
    "traj.circle.center": [0.0, 0.0, 0.5],
    "traj.helix.radius": 0.3,
    "traj.helix.height": 0.5,
    "traj.helix.angular_rate": 2.0 * math.pi / 6.0,
    "traj.helix.duration": 12.0,
    "traj.helix.center": [0.0, 0.0, 0.5],
    # evaluation
    "eval.episodes": 20,
    "eval.init_jitter": 0.0,
    "sweep.axes": ["x", "y", "z"],
    "sweep.magnitudes": [0.005, 0.01, 0.02, 0.04],
    "sweep.episodes": 5,
    "sweep.init_jitter": 0.02,
    "sweep.alpha": 0.05,
    # open-loop replay
    "sim.duration": 2.0,
    "sim.control_frequency": 50.0,
    "sim.initial_pos": [0.0, 0.0, 0.0],
    "sim.commands_file": None,
}


def flatten(d: dict, prefix: str = "") -> dict:
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict) and not _is_leaf_key(key):
            out.update(flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _is_leaf_key(key: str) -> bool:
    return key in DEFAULTS


def _coerce(key: str, value, default):
    try:
        if default is None:
            return value if value is None else str(value)
        if isinstance(default, bool):
            if not isinstance(value, bool):
                raise TypeError
            return value
        if isinstance(default, int):
            if isinstance(value, bool) or float(value) != int(value):
                raise TypeError
            return int(value)
        if isinstance(default, float):
            if isinstance(value, bool):
                raise TypeError
            return float(value)
        if isinstance(default, str):
            if not isinstance(value, str):
                raise TypeError
            return value
        if isinstance(default, list):
            if not isinstance(value, (list, tuple)):
                raise TypeError
            kind = type(default[0]) if default else None
            if kind in (int, float):
                items = [kind(v) for v in value]
                if kind is int and any(float(a) != b for a, b in zip(value, items)):
                    raise TypeError
                return items
            if kind is str:
                return [str(v) for v in value]
            return list(value)
    except (TypeError, ValueError):
        pass
    raise ConfigError(f"config key {key!r}: cannot use {value!r} (expected {type(default).__name__})")


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value")
    key, raw = text.split("=", 1)
    return key.strip(), yaml.safe_load(raw)


def load_config(path=None, overrides: Iterable[str] = (), seed: Optional[int] = None) -> dict:
    """Resolve defaults <- file <- ``--override`` <- ``--seed`` into a flat dict."""
    cfg = dict(DEFAULTS)
    layers = []
    if path is not None:
        try:
            with open(path) as fh:
                raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if raw is None:
            raw = {}
        if not isinstance(raw, dict):
            raise ConfigError(f"config file {path} must hold a mapping of keys to values")
        layers.append(flatten(raw))
    layers.append(dict(parse_override(o) for o in overrides))
    if seed is not None:
        layers.append({"seed": seed})
    for layer in layers:
        for key, value in layer.items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            cfg[key] = _coerce(key, value, DEFAULTS[key])
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    def check(key, ok, what):
        if not ok:
            raise ConfigError(f"config key {key!r}: {what}, got {cfg[key]!r}")

    for key in ("nav.target", "nav.initial_pos", "td3.noise_mean", "sim.initial_pos",
                "traj.circle.center", "traj.helix.center", "quad.inertia_diag"):
        check(key, len(cfg[key]) == 3, "expected 3 values")
    for key in ("dist.magnitude_range",) + tuple(k for k in DEFAULTS if k.startswith("tune.range.")):
        check(key, len(cfg[key]) == 2 and cfg[key][0] <= cfg[key][1], "expected [low, high]")
    check("nav.execution_mode", cfg["nav.execution_mode"] in ("pure_rl", "open_loop", "closed_loop_pid"),
          "unknown execution mode")
    check("nav.reward_mode", cfg["nav.reward_mode"] in ("commanded", "achieved"), "unknown reward mode")
    for key in ("tune.train_trajectory", "tune.test_trajectory"):
        check(key, cfg[key] in ("circle", "helix"), "expected circle or helix")
    for key in ("eval.episodes", "sweep.episodes", "tune.baseline_samples", "tune.total_timesteps",
                "td3.total_timesteps", "dist.switch_interval", "nav.max_rl_steps"):
        check(key, cfg[key] >= 1, "must be >= 1")
    check("sweep.axes", all(a in ("x", "y", "z") for a in cfg["sweep.axes"]) and cfg["sweep.axes"],
          "axes must be from x, y, z")
    check("dist.phases", bool(cfg["dist.phases"]) and all(
        p and set(p) <= set("xyz") for p in cfg["dist.phases"]), "phases must be axis strings")
    check("seed", cfg["seed"] >= 0, "must be non-negative")


def sub_seed(root: int, name: str) -> int:
    """Deterministic per-consumer seed derived from the run's root seed."""
    ss = np.random.SeedSequence([int(root), zlib.crc32(name.encode())])
    return int(ss.generate_state(1)[0])


def section(cfg: dict, prefix: str) -> dict:
    p = prefix + "."
    return {k[len(p):]: v for k, v in cfg.items() if k.startswith(p)}


def quad_params(cfg: dict) -> QuadParams:
    try:
        return QuadParams(**section(cfg, "quad"))
    except ValueError as exc:
        raise ConfigError(f"quad.*: {exc}") from exc
