"""``quadlab`` command line: train-nav, tune-pid, eval, robustness, simulate."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys

import numpy as np

from . import disturbance as dist
from .config import load_config, quad_params, section, sub_seed
from .dynamics import DivergenceError, check_motor_command, hover_rpm, make_state, simulate, \
    write_trajectory_csv
from .errors import CheckpointError, ConfigError, TrainingError
from .io import RunOutputs, dump_json, write_rows, write_training_log
from .nav import NavConfig, NavEnv
from .pid import GOLDEN_GAINS, PidLimits, PidParams18
from .pidtune import GainBox, PidTuner, TrajectorySpec, rollout_gains
from .td3 import TD3Agent, checkpoint_from_json, checkpoint_to_json, select_action

log = logging.getLogger("quadlab")

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_IO = 0, 1, 2, 3


# -- builders ------------------------------------------------------------------

def load_gains(cfg) -> PidParams18:
    path = cfg["pid.gains_file"]
    if path is None or path == "golden":
        return GOLDEN_GAINS
    try:
        return PidParams18.load(path)
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"config key 'pid.gains_file': {exc}") from exc


def pid_limits(cfg) -> PidLimits:
    return PidLimits(cfg["pid.pos_integral_limit"], cfg["pid.att_integral_limit"], cfg["pid.max_tilt"])


def nav_config(cfg, **changes) -> NavConfig:
    kw = section(cfg, "nav")
    kw.update(changes)
    try:
        return NavConfig(**kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"nav.*: {exc}") from exc


def make_nav_env(cfg, record=False, **changes) -> NavEnv:
    return NavEnv(nav_config(cfg, **changes), quad_params(cfg), load_gains(cfg),
                  record=record, limits=pid_limits(cfg))


def make_agent(cfg, action_dim: int) -> TD3Agent:
    kw = section(cfg, "td3")
    kw["actor_arch"] = tuple(kw["actor_arch"])
    kw["critic_arch"] = tuple(kw["critic_arch"])
    if len(kw["noise_mean"]) != action_dim:
        kw["noise_mean"] = (kw["noise_mean"][0],) * action_dim
    return TD3Agent(**kw, seed=sub_seed(cfg["seed"], "td3"))


def training_schedule(cfg) -> dist.TrainingDisturbanceSchedule:
    return dist.TrainingDisturbanceSchedule(
        phases=tuple(tuple(p) for p in cfg["dist.phases"]),
        switch_interval=cfg["dist.switch_interval"],
        magnitude_range=tuple(cfg["dist.magnitude_range"]),
        seed=sub_seed(cfg["seed"], "disturbance"),
    )


def trajectory(cfg, kind: str) -> TrajectorySpec:
    kw = section(cfg, f"traj.{kind}")
    return TrajectorySpec(kind, **kw)


def gain_ranges(cfg) -> dict:
    return {k: tuple(v) for k, v in section(cfg, "tune.range").items()}


def make_tuner(cfg) -> PidTuner:
    t = section(cfg, "tune")
    return PidTuner(
        train_trajectory=trajectory(cfg, t["train_trajectory"]), gain_ranges=gain_ranges(cfg),
        actor_arch=tuple(t["actor_arch"]), critic_arch=tuple(t["critic_arch"]),
        learning_rate=t["learning_rate"], total_timesteps=t["total_timesteps"],
        warmup_steps=t["warmup_steps"], batch_size=t["batch_size"],
        segment_duration=t["segment_duration"], control_frequency=t["control_frequency"],
        divergence_penalty=t["divergence_penalty"], top_k=t["top_k"],
        seed=sub_seed(cfg["seed"], "tune"), quad=quad_params(cfg), limits=pid_limits(cfg),
    )


def load_checkpoint(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except UnicodeDecodeError as exc:
        raise CheckpointError(f"checkpoint {path} is not text: {exc}") from exc
    return checkpoint_from_json(text)


def policy_of(actor):
    return lambda obs: select_action(actor, obs)


# -- subcommands ---------------------------------------------------------------

def cmd_train_nav(cfg, out_dir):
    env = make_nav_env(cfg)
    if cfg["train.disturbance"]:
        env.disturbance = training_schedule(cfg)
    agent = make_agent(cfg, env.action_dim)
    with RunOutputs(out_dir, "train-nav", cfg) as out:
        agent.fit(env)
        out.write_text("checkpoint.json", checkpoint_to_json(agent.actor_, cfg))
        write_training_log(out.path("training_log.csv"), agent.training_log_)
    return agent


def _random_baseline(cfg, spec, box):
    rng = np.random.default_rng(sub_seed(cfg["seed"], "random-gains"))
    quad, lim = quad_params(cfg), pid_limits(cfg)
    rmses = [rollout_gains(box.sample(rng), spec, quad, cfg["tune.control_frequency"],
                           cfg["tune.divergence_penalty"], limits=lim).rmse
             for _ in range(cfg["tune.baseline_samples"])]
    return rmses


def _finite(x):
    return x if np.isfinite(x) else None


def cmd_tune_pid(cfg, out_dir, gains_override=None, trajectory_kind=None):
    test_kind = trajectory_kind or cfg["tune.test_trajectory"]
    test_spec = trajectory(cfg, test_kind)
    quad, lim = quad_params(cfg), pid_limits(cfg)
    freq, penalty = cfg["tune.control_frequency"], cfg["tune.divergence_penalty"]
    with RunOutputs(out_dir, "tune-pid", cfg) as out:
        report = {"test_trajectory": test_kind}
        if gains_override is not None:
            gains = gains_override
            report["source"] = "given"
        else:
            tuner = make_tuner(cfg).fit()
            gains = tuner.best_params_
            report["source"] = "tuned"
            report["train_trajectory"] = cfg["tune.train_trajectory"]
            report["best_train_reward"] = tuner.best_train_reward_
            write_training_log(out.path("training_log.csv"), tuner.training_log_)
            rm = _random_baseline(cfg, test_spec, GainBox(gain_ranges(cfg)))
            report["random_baseline_rmse"] = [_finite(r) for r in rm]
            report["random_baseline_median_rmse"] = _finite(float(np.median(rm)))
        res = rollout_gains(gains, test_spec, quad, freq, penalty, record=True, limits=lim)
        report["rmse"] = _finite(res.rmse)
        report["diverged"] = res.diverged
        report["total_reward"] = res.total_reward
        if "random_baseline_median_rmse" in report:
            report["beats_random_median"] = bool(res.rmse < float(np.median(rm)))
        out.write_text("gains.json", gains.to_json())
        res.tracker.write_csv(out.path(f"tracking_{test_kind}.csv"))
        out.write_text("report.json", dump_json(report))
    log.info("tracking RMSE on %s: %s", test_kind, report["rmse"])
    return report


def cmd_eval(cfg, out_dir, checkpoint, episodes=None):
    n = cfg["eval.episodes"] if episodes is None else episodes
    if n < 1:
        raise ConfigError("eval episodes must be >= 1")
    actor, _ = load_checkpoint(checkpoint)
    env = make_nav_env(cfg, record=True, init_jitter=cfg["eval.init_jitter"])
    if actor.input_dim != env.observation_dim or actor.output_dim != env.action_dim:
        raise CheckpointError("checkpoint dimensions do not match the environment")
    policy = policy_of(actor)
    with RunOutputs(out_dir, "eval", cfg) as out:
        results = []
        for i in range(n):
            r = dist.run_episode(env, policy, seed=i)
            env.write_trace(steps_csv=out.path(f"episode_{i:03d}_steps.csv"),
                            dynamics_csv=out.path("episode_000_dynamics.csv") if i == 0 else None)
            results.append(r)
        rets = np.array([r["return"] for r in results])
        term = np.array([r["terminal_err"] for r in results])
        metrics = {
            "episodes": n,
            "mean_return": float(rets.mean()), "min_return": float(rets.min()),
            "max_return": float(rets.max()),
            "mean_terminal_err_m": float(term.mean()), "max_terminal_err_m": float(term.max()),
            "failures": int(sum(r["failure"] for r in results)),
            "per_episode": [{"return": r["return"], "terminal_err_m": r["terminal_err"]}
                            for r in results],
        }
        out.write_text("metrics.json", dump_json(metrics))
    return metrics


def _sweep(cfg, actor):
    env = make_nav_env(cfg, init_jitter=cfg["sweep.init_jitter"])
    if actor.input_dim != env.observation_dim or actor.output_dim != env.action_dim:
        raise CheckpointError("checkpoint dimensions do not match the environment")
    return dist.robustness_sweep(env, policy_of(actor), cfg["sweep.axes"], cfg["sweep.magnitudes"],
                                 cfg["sweep.episodes"])


def cmd_robustness(cfg, out_dir, checkpoints):
    if not 1 <= len(checkpoints) <= 2:
        raise ConfigError("robustness takes one or two checkpoints")
    actors = [load_checkpoint(p)[0] for p in checkpoints]
    with RunOutputs(out_dir, "robustness", cfg) as out:
        summary = {"checkpoints": [os.path.basename(p) for p in checkpoints], "sweeps": []}
        all_cells = []
        for i, actor in enumerate(actors):
            baseline, cells = _sweep(cfg, actor)
            name = "sweep.csv" if i == 0 else "sweep_disturbance_trained.csv"
            write_rows(out.path(name), dist.SWEEP_COLUMNS, cells)
            summary["sweeps"].append({
                "csv": name,
                "baseline": {k: v for k, v in baseline.items() if k != "returns"},
                "monotonicity_violations": dist.monotonicity_violations(cells),
            })
            all_cells.append(cells)
        if len(actors) == 2:
            summary["comparison"] = dist.compare_sweeps(all_cells[0], all_cells[1], cfg["sweep.alpha"])
        out.write_text("summary.json", dump_json(summary))
    return summary


def read_commands(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return [tuple(float(r[f"rpm{i}"]) for i in range(1, 5)) for r in rows]
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"commands file {path} needs numeric columns rpm1..rpm4: {exc}") from exc


def cmd_simulate(cfg, out_dir):
    quad = quad_params(cfg)
    period = 1.0 / cfg["sim.control_frequency"]
    path = cfg["sim.commands_file"]
    commands = read_commands(path) if path else [(hover_rpm(quad),) * 4]
    for c in commands:
        check_motor_command(c, quad)
    tick = [0]

    def controller(t, state):
        cmd = commands[min(tick[0], len(commands) - 1)]
        tick[0] += 1
        return cmd

    with RunOutputs(out_dir, "simulate", cfg) as out:
        traj = simulate(make_state(pos=cfg["sim.initial_pos"]), controller, cfg["sim.duration"],
                        quad, control_period=period)
        write_trajectory_csv(out.path("trajectory.csv"), traj, quad.physics_dt)
    return traj


# -- entry point ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML file of dotted config keys")
    common.add_argument("--out", required=True, help="output directory")
    common.add_argument("--seed", type=int, help="root seed (overrides the config)")
    common.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                        help="override one config key; repeatable")
    p = argparse.ArgumentParser(prog="quadlab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("train-nav", parents=[common], help="train the navigation policy")
    t = sub.add_parser("tune-pid", parents=[common], help="tune the 18 PID gains")
    t.add_argument("--trajectory", choices=("circle", "helix"), help="evaluation trajectory")
    t.add_argument("--gains", help="skip tuning and evaluate these gains ('golden' or a JSON file)")
    e = sub.add_parser("eval", parents=[common], help="evaluate a navigation checkpoint")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--episodes", type=int)
    r = sub.add_parser("robustness", parents=[common], help="disturbance sweep of checkpoints")
    r.add_argument("--checkpoint", required=True, nargs="+",
                   help="clean-trained checkpoint, optionally followed by a disturbance-trained one")
    sub.add_parser("simulate", parents=[common], help="replay rotor commands to a trajectory CSV")
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("QUADLAB_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.override, args.seed)
        if args.command == "train-nav":
            cmd_train_nav(cfg, args.out)
        elif args.command == "tune-pid":
            gains = None
            if args.gains == "golden":
                gains = GOLDEN_GAINS
            elif args.gains:
                gains = PidParams18.load(args.gains)
            cmd_tune_pid(cfg, args.out, gains, args.trajectory)
        elif args.command == "eval":
            cmd_eval(cfg, args.out, args.checkpoint, args.episodes)
        elif args.command == "robustness":
            cmd_robustness(cfg, args.out, args.checkpoint)
        elif args.command == "simulate":
            cmd_simulate(cfg, args.out)
    except (ConfigError, CheckpointError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except (DivergenceError, TrainingError) as exc:
        log.error("simulation diverged: %s", exc)
        return EXIT_DIVERGENCE
    except OSError as exc:
        log.error("I/O error: %s", exc)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
