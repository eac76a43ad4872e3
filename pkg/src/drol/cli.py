"""Command-line front end: train, sweep, oracle, trace.

Runs are configured by a flat key=value text file plus flag overrides;
flags win. See the README for the full key schema. Outputs land in the
--out directory: metrics.csv and checkpoint.bin for training runs,
sweep.csv for sweeps, trace.json for routing traces, and oracle tables
as CSV. A halted (non-finite) run exits with a nonzero code.
"""

import argparse
import json
import os
import sys

import numpy as np

from .envs import generate_dataset, load_dataset, make_grid_nav, make_interval_bandit
from .oracles import (
    QuantizerConfig,
    coverage_bound,
    coverage_exponential_bound,
    coverage_montecarlo,
    fixed_tether_minimizer,
    interval_distortion,
    optimal_quantizer_bruteforce,
    routed_distortion,
    tether_bias_ratio,
)
from .prior import BallPrior
from .trainer import (
    TrainConfig,
    TrainingDiverged,
    run_sweep,
    train,
    voronoi_trace,
)

_INT_KEYS = {
    "k", "batch_size", "steps", "n_critics", "seed", "metrics_interval",
    "eval_interval", "eval_episodes", "d_z", "dataset_size", "dataset_seed",
    "env_modes", "trace_actions", "sweep_jobs",
}
_FLOAT_KEYS = {
    "alpha", "gamma", "tau", "lr", "latent_radius", "checkpoint_fraction",
    "env_radius", "env_gap", "env_curvature", "env_width", "env_speed",
    "env_noise", "env_goal_radius",
}
_TUPLE_KEYS = {"actor_hidden", "critic_hidden", "env_weights", "env_offsets",
               "sweep_k", "sweep_seeds"}
_STR_KEYS = {"actor_mode", "q_agg", "activation", "env", "dataset_path",
             "dataset_format"}

_TRAIN_FIELDS = {
    "actor_mode", "k", "alpha", "gamma", "tau", "lr", "batch_size", "steps",
    "actor_hidden", "critic_hidden", "activation", "n_critics", "q_agg",
    "d_z", "latent_radius", "seed", "metrics_interval", "eval_interval",
    "eval_episodes", "checkpoint_fraction",
}


def _coerce(key, raw):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    if key in _TUPLE_KEYS:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if key in ("sweep_k", "sweep_seeds"):
            return tuple(int(p) for p in parts)
        return tuple(float(p) if "." in p or "e" in p.lower() else int(p)
                     for p in parts)
    if key in _STR_KEYS:
        return raw
    raise KeyError(f"unknown config key {key!r}")


def parse_config_file(path):
    """Read a flat key=value file; '#' starts a comment."""
    values = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, raw = line.split("=", 1)
            key = key.strip()
            values[key] = _coerce(key, raw)
    return values


ENV_PRESETS = {
    "bandit3": dict(kind="interval_bandit", env_modes=3, env_radius=0.3,
                    env_gap=1.5, env_weights=(0.0, 0.0, 1.0),
                    env_curvature=1.0),
    "bandit2_offset": dict(kind="interval_bandit", env_modes=2, env_radius=0.3,
                           env_gap=1.5, env_weights=(1.0, 0.7),
                           env_offsets=(0.18, 0.0), env_curvature=1.0),
    "grid": dict(kind="grid_nav", env_width=4.0),
}


def build_env(settings):
    """Construct the environment named by settings['env'] plus overrides."""
    name = settings.get("env", "bandit3")
    if name in ENV_PRESETS:
        merged = dict(ENV_PRESETS[name])
        kind = merged.pop("kind")
        for key in list(merged):
            if settings.get(key) is not None:
                merged[key] = settings[key]
    elif name in ("interval_bandit", "grid_nav"):
        kind = name
        merged = {k: v for k, v in settings.items()
                  if k.startswith("env_") and v is not None}
    else:
        raise ValueError(
            f"unknown env {name!r}; choose from "
            f"{sorted(ENV_PRESETS) + ['interval_bandit', 'grid_nav']}"
        )
    if kind == "interval_bandit":
        modes = merged.get("env_modes", 3)
        return make_interval_bandit(
            modes,
            radius=merged.get("env_radius", 0.3),
            gap=merged.get("env_gap", 1.5),
            reward_weights=merged.get("env_weights", tuple([0.0] * (modes - 1) + [1.0])),
            curvature=merged.get("env_curvature", 1.0),
            reward_offsets=merged.get("env_offsets"),
        )
    return make_grid_nav(
        width=merged.get("env_width", 4.0),
        speed=merged.get("env_speed", 0.5),
        noise=merged.get("env_noise", 0.08),
        goal_radius=merged.get("env_goal_radius", 0.3),
    )


def _resolve(args):
    """Merge config file values with flag overrides (flags win)."""
    settings = {}
    if args.config:
        settings.update(parse_config_file(args.config))
    for key in ("env", "k", "alpha", "seed", "steps", "actor_mode"):
        val = getattr(args, key.replace("-", "_"), None)
        if val is not None:
            settings[key] = val
    return settings


def _train_config(settings):
    fields = {k: v for k, v in settings.items() if k in _TRAIN_FIELDS}
    return TrainConfig(**fields)


def _get_dataset(settings, env):
    if settings.get("dataset_path"):
        return load_dataset(settings["dataset_path"])
    size = settings.get("dataset_size") or 20000
    seed = settings.get("dataset_seed")
    if seed is None:
        seed = (settings.get("seed") or 0) + 90001
    return generate_dataset(env, size, seed=seed)


def _write_resolved(settings, out_dir):
    lines = [f"{key} = {settings[key]}" for key in sorted(settings)]
    with open(os.path.join(out_dir, "config_resolved.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _cmd_train(args):
    settings = _resolve(args)
    env = build_env(settings)
    dataset = _get_dataset(settings, env)
    config = _train_config(settings)
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(settings, args.out)
    try:
        result = train(config, dataset, env=env, out_dir=args.out)
    except TrainingDiverged as err:
        print(f"halted: {err}", file=sys.stderr)
        return 1
    last = result.metrics[-1] if result.metrics else None
    if last is not None:
        print(
            f"done: steps={config.steps} bc={last.bc_loss:.6f} "
            f"actor_loss={last.actor_loss:.6f}"
        )
    else:
        print(f"done: steps={config.steps}")
    return 0


def _cmd_sweep(args):
    settings = _resolve(args)
    env = build_env(settings)
    dataset = _get_dataset(settings, env)
    config = _train_config(settings)
    k_values = settings.get("sweep_k")
    if args.k_list:
        k_values = tuple(int(p) for p in args.k_list.split(","))
    if not k_values:
        k_values = (1, 2, 4, 8)
    seeds = settings.get("sweep_seeds")
    if args.seeds:
        seeds = tuple(int(p) for p in args.seeds.split(","))
    if not seeds:
        seeds = (0, 1, 2)
    n_jobs = args.jobs or settings.get("sweep_jobs") or 1
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(settings, args.out)
    rows = run_sweep(
        config, dataset, k_values, seeds, env=env,
        out_path=os.path.join(args.out, "sweep.csv"),
        n_jobs=n_jobs,
    )
    failures = [r for r in rows if r["status"] != "ok"]
    print(f"sweep: {len(rows)} runs, {len(failures)} failed")
    return 0 if not failures else 1


def _cmd_oracle(args):
    os.makedirs(args.out, exist_ok=True)
    radius = 0.3
    with open(os.path.join(args.out, "quantizer.csv"), "w", newline="\n") as fh:
        fh.write("n_intervals,k,radius,allocation,distortion,quadrature\n")
        for m in (2, 3, 4):
            for k in (m, m + 1, 2 * m):
                centers = tuple((np.arange(m) - (m - 1) / 2.0) * 1.5)
                config = QuantizerConfig(centers=centers, radius=radius, k=k)
                res = optimal_quantizer_bruteforce(config)
                quad = routed_distortion(res.prototypes, config)
                alloc = "|".join(str(q) for q in res.allocation)
                fh.write(
                    f"{m},{k},{radius},{alloc},{res.distortion!r},{quad!r}\n"
                )
    with open(os.path.join(args.out, "per_interval.csv"), "w", newline="\n") as fh:
        fh.write("q,radius,distortion\n")
        for q in (1, 2, 3, 4):
            fh.write(f"{q},{radius},{interval_distortion(q, radius)!r}\n")
    with open(os.path.join(args.out, "coverage.csv"), "w", newline="\n") as fh:
        fh.write("probs,k,union_bound,exponential_bound,montecarlo,stderr\n")
        for probs in ((0.2, 0.2), (0.5, 0.5), (0.2, 0.2, 0.2)):
            for k in (1, 4, 16):
                mc, se = coverage_montecarlo(probs, k, trials=200000, seed=7)
                fh.write(
                    f"{'|'.join(map(str, probs))},{k},"
                    f"{coverage_bound(probs, k)!r},"
                    f"{coverage_exponential_bound(probs, k)!r},{mc!r},{se!r}\n"
                )
    with open(os.path.join(args.out, "tether.csv"), "w", newline="\n") as fh:
        fh.write("alpha,concavity,action,q_peak,minimizer,bias_ratio\n")
        for alpha, m in ((1.0, 2.0), (0.3, 1.0), (10.0, 0.5)):
            x = fixed_tether_minimizer([0.0], [1.0], alpha, m)[0]
            fh.write(f"{alpha},{m},0.0,1.0,{x!r},{tether_bias_ratio(alpha, m)!r}\n")
    print(f"oracle tables written to {args.out}")
    return 0


def _cmd_trace(args):
    settings = _resolve(args)
    env = build_env(settings)
    dataset = _get_dataset(settings, env)
    config = _train_config(settings)
    os.makedirs(args.out, exist_ok=True)
    _write_resolved(settings, args.out)
    try:
        result = train(config, dataset, env=env, out_dir=args.out)
    except TrainingDiverged as err:
        print(f"halted: {err}", file=sys.stderr)
        return 1
    n_actions = settings.get("trace_actions") or 32
    probe_state = env.initial_state()
    d_z = config.d_z if config.d_z is not None else dataset.d_a
    radius = (
        config.latent_radius
        if config.latent_radius is not None
        else float(np.sqrt(dataset.d_a))
    )
    prior = BallPrior(d_z, radius=radius, seed=config.seed + 40009)
    trace = voronoi_trace(
        result.checkpoints, probe_state,
        dataset.actions[:n_actions], prior, config.k,
    )
    with open(os.path.join(args.out, "trace.json"), "w") as fh:
        json.dump(trace, fh, sort_keys=True)
    print(
        f"trace: {len(trace['steps'])} checkpoints, "
        f"{trace['handoff_events']} handoff events"
    )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="drol",
        description="Routed candidate-set actor: training and analysis tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_env=True):
        p.add_argument("--config", help="flat key=value config file")
        p.add_argument("--out", required=True, help="output directory")
        if with_env:
            p.add_argument("--env", help="environment name or kind")
            p.add_argument("--k", type=int, help="candidate count")
            p.add_argument("--alpha", type=float, help="critic weight")
            p.add_argument("--seed", type=int, help="run seed")
            p.add_argument("--steps", type=int, help="gradient steps")
            p.add_argument(
                "--actor-mode", dest="actor_mode", choices=("drol", "pointwise"),
                help="routed winner-only loss or the pointwise baseline",
            )

    p_train = sub.add_parser("train", help="train one run")
    add_common(p_train)
    p_train.set_defaults(func=_cmd_train)

    p_sweep = sub.add_parser("sweep", help="k x seed sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--k-list", help="comma list of candidate counts")
    p_sweep.add_argument("--seeds", help="comma list of seeds")
    p_sweep.add_argument("--jobs", type=int, help="parallel sweep processes")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_oracle = sub.add_parser("oracle", help="write theory-oracle tables")
    add_common(p_oracle, with_env=False)
    p_oracle.set_defaults(func=_cmd_oracle)

    p_trace = sub.add_parser("trace", help="train and export a routing trace")
    add_common(p_trace)
    p_trace.set_defaults(func=_cmd_trace)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
