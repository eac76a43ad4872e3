"""Training loop, run diagnostics, sweeps, and the routing trace.

One train() call owns every random stream it uses (derived from the
config seed via spawned SeedSequences), so a config fully determines
the metrics log byte for byte.
"""

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .critic import CriticEnsemble
from .envs import evaluate_policy
from .nn import AdamState, Mlp, adam_step, save_params
from .prior import BallPrior
from .routing import (
    NonFiniteLossError,
    drol_actor_loss,
    pointwise_actor_loss,
    route_batch,
)
from .validation import as_float_array, check_choice, check_in_range, check_positive


class TrainingDiverged(RuntimeError):
    """A loss left the finite range; carries the partial result."""

    def __init__(self, message, result=None, step=None, terms=None):
        super().__init__(message)
        self.result = result
        self.step = step
        self.terms = dict(terms or {})


@dataclass
class TrainConfig:
    """Everything a run needs besides the dataset itself."""

    actor_mode: str = "drol"
    k: int = 16
    alpha: float = 1.0
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    batch_size: int = 256
    steps: int = 20000
    actor_hidden: tuple = (64, 64)
    critic_hidden: tuple = (64, 64)
    activation: str = "gelu"
    n_critics: int = 2
    q_agg: str = "mean"
    d_z: int | None = None
    latent_radius: float | None = None
    seed: int = 0
    metrics_interval: int = 100
    eval_interval: int = 0
    eval_episodes: int = 50
    checkpoint_fraction: float = 0.05

    def __post_init__(self):
        check_choice(self.actor_mode, "actor_mode", {"drol", "pointwise"})
        check_positive(self.k, "k")
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        check_in_range(self.gamma, "gamma", 0.0, 1.0, include_low=True)
        check_in_range(self.tau, "tau", 0.0, 1.0, include_high=True)
        check_positive(self.lr, "lr")
        check_positive(self.batch_size, "batch_size")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        check_choice(self.q_agg, "q_agg", {"mean", "min"})
        if self.n_critics < 0:
            raise ValueError(f"n_critics must be >= 0, got {self.n_critics}")
        if self.n_critics == 0 and self.alpha > 0:
            raise ValueError("alpha > 0 requires at least one critic")
        check_positive(self.metrics_interval, "metrics_interval")
        if self.eval_interval < 0:
            raise ValueError("eval_interval must be >= 0")
        check_positive(self.eval_episodes, "eval_episodes")
        check_in_range(
            self.checkpoint_fraction, "checkpoint_fraction", 0.0, 1.0,
            include_high=True,
        )
        self.actor_hidden = tuple(int(h) for h in self.actor_hidden)
        self.critic_hidden = tuple(int(h) for h in self.critic_hidden)


@dataclass
class MetricsRecord:
    step: int
    bc_loss: float
    q_term: float
    actor_loss: float
    td_loss: float | None = None
    cand_pairwise: float | None = None
    cand_divergence: float | None = None
    winner_counts: tuple | None = None
    eval_return: float | None = None
    eval_return_std: float | None = None
    support_violation: float | None = None


@dataclass
class TrainResult:
    config: TrainConfig
    actor: Mlp
    critic: CriticEnsemble | None
    metrics: list
    checkpoints: list = field(default_factory=list)
    halted: bool = False


METRICS_COLUMNS = (
    "step",
    "bc_loss",
    "q_term",
    "actor_loss",
    "td_loss",
    "cand_pairwise",
    "cand_divergence",
    "winner_hist",
    "eval_return",
    "eval_return_std",
    "support_violation",
)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def metrics_row(record):
    hist = (
        ""
        if record.winner_counts is None
        else ";".join(str(int(c)) for c in record.winner_counts)
    )
    cells = [
        _fmt(record.step),
        _fmt(record.bc_loss),
        _fmt(record.q_term),
        _fmt(record.actor_loss),
        _fmt(record.td_loss),
        _fmt(record.cand_pairwise),
        _fmt(record.cand_divergence),
        hist,
        _fmt(record.eval_return),
        _fmt(record.eval_return_std),
        _fmt(record.support_violation),
    ]
    return ",".join(cells)


def write_metrics_csv(records, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(METRICS_COLUMNS) + "\n")
        for record in records:
            fh.write(metrics_row(record) + "\n")
        fh.flush()


def candidate_diagnostics(candidate_actions):
    """Dispersion summaries of a candidate set, normalized by d_a.

    Accepts (k, d_a) or a batch (b, k, d_a); batch results are averaged.
    Returns (pairwise, divergence): the mean squared distance between
    distinct candidates and the mean squared distance to the centroid.
    pairwise is None when k < 2.
    """
    cand = as_float_array(candidate_actions, "candidate_actions")
    if cand.ndim == 2:
        cand = cand[None, :, :]
    if cand.ndim != 3:
        raise ValueError(f"expected (k, d_a) or (b, k, d_a), got {cand.shape}")
    _, k, d_a = cand.shape
    centroid = cand.mean(axis=1, keepdims=True)
    deviations = cand - centroid
    divergence = float(np.mean(np.sum(deviations**2, axis=2))) / d_a
    if k < 2:
        return None, divergence
    # sum of squared pairwise distances relates to the centroid spread:
    # sum_{i,j} ||x_i - x_j||^2 = 2k * sum_i ||x_i - xbar||^2
    per_batch = np.sum(deviations**2, axis=(1, 2))
    pairwise = float(np.mean(2.0 * k * per_batch / (k * (k - 1)))) / d_a
    return pairwise, divergence


def routed_bc_probe(actor, dataset, prior, k, samples=2048, seed=0):
    """Monte Carlo routed BC loss of a frozen actor at candidate count k.

    Draws `samples` dataset transitions and fresh latent sets, routes
    each action, and averages the winner squared distance. Probe only;
    no gradients are produced.
    """
    k = int(k)
    check_positive(k, "k")
    rng = np.random.Generator(np.random.PCG64(seed))
    idx = rng.integers(0, len(dataset), size=samples)
    states = dataset.states[idx]
    actions = dataset.actions[idx]
    latents = prior.sample(samples * k)
    inputs = np.concatenate([np.repeat(states, k, axis=0), latents], axis=1)
    cand = actor.forward(inputs).reshape(samples, k, -1)
    _, sq = route_batch(cand, actions)
    return float(np.mean(sq))


def _diagnostics_probe(actor, dataset, prior, k, rng, probe_size=64):
    idx = rng.integers(0, len(dataset), size=probe_size)
    states = dataset.states[idx]
    actions = dataset.actions[idx]
    latents = prior.sample(probe_size * k)
    inputs = np.concatenate([np.repeat(states, k, axis=0), latents], axis=1)
    cand = actor.forward(inputs).reshape(probe_size, k, -1)
    pairwise, divergence = candidate_diagnostics(cand)
    winners, _ = route_batch(cand, actions)
    counts = np.bincount(winners, minlength=k)
    return pairwise, divergence, tuple(int(c) for c in counts)


def train(config, dataset, env=None, out_dir=None):
    """Run the interleaved actor/critic loop on an offline dataset.

    Per step: sample a minibatch, update the actor (routed winner-only
    loss or the pointwise baseline), one Bellman regression step per
    critic member, then a Polyak move of the target copies. Metrics are
    recorded every metrics_interval steps and, when out_dir is given,
    streamed to metrics.csv and flushed as written. Raises
    TrainingDiverged (after dumping the last finite checkpoint and a
    diagnostic summary) if any loss goes non-finite.
    """
    d_s, d_a = dataset.d_s, dataset.d_a
    if env is not None and (env.d_s != d_s or env.d_a != d_a):
        raise ValueError(
            f"dataset dims ({d_s}, {d_a}) do not match env "
            f"({env.d_s}, {env.d_a})"
        )
    if config.eval_interval > 0 and env is None:
        raise ValueError("eval_interval > 0 requires an env")

    root = np.random.SeedSequence(config.seed)
    (
        actor_ss,
        critic_ss,
        prior_ss,
        batch_ss,
        diag_ss,
        eval_ss,
    ) = root.spawn(6)

    d_z = config.d_z if config.d_z is not None else d_a
    radius = (
        config.latent_radius
        if config.latent_radius is not None
        else float(np.sqrt(d_a))
    )
    prior = BallPrior(d_z, radius=radius, seed=prior_ss)
    diag_prior = BallPrior(d_z, radius=radius, seed=diag_ss.spawn(1)[0])
    diag_rng = np.random.Generator(np.random.PCG64(diag_ss.spawn(1)[0]))
    batch_rng = np.random.Generator(np.random.PCG64(batch_ss))

    actor = Mlp(
        (d_s + d_z, *config.actor_hidden, d_a),
        activation=config.activation,
        rng=np.random.Generator(np.random.PCG64(actor_ss)),
    )
    actor_opt = AdamState.for_net(actor, lr=config.lr)
    critic = None
    if config.n_critics > 0:
        critic = CriticEnsemble(
            d_s,
            d_a,
            hidden=config.critic_hidden,
            n_critics=config.n_critics,
            aggregation=config.q_agg,
            gamma=config.gamma,
            tau=config.tau,
            lr=config.lr,
            activation=config.activation,
            rng=np.random.Generator(np.random.PCG64(critic_ss)),
        )

    cadence = (
        max(1, int(round(config.steps * config.checkpoint_fraction)))
        if config.steps > 0 and config.checkpoint_fraction > 0
        else None
    )
    checkpoints = [(0, actor.copy())]
    metrics = []
    result = TrainResult(
        config=config, actor=actor, critic=critic, metrics=metrics,
        checkpoints=checkpoints,
    )

    metrics_fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        metrics_fh = open(os.path.join(out_dir, "metrics.csv"), "w", newline="\n")
        metrics_fh.write(",".join(METRICS_COLUMNS) + "\n")
        metrics_fh.flush()

    def emit(record):
        metrics.append(record)
        if metrics_fh is not None:
            metrics_fh.write(metrics_row(record) + "\n")
            metrics_fh.flush()

    eval_counter = 0
    try:
        for step in range(1, config.steps + 1):
            states, actions, rewards, next_states, dones = dataset.sample_batch(
                batch_rng, config.batch_size
            )
            try:
                if config.actor_mode == "drol":
                    report = drol_actor_loss(
                        actor, critic, states, actions, prior,
                        config.k, config.alpha,
                    )
                else:
                    report = pointwise_actor_loss(
                        actor, critic, states, actions, prior, config.alpha
                    )
                adam_step(actor, actor_opt)
                td_loss = None
                if critic is not None:
                    td_loss = critic.update(
                        actor, prior, states, actions, rewards,
                        next_states, dones,
                    )
                    if not np.isfinite(td_loss):
                        raise NonFiniteLossError(
                            "critic TD loss is non-finite",
                            terms={"td_loss": td_loss},
                        )
                    critic.polyak()
            except (NonFiniteLossError, FloatingPointError) as err:
                result.halted = True
                terms = getattr(err, "terms", {})
                if out_dir is not None:
                    save_params(
                        checkpoints[-1][1],
                        os.path.join(out_dir, "checkpoint_lastgood.bin"),
                    )
                    with open(os.path.join(out_dir, "divergence.json"), "w") as fh:
                        json.dump(
                            {"step": step, "error": str(err), "terms": terms},
                            fh, sort_keys=True, indent=2,
                        )
                raise TrainingDiverged(
                    f"training halted at step {step}: {err}",
                    result=result, step=step, terms=terms,
                ) from err

            if cadence is not None and step % cadence == 0:
                checkpoints.append((step, actor.copy()))

            if step % config.metrics_interval == 0 or step == config.steps:
                pairwise, divergence, counts = _diagnostics_probe(
                    actor, dataset, diag_prior, config.k, diag_rng
                )
                record = MetricsRecord(
                    step=step,
                    bc_loss=report.bc_term,
                    q_term=report.q_term,
                    actor_loss=report.total,
                    td_loss=td_loss,
                    cand_pairwise=pairwise,
                    cand_divergence=divergence,
                    winner_counts=counts,
                )
                if (
                    config.eval_interval > 0
                    and (step % config.eval_interval == 0 or step == config.steps)
                ):
                    eval_prior = BallPrior(
                        d_z, radius=radius, seed=eval_ss.spawn(1)[0]
                    )
                    eval_counter += 1
                    eval_report = evaluate_policy(
                        env, actor, eval_prior,
                        episodes=config.eval_episodes,
                        seed=config.seed * 100003 + eval_counter,
                    )
                    record.eval_return = eval_report.mean_return
                    record.eval_return_std = eval_report.return_std
                    record.support_violation = eval_report.support_violation
                emit(record)

        if checkpoints[-1][0] != config.steps:
            checkpoints.append((config.steps, actor.copy()))
        if out_dir is not None:
            save_params(actor, os.path.join(out_dir, "checkpoint.bin"))
    finally:
        if metrics_fh is not None:
            metrics_fh.close()
    return result


def voronoi_trace(checkpoints, probe_state, actions, prior, k):
    """Winner-evolution trace across training checkpoints.

    One fixed latent set is drawn up front and reused at every
    checkpoint, so winner changes reflect parameter movement only. For
    each checkpointed actor the probe state's candidate set is decoded
    and each action is routed; a handoff is a winner change between
    consecutive checkpoints for the same action.
    """
    k = int(k)
    check_positive(k, "k")
    probe_state = as_float_array(probe_state, "probe_state", ndim=1)
    actions = as_float_array(actions, "actions", ndim=2)
    if not checkpoints:
        raise ValueError("need at least one checkpoint")
    latents = prior.sample(k)
    inputs = np.concatenate(
        [np.repeat(probe_state[None, :], k, axis=0), latents], axis=1
    )
    steps = []
    winner_rows = []
    for step, actor in checkpoints:
        cand = actor.forward(inputs)
        winners, _ = route_batch(
            np.broadcast_to(cand[None, :, :], (len(actions), k, cand.shape[1])),
            actions,
        )
        steps.append(int(step))
        winner_rows.append(winners.astype(int))
    winner_matrix = np.stack(winner_rows, axis=0)
    changes = winner_matrix[1:] != winner_matrix[:-1]
    return {
        "steps": steps,
        "k": k,
        "probe_state": probe_state.tolist(),
        "actions": actions.tolist(),
        "latents": latents.tolist(),
        "winners": winner_matrix.tolist(),
        "handoff_events": int(changes.sum()),
        "actions_with_handoff": int(changes.any(axis=0).sum()),
    }


def _sweep_cell(payload):
    """One (k, seed) sweep cell; returns its summary row. Top-level so
    it can cross a process boundary."""
    config, dataset, env, probe_samples = payload
    row = {
        "k": config.k,
        "seed": config.seed,
        "status": "ok",
        "final_bc": None,
        "final_actor_loss": None,
        "final_td": None,
        "probe_bc": None,
        "eval_return": None,
        "support_violation": None,
    }
    try:
        result = train(config, dataset, env=env)
        last = result.metrics[-1] if result.metrics else None
        if last is not None:
            row["final_bc"] = last.bc_loss
            row["final_actor_loss"] = last.actor_loss
            row["final_td"] = last.td_loss
            row["eval_return"] = last.eval_return
            row["support_violation"] = last.support_violation
        d_a = dataset.d_a
        d_z = config.d_z if config.d_z is not None else d_a
        radius = (
            config.latent_radius
            if config.latent_radius is not None
            else float(np.sqrt(d_a))
        )
        probe_prior = BallPrior(d_z, radius=radius, seed=990000 + config.seed)
        row["probe_bc"] = routed_bc_probe(
            result.actor, dataset, probe_prior, k=config.k,
            samples=probe_samples, seed=770000 + config.seed,
        )
    except TrainingDiverged:
        row["status"] = "diverged"
    except (ValueError, FloatingPointError) as err:
        row["status"] = f"error: {err}"
    return row


def run_sweep(base_config, dataset, k_values, seeds, env=None, out_path=None,
              probe_samples=2048, n_jobs=1):
    """Train a grid of (k, seed) runs and tabulate end-of-run summaries.

    Each cell reports the final metrics row plus a frozen-actor routed
    BC probe at its own k. A run that diverges or errors is recorded
    with its status and the sweep continues. Cells are independent
    (each run derives every stream from its own seed), so n_jobs > 1
    distributes them across processes; row order is by (k, seed)
    regardless.
    """
    payloads = [
        (replace(base_config, k=int(k), seed=int(seed)), dataset, env,
         probe_samples)
        for k in k_values
        for seed in seeds
    ]
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=int(n_jobs)) as pool:
            rows = list(pool.map(_sweep_cell, payloads))
    else:
        rows = [_sweep_cell(p) for p in payloads]
    if out_path is not None:
        sweep_to_csv(rows, out_path)
    return rows


SWEEP_COLUMNS = (
    "k", "seed", "status", "final_bc", "final_actor_loss", "final_td",
    "probe_bc", "eval_return", "support_violation",
)


def sweep_to_csv(rows, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(",".join(SWEEP_COLUMNS) + "\n")
        for row in rows:
            cells = []
            for col in SWEEP_COLUMNS:
                val = row.get(col)
                if val is None:
                    cells.append("")
                elif isinstance(val, str):
                    cells.append(val.replace(",", ";"))
                elif isinstance(val, (int, np.integer)):
                    cells.append(str(int(val)))
                else:
                    cells.append(repr(float(val)))
            fh.write(",".join(cells) + "\n")
