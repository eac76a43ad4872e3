"""Candidate generation, nearest-candidate routing, and actor losses.

The actor is a one-step map f(state, latent) -> action. For each state
we decode a small set of candidate actions from fresh latent draws,
route the dataset action to the nearest candidate, and update only that
winner: squared-error pull toward the data plus a critic ascent term.
Non-winners receive no gradient at all. The routing argmin itself is
treated as a constant during differentiation.
"""

from dataclasses import dataclass

import numpy as np

from .validation import as_float_array, check_positive


class NonFiniteLossError(FloatingPointError):
    """Raised when a loss term leaves the finite range."""

    def __init__(self, message, terms=None):
        super().__init__(message)
        self.terms = dict(terms or {})


@dataclass
class CandidateSet:
    """Decoded candidate actions for one state."""

    state: np.ndarray      # (d_s,)
    latents: np.ndarray    # (k, d_z)
    actions: np.ndarray    # (k, d_a)

    def __post_init__(self):
        if self.latents.shape[0] != self.actions.shape[0]:
            raise ValueError(
                f"latents/actions disagree on k: "
                f"{self.latents.shape[0]} vs {self.actions.shape[0]}"
            )

    @property
    def k(self):
        return self.actions.shape[0]


@dataclass
class RoutingAssignment:
    winner: int
    sq_dist: float


@dataclass
class ActorLossReport:
    """Scalars from one actor update plus the per-sample winner indices."""

    bc_term: float
    q_term: float
    total: float
    winners: np.ndarray | None = None


def generate_candidates(actor, state, prior, k):
    """Decode k candidate actions for one state from fresh latents."""
    k = int(k)
    check_positive(k, "k")
    state = as_float_array(state, "state", ndim=1)
    latents = prior.sample(k)
    inputs = np.concatenate(
        [np.repeat(state[None, :], k, axis=0), latents], axis=1
    )
    actions = actor.forward(inputs)
    return CandidateSet(state=state, latents=latents, actions=actions)


def route(candidates, action):
    """Nearest candidate by squared distance; ties go to the lowest index."""
    if isinstance(candidates, CandidateSet):
        cand = candidates.actions
    else:
        cand = as_float_array(candidates, "candidates", ndim=2)
    action = as_float_array(action, "action", ndim=1)
    if cand.shape[1] != action.shape[0]:
        raise ValueError(
            f"candidate dim {cand.shape[1]} != action dim {action.shape[0]}"
        )
    diffs = cand - action[None, :]
    sq = np.einsum("kd,kd->k", diffs, diffs)
    winner = int(np.argmin(sq))
    return RoutingAssignment(winner=winner, sq_dist=float(sq[winner]))


def route_batch(candidate_actions, actions):
    """Vectorized routing. candidate_actions (B, k, d_a), actions (B, d_a).

    Returns winner indices (B,) and winner squared distances (B,).
    np.argmin returns the first minimum, which matches the lowest-index
    tie rule.
    """
    diffs = candidate_actions - actions[:, None, :]
    sq = np.einsum("bkd,bkd->bk", diffs, diffs)
    winners = np.argmin(sq, axis=1)
    rows = np.arange(sq.shape[0])
    return winners, sq[rows, winners]


def winner_candidate_grads(candidate_actions, actions, alpha=0.0, q_action_grads=None):
    """Loss pieces and per-candidate gradients for raw candidate arrays.

    For each sample the loss contribution is
        ||cand[winner] - action||^2 - alpha * Q(state, cand[winner])
    and the returned gradient array (same shape as candidate_actions) is
    zero except at the winner row, where it holds
        2 (cand[winner] - action) - alpha * dQ/da.
    The gradients are per-sample sums, not yet divided by batch size.
    q_action_grads, when given, must hold dQ/da at the winner of each
    sample, shape (B, d_a).
    """
    candidate_actions = as_float_array(candidate_actions, "candidate_actions", ndim=3)
    actions = as_float_array(actions, "actions", ndim=2)
    batch, _, d_a = candidate_actions.shape
    if actions.shape != (batch, d_a):
        raise ValueError(
            f"actions shape {actions.shape} does not match candidates "
            f"{candidate_actions.shape}"
        )
    winners, sq = route_batch(candidate_actions, actions)
    rows = np.arange(batch)
    winner_actions = candidate_actions[rows, winners]
    grads = np.zeros_like(candidate_actions)
    pull = 2.0 * (winner_actions - actions)
    if alpha != 0.0:
        if q_action_grads is None:
            raise ValueError("alpha != 0 requires q_action_grads at the winners")
        pull = pull - alpha * q_action_grads
    grads[rows, winners] = pull
    return winners, sq, winner_actions, grads


def drol_actor_loss(actor, critic, states, actions, prior, k, alpha):
    """Routed winner-only actor loss; accumulates gradients into actor.

    Returns an ActorLossReport with the behavior-cloning term
    mean_i ||cand_winner - a_i||^2, the critic term mean_i Q(s_i, cand_winner),
    and total = bc - alpha * q. The critic parameters stay frozen; its
    gradient enters only through the winner action. critic may be None
    when alpha == 0.
    """
    k = int(k)
    check_positive(k, "k")
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    states = as_float_array(states, "states", ndim=2)
    actions = as_float_array(actions, "actions", ndim=2)
    batch = states.shape[0]
    if actions.shape[0] != batch:
        raise ValueError("states and actions disagree on batch size")

    latents = prior.sample(batch * k)
    inputs = np.concatenate(
        [np.repeat(states, k, axis=0), latents], axis=1
    )
    cand = actor.forward(inputs).reshape(batch, k, -1)

    winners, sq = route_batch(cand, actions)
    rows = np.arange(batch)
    winner_actions = cand[rows, winners]

    if alpha != 0.0:
        q_win, dq_da = critic.q_and_action_grad(states, winner_actions)
        q_term = float(np.mean(q_win))
    else:
        dq_da = None
        q_term = 0.0

    bc_term = float(np.mean(sq))
    total = bc_term - alpha * q_term
    if not np.isfinite(total):
        raise NonFiniteLossError(
            "actor loss is non-finite",
            terms={"bc_term": bc_term, "q_term": q_term, "alpha": alpha},
        )

    grad_cand = np.zeros_like(cand)
    pull = 2.0 * (winner_actions - actions)
    if dq_da is not None:
        pull = pull - alpha * dq_da
    grad_cand[rows, winners] = pull / batch
    actor.backward(grad_cand.reshape(batch * k, -1))
    return ActorLossReport(
        bc_term=bc_term, q_term=q_term, total=total, winners=winners
    )


def pointwise_actor_loss(actor, critic, states, actions, prior, alpha):
    """Baseline without routing: one latent per state, fixed data target.

    The squared-error pull attaches to the single decoded action no
    matter how far the dataset action is, so competing modes average.
    Gradients accumulate into actor; critic stays frozen.
    """
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    states = as_float_array(states, "states", ndim=2)
    actions = as_float_array(actions, "actions", ndim=2)
    batch = states.shape[0]
    if actions.shape[0] != batch:
        raise ValueError("states and actions disagree on batch size")

    latents = prior.sample(batch)
    decoded = actor.forward(np.concatenate([states, latents], axis=1))
    diffs = decoded - actions

    if alpha != 0.0:
        q_val, dq_da = critic.q_and_action_grad(states, decoded)
        q_term = float(np.mean(q_val))
    else:
        dq_da = None
        q_term = 0.0

    bc_term = float(np.mean(np.einsum("bd,bd->b", diffs, diffs)))
    total = bc_term - alpha * q_term
    if not np.isfinite(total):
        raise NonFiniteLossError(
            "actor loss is non-finite",
            terms={"bc_term": bc_term, "q_term": q_term, "alpha": alpha},
        )

    grad = 2.0 * diffs
    if dq_da is not None:
        grad = grad - alpha * dq_da
    actor.backward(grad / batch)
    return ActorLossReport(bc_term=bc_term, q_term=q_term, total=total, winners=None)


def act(actor, state, prior):
    """Test-time policy: a single latent draw, no candidate search."""
    state = as_float_array(state, "state", ndim=1)
    latent = prior.sample(1)[0]
    return actor.forward(np.concatenate([state, latent]))


def act_batch(actor, states, prior):
    states = as_float_array(states, "states", ndim=2)
    latents = prior.sample(states.shape[0])
    return actor.forward(np.concatenate([states, latents], axis=1))
