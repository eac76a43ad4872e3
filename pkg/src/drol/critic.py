"""Ensemble action-value critic trained by one-step Bellman regression.

Bootstrap targets use slow-moving target copies and the current actor's
one-latent action at the next state. Members share the target scalar,
are regressed independently, and are read out through a configurable
aggregator (mean by default, min for a pessimistic variant).
"""

import numpy as np

from .nn import AdamState, Mlp, adam_step, polyak_update
from .routing import act_batch
from .validation import (
    as_float_array,
    check_choice,
    check_in_range,
    check_rng,
)


class CriticEnsemble:
    """n independent Q networks with Polyak-averaged target copies."""

    def __init__(
        self,
        d_s,
        d_a,
        hidden=(64, 64),
        n_critics=2,
        aggregation="mean",
        gamma=0.99,
        tau=0.005,
        lr=3e-4,
        activation="gelu",
        rng=None,
    ):
        if n_critics < 1:
            raise ValueError(f"n_critics must be >= 1, got {n_critics}")
        check_choice(aggregation, "aggregation", {"mean", "min"})
        check_in_range(gamma, "gamma", 0.0, 1.0, include_low=True)
        check_in_range(tau, "tau", 0.0, 1.0, include_high=True)
        self.d_s = int(d_s)
        self.d_a = int(d_a)
        self.aggregation = aggregation
        self.gamma = float(gamma)
        self.tau = float(tau)
        rng = check_rng(rng)
        sizes = (self.d_s + self.d_a, *hidden, 1)
        self.online = [
            Mlp(sizes, activation=activation, rng=rng) for _ in range(n_critics)
        ]
        self.targets = [net.copy() for net in self.online]
        self.optimizers = [AdamState.for_net(net, lr=lr) for net in self.online]

    @property
    def n_critics(self):
        return len(self.online)

    def _nets(self, which):
        check_choice(which, "which", {"online", "target"})
        return self.online if which == "online" else self.targets

    def _aggregate(self, member_values):
        stacked = np.stack(member_values, axis=0)
        if self.aggregation == "mean":
            return stacked.mean(axis=0)
        return stacked.min(axis=0)

    def q_values(self, states, actions, which="online"):
        """Aggregated Q for a batch; shapes (B, d_s) and (B, d_a) -> (B,)."""
        states = as_float_array(states, "states", ndim=2, shape=(None, self.d_s))
        actions = as_float_array(actions, "actions", ndim=2, shape=(None, self.d_a))
        if states.shape[0] != actions.shape[0]:
            raise ValueError("states and actions disagree on batch size")
        sa = np.concatenate([states, actions], axis=1)
        return self._aggregate([net.forward(sa)[:, 0] for net in self._nets(which)])

    def q_value(self, state, action, which="online"):
        """Aggregated Q for a single state-action pair."""
        state = as_float_array(state, "state", ndim=1, shape=(self.d_s,))
        action = as_float_array(action, "action", ndim=1, shape=(self.d_a,))
        return float(
            self.q_values(state[None, :], action[None, :], which=which)[0]
        )

    def q_and_action_grad(self, states, actions):
        """Online aggregated Q and its gradient w.r.t. the action input.

        Parameter gradient buffers are left untouched, so this is safe
        to call inside an actor loss where the critic is frozen.
        """
        states = as_float_array(states, "states", ndim=2, shape=(None, self.d_s))
        actions = as_float_array(actions, "actions", ndim=2, shape=(None, self.d_a))
        batch = states.shape[0]
        sa = np.concatenate([states, actions], axis=1)
        values = []
        input_grads = []
        for net in self.online:
            values.append(net.forward(sa)[:, 0])
            input_grads.append(
                net.backward(np.ones((batch, 1)), accumulate=False)
            )
        stacked = np.stack(values, axis=0)
        if self.aggregation == "mean":
            q = stacked.mean(axis=0)
            dq = np.mean(input_grads, axis=0)
        else:
            picks = np.argmin(stacked, axis=0)
            q = stacked[picks, np.arange(batch)]
            grads = np.stack(input_grads, axis=0)
            dq = grads[picks, np.arange(batch)]
        return q, dq[:, self.d_s:]

    def update(self, actor, prior, states, actions, rewards, next_states, dones):
        """One Bellman regression step for every member; returns mean TD loss.

        The bootstrap action is a single latent draw through the actor at
        the next state, and terminal transitions drop the bootstrap term.
        """
        states = as_float_array(states, "states", ndim=2, shape=(None, self.d_s))
        actions = as_float_array(actions, "actions", ndim=2, shape=(None, self.d_a))
        rewards = as_float_array(rewards, "rewards", ndim=1)
        next_states = as_float_array(
            next_states, "next_states", ndim=2, shape=(None, self.d_s)
        )
        dones = np.asarray(dones, dtype=np.float64)
        batch = states.shape[0]

        next_actions = act_batch(actor, next_states, prior)
        next_q = self.q_values(next_states, next_actions, which="target")
        target = rewards + self.gamma * (1.0 - dones) * next_q

        sa = np.concatenate([states, actions], axis=1)
        losses = []
        for net, opt in zip(self.online, self.optimizers):
            q = net.forward(sa)[:, 0]
            residual = q - target
            losses.append(float(np.mean(residual * residual)))
            net.backward((2.0 / batch) * residual[:, None])
            adam_step(net, opt)
        return float(np.mean(losses))

    def polyak(self):
        """Move every target copy toward its online member by tau."""
        for target, online in zip(self.targets, self.online):
            polyak_update(target, online, self.tau)


def critic_update(critic, actor, prior, states, actions, rewards, next_states, dones):
    """Functional alias for CriticEnsemble.update."""
    return critic.update(actor, prior, states, actions, rewards, next_states, dones)
