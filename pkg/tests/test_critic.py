"""Bellman regression, aggregation, and target-network behavior."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from drol.critic import CriticEnsemble, critic_update
from drol.nn import Mlp
from drol.prior import BallPrior


def _constant_actor(d_s, d_z, d_a, value=0.0):
    actor = Mlp((d_s + d_z, d_a), rng=0)
    actor.weights[0][:] = 0.0
    actor.biases[0][:] = value
    return actor


def test_aggregation_mean_and_min():
    rng = np.random.default_rng(0)
    states = rng.normal(size=(10, 2))
    actions = rng.normal(size=(10, 1))
    for agg in ("mean", "min"):
        critic = CriticEnsemble(2, 1, hidden=(6,), n_critics=3,
                                aggregation=agg, rng=1)
        sa = np.concatenate([states, actions], axis=1)
        members = np.stack([net.forward(sa)[:, 0] for net in critic.online])
        want = members.mean(axis=0) if agg == "mean" else members.min(axis=0)
        assert_allclose(critic.q_values(states, actions), want, rtol=1e-12)


def test_q_value_single_matches_batch():
    critic = CriticEnsemble(2, 1, hidden=(6,), n_critics=2, rng=2)
    state = np.array([0.3, -0.7])
    action = np.array([0.1])
    single = critic.q_value(state, action)
    batch = critic.q_values(state[None, :], action[None, :])[0]
    assert_allclose(single, batch, rtol=1e-13)


def test_q_value_dimension_mismatch_errors():
    critic = CriticEnsemble(2, 1, hidden=(4,), rng=0)
    with pytest.raises(ValueError):
        critic.q_value(np.zeros(2), np.zeros(2))
    with pytest.raises(ValueError):
        critic.q_value(np.zeros(3), np.zeros(1))
    with pytest.raises(ValueError):
        critic.q_values(np.zeros((4, 2)), np.zeros((3, 1)))


@pytest.mark.parametrize("agg", ["mean", "min"])
def test_action_gradient_matches_finite_differences(agg):
    rng = np.random.default_rng(3)
    critic = CriticEnsemble(2, 2, hidden=(7,), n_critics=2,
                            aggregation=agg, rng=4)
    states = rng.normal(size=(5, 2))
    actions = rng.normal(size=(5, 2))
    q, dq = critic.q_and_action_grad(states, actions)
    assert_allclose(q, critic.q_values(states, actions), rtol=1e-12)
    h = 1e-6
    for i in range(5):
        for j in range(2):
            up = actions.copy()
            up[i, j] += h
            down = actions.copy()
            down[i, j] -= h
            numeric = (
                critic.q_values(states, up)[i] - critic.q_values(states, down)[i]
            ) / (2 * h)
            assert abs(dq[i, j] - numeric) < 1e-6


def test_action_gradient_leaves_param_grads_clean():
    critic = CriticEnsemble(1, 1, hidden=(5,), n_critics=2, rng=5)
    critic.q_and_action_grad(np.zeros((3, 1)), np.ones((3, 1)))
    for net in critic.online:
        for _, g in net.param_arrays():
            assert_array_equal(g, np.zeros_like(g))


def test_update_returns_mean_member_loss():
    rng = np.random.default_rng(6)
    critic = CriticEnsemble(1, 1, hidden=(6,), n_critics=2, gamma=0.9,
                            lr=1e-3, rng=7)
    actor = _constant_actor(1, 1, 1)
    prior = BallPrior(1, 1.0, seed=8)
    states = rng.normal(size=(16, 1))
    actions = rng.normal(size=(16, 1))
    rewards = rng.normal(size=16)
    next_states = rng.normal(size=(16, 1))
    dones = np.zeros(16)

    check_prior = BallPrior(1, 1.0, seed=8)
    next_actions = np.zeros((16, 1))  # constant actor ignores inputs
    check_prior.sample(16)
    target = rewards + 0.9 * critic.q_values(next_states, next_actions,
                                             which="target")
    sa = np.concatenate([states, actions], axis=1)
    want = np.mean([
        np.mean((net.forward(sa)[:, 0] - target) ** 2) for net in critic.online
    ])
    got = critic_update(
        critic, actor, prior, states, actions, rewards, next_states, dones
    )
    assert_allclose(got, want, rtol=1e-12)


def test_td_loss_decreases_on_fixed_batch():
    rng = np.random.default_rng(9)
    critic = CriticEnsemble(1, 1, hidden=(8,), n_critics=2, gamma=0.0,
                            lr=1e-3, rng=10)
    actor = _constant_actor(1, 1, 1)
    states = rng.normal(size=(32, 1))
    actions = rng.normal(size=(32, 1))
    rewards = rng.normal(size=32)
    next_states = states.copy()
    dones = np.zeros(32)
    losses = []
    for i in range(3):
        prior = BallPrior(1, 1.0, seed=11)
        losses.append(critic.update(
            actor, prior, states, actions, rewards, next_states, dones
        ))
    assert losses[1] < losses[0]
    assert losses[2] < losses[1]


def test_gamma_zero_regresses_to_reward():
    rng = np.random.default_rng(12)
    critic = CriticEnsemble(1, 1, hidden=(16, 16), n_critics=2, gamma=0.0,
                            lr=3e-3, rng=13)
    actor = _constant_actor(1, 1, 1)
    prior = BallPrior(1, 1.0, seed=14)
    states = np.zeros((64, 1))
    actions = rng.uniform(-1, 1, size=(64, 1))
    rewards = np.sin(3.0 * actions[:, 0])
    for _ in range(3000):
        critic.update(actor, prior, states, actions, rewards,
                      np.zeros((64, 1)), np.ones(64))
    q = critic.q_values(states, actions)
    assert float(np.mean((q - rewards) ** 2)) < 1e-3


def test_terminal_transitions_ignore_next_state():
    rng = np.random.default_rng(15)
    states = rng.normal(size=(16, 1))
    actions = rng.normal(size=(16, 1))
    rewards = rng.normal(size=16)
    dones = np.ones(16)
    actor = _constant_actor(1, 1, 1)
    critics = []
    for next_states in (rng.normal(size=(16, 1)), 1000.0 * np.ones((16, 1))):
        critic = CriticEnsemble(1, 1, hidden=(6,), n_critics=2, rng=16)
        critic.update(actor, BallPrior(1, 1.0, seed=17), states, actions,
                      rewards, next_states, dones)
        critics.append(critic)
    for net_a, net_b in zip(critics[0].online, critics[1].online):
        for (pa, _), (pb, _) in zip(net_a.param_arrays(), net_b.param_arrays()):
            assert_array_equal(pa, pb)


def test_targets_start_equal_and_lag_after_updates():
    rng = np.random.default_rng(18)
    critic = CriticEnsemble(1, 1, hidden=(6,), n_critics=2, tau=0.01, rng=19)
    for online, target in zip(critic.online, critic.targets):
        for (po, _), (pt, _) in zip(online.param_arrays(), target.param_arrays()):
            assert_array_equal(po, pt)
    actor = _constant_actor(1, 1, 1)
    prior = BallPrior(1, 1.0, seed=20)
    for _ in range(5):
        critic.update(actor, prior, rng.normal(size=(8, 1)),
                      rng.normal(size=(8, 1)), rng.normal(size=8),
                      rng.normal(size=(8, 1)), np.zeros(8))
        critic.polyak()
    gaps = [
        float(np.max(np.abs(po - pt)))
        for online, target in zip(critic.online, critic.targets)
        for (po, _), (pt, _) in zip(online.param_arrays(), target.param_arrays())
    ]
    assert max(gaps) > 0.0


def test_constructor_validation():
    with pytest.raises(ValueError):
        CriticEnsemble(1, 1, n_critics=0)
    with pytest.raises(ValueError):
        CriticEnsemble(1, 1, aggregation="median")
    with pytest.raises(ValueError):
        CriticEnsemble(1, 1, gamma=1.5)
    with pytest.raises(ValueError):
        CriticEnsemble(1, 1, tau=0.0)
