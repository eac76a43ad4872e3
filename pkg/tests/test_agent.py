"""Estimator front end: params round-trip, fit/predict surface."""

import numpy as np
import pytest
from numpy.testing import assert_array_equal
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from drol.agent import DrolPolicy
from drol.envs import generate_dataset, make_interval_bandit


@pytest.fixture(scope="module")
def bandit_setup():
    env = make_interval_bandit(2, 0.3, 1.5, (0.0, 1.0))
    dataset = generate_dataset(env, 1500, seed=0)
    return env, dataset


@pytest.fixture(scope="module")
def fitted(bandit_setup):
    env, dataset = bandit_setup
    policy = DrolPolicy(k=4, alpha=0.0, n_critics=0, steps=150,
                        batch_size=64, actor_hidden=(16, 16), seed=3)
    return policy.fit(dataset), env, dataset


def test_get_params_round_trip():
    policy = DrolPolicy(k=9, alpha=0.25, seed=7)
    params = policy.get_params()
    assert params["k"] == 9
    assert params["alpha"] == 0.25
    rebuilt = DrolPolicy(**params)
    assert rebuilt.get_params() == params


def test_set_params_chains():
    policy = DrolPolicy()
    policy.set_params(k=3, steps=10)
    assert policy.k == 3
    assert policy.steps == 10
    with pytest.raises(ValueError):
        policy.set_params(not_a_param=1)


def test_clone_drops_fitted_state(fitted):
    policy, _, _ = fitted
    fresh = clone(policy)
    assert fresh.get_params() == policy.get_params()
    assert not hasattr(fresh, "actor_")


def test_unfitted_raises():
    policy = DrolPolicy()
    with pytest.raises(NotFittedError):
        policy.predict(np.zeros((1, 1)))
    with pytest.raises(NotFittedError):
        policy.sample_candidates(np.zeros(1))


def test_fit_requires_dataset_type():
    with pytest.raises(TypeError):
        DrolPolicy(steps=1).fit(np.zeros((10, 2)))


def test_fit_sets_state_and_returns_self(bandit_setup):
    _, dataset = bandit_setup
    policy = DrolPolicy(k=2, alpha=0.0, n_critics=0, steps=20,
                        batch_size=32, actor_hidden=(8,), seed=0)
    out = policy.fit(dataset)
    assert out is policy
    assert policy.d_s_ == 1 and policy.d_a_ == 1
    assert policy.d_z_ == 1
    assert policy.latent_radius_ == 1.0
    assert policy.metrics_ == policy.result_.metrics


def test_predict_shape_and_determinism(fitted):
    policy, _, dataset = fitted
    states = dataset.states[:16]
    first = policy.predict(states)
    second = policy.predict(states)
    assert first.shape == (16, 1)
    assert_array_equal(first, second)


def test_predict_validates_state_dim(fitted):
    policy, _, _ = fitted
    with pytest.raises(ValueError):
        policy.predict(np.zeros((4, 3)))


def test_sample_candidates(fitted):
    policy, _, _ = fitted
    cand = policy.sample_candidates(np.zeros(1))
    assert cand.latents.shape == (4, 1)
    assert cand.actions.shape == (4, 1)
    wide = policy.sample_candidates(np.zeros(1), k=11)
    assert wide.actions.shape == (11, 1)
    again = policy.sample_candidates(np.zeros(1), k=11)
    assert_array_equal(wide.actions, again.actions)


def test_predict_and_candidates_use_distinct_latents(fitted):
    policy, _, _ = fitted
    from_predict = policy.predict(np.zeros((4, 1)))
    cand = policy.sample_candidates(np.zeros(1), k=4)
    assert not np.array_equal(from_predict, cand.actions)


def test_evaluate_reports(fitted):
    policy, env, _ = fitted
    report = policy.evaluate(env, episodes=6, seed=0)
    assert report.episodes == 6
    assert np.isfinite(report.mean_return)
    assert 0.0 <= report.support_violation <= 1.0


def test_refit_same_seed_reproduces(bandit_setup):
    _, dataset = bandit_setup
    kw = dict(k=2, alpha=0.0, n_critics=0, steps=50, batch_size=32,
              actor_hidden=(8,), seed=5)
    pred_a = DrolPolicy(**kw).fit(dataset).predict(dataset.states[:8])
    pred_b = DrolPolicy(**kw).fit(dataset).predict(dataset.states[:8])
    assert_array_equal(pred_a, pred_b)
