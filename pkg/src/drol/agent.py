"""Estimator-style front end: fit on an offline dataset, predict actions."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .envs import OfflineDataset, evaluate_policy
from .prior import BallPrior
from .routing import generate_candidates
from .trainer import TrainConfig, train
from .validation import as_float_array


class DrolPolicy(BaseEstimator):
    """Routed candidate-set actor with a scikit-learn estimator surface.

    Hyperparameters are stored verbatim so get_params / set_params /
    clone compose with the usual tooling. fit() runs the offline
    training loop; predict() decodes one action per state from a single
    latent draw (the test-time policy; no candidate search). The
    latent draws used by predict are reseeded per call, so repeated
    predictions on the same states agree.

    >>> policy = DrolPolicy(k=8, alpha=0.0, steps=200, seed=1)
    >>> policy.fit(dataset).predict(dataset.states[:4])
    """

    def __init__(
        self,
        actor_mode="drol",
        k=16,
        alpha=1.0,
        gamma=0.99,
        tau=0.005,
        learning_rate=3e-4,
        batch_size=256,
        steps=20000,
        actor_hidden=(64, 64),
        critic_hidden=(64, 64),
        n_critics=2,
        q_agg="mean",
        d_z=None,
        latent_radius=None,
        seed=0,
        metrics_interval=100,
        eval_interval=0,
        eval_episodes=50,
    ):
        self.actor_mode = actor_mode
        self.k = k
        self.alpha = alpha
        self.gamma = gamma
        self.tau = tau
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.steps = steps
        self.actor_hidden = actor_hidden
        self.critic_hidden = critic_hidden
        self.n_critics = n_critics
        self.q_agg = q_agg
        self.d_z = d_z
        self.latent_radius = latent_radius
        self.seed = seed
        self.metrics_interval = metrics_interval
        self.eval_interval = eval_interval
        self.eval_episodes = eval_episodes

    def _config(self):
        return TrainConfig(
            actor_mode=self.actor_mode,
            k=self.k,
            alpha=self.alpha,
            gamma=self.gamma,
            tau=self.tau,
            lr=self.learning_rate,
            batch_size=self.batch_size,
            steps=self.steps,
            actor_hidden=tuple(self.actor_hidden),
            critic_hidden=tuple(self.critic_hidden),
            n_critics=self.n_critics,
            q_agg=self.q_agg,
            d_z=self.d_z,
            latent_radius=self.latent_radius,
            seed=self.seed,
            metrics_interval=self.metrics_interval,
            eval_interval=self.eval_interval,
            eval_episodes=self.eval_episodes,
        )

    def fit(self, dataset, env=None, out_dir=None):
        """Train actor and critic on an OfflineDataset; returns self."""
        if not isinstance(dataset, OfflineDataset):
            raise TypeError(
                f"fit expects an OfflineDataset, got {type(dataset).__name__}"
            )
        config = self._config()
        result = train(config, dataset, env=env, out_dir=out_dir)
        self.result_ = result
        self.actor_ = result.actor
        self.critic_ = result.critic
        self.metrics_ = result.metrics
        self.d_s_ = dataset.d_s
        self.d_a_ = dataset.d_a
        self.d_z_ = config.d_z if config.d_z is not None else dataset.d_a
        self.latent_radius_ = (
            config.latent_radius
            if config.latent_radius is not None
            else float(np.sqrt(dataset.d_a))
        )
        return self

    def _check_fitted(self):
        if not hasattr(self, "actor_"):
            raise NotFittedError(
                "this DrolPolicy instance is not fitted yet; call fit first"
            )

    def _fresh_prior(self, salt):
        return BallPrior(
            self.d_z_,
            radius=self.latent_radius_,
            seed=np.random.SeedSequence(entropy=self.seed, spawn_key=(salt,)),
        )

    def predict(self, states):
        """One action per state from a single latent draw each."""
        self._check_fitted()
        states = as_float_array(states, "states", ndim=2, shape=(None, self.d_s_))
        prior = self._fresh_prior(salt=1)
        latents = prior.sample(states.shape[0])
        return self.actor_.forward(np.concatenate([states, latents], axis=1))

    def sample_candidates(self, state, k=None, salt=2):
        """Decode a candidate set at one state (diagnostics helper)."""
        self._check_fitted()
        k = self.k if k is None else int(k)
        prior = self._fresh_prior(salt=salt)
        return generate_candidates(self.actor_, state, prior, k)

    def evaluate(self, env, episodes=50, seed=0):
        """Roll the fitted policy in an environment."""
        self._check_fitted()
        prior = self._fresh_prior(salt=3)
        return evaluate_policy(env, self.actor_, prior, episodes=episodes, seed=seed)
