"""Uniform sampling inside a d-dimensional ball.

The latent codes fed to the actor are drawn uniformly from a ball whose
radius defaults to the square root of the action dimension, so the
latent second moment stays comparable to a unit-scale action space.
"""

import numpy as np

from .validation import check_positive, check_rng


class BallPrior:
    """Uniform distribution on the ball of given radius in R^d.

    Samples are produced as (Gaussian direction) * (radius * U^(1/d)),
    which is uniform on the ball for any dimension. The prior owns its
    random stream; split() spawns an independent one.
    """

    def __init__(self, d_z, radius=1.0, seed=0):
        self.d_z = int(d_z)
        if self.d_z < 1:
            raise ValueError(f"d_z must be >= 1, got {d_z}")
        self.radius = float(check_positive(radius, "radius"))
        if isinstance(seed, np.random.SeedSequence):
            self._seed_seq = seed
        else:
            self._seed_seq = np.random.SeedSequence(seed)
        self._rng = check_rng(self._seed_seq)

    @classmethod
    def for_action_dim(cls, d_a, d_z=None, seed=0):
        """Default sizing rule: d_z = d_a and radius = sqrt(d_a)."""
        d_a = int(d_a)
        if d_a < 1:
            raise ValueError(f"d_a must be >= 1, got {d_a}")
        if d_z is None:
            d_z = d_a
        return cls(d_z, radius=float(np.sqrt(d_a)), seed=seed)

    def sample(self, count):
        """Draw count latents, shape (count, d_z), norms <= radius."""
        count = int(count)
        if count < 1:
            raise ValueError(f"count must be >= 1, got {count}")
        direction = self._rng.standard_normal((count, self.d_z))
        norms = np.linalg.norm(direction, axis=1, keepdims=True)
        # a zero Gaussian vector has probability zero but guard anyway
        norms[norms == 0.0] = 1.0
        u = self._rng.random((count, 1))
        radii = self.radius * u ** (1.0 / self.d_z)
        return direction / norms * radii

    def second_moment(self):
        """E ||z||^2 = d / (d + 2) * R^2 for the uniform ball."""
        return self.d_z / (self.d_z + 2.0) * self.radius ** 2

    def radius_cdf(self, r):
        """CDF of ||z||: (r / R)^d on [0, R]."""
        r = np.asarray(r, dtype=np.float64)
        return np.clip(r / self.radius, 0.0, 1.0) ** self.d_z

    def split(self):
        """Spawn a prior with identical geometry and a fresh stream."""
        child = self._seed_seq.spawn(1)[0]
        return BallPrior(self.d_z, radius=self.radius, seed=child)
