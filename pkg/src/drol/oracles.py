"""Independent closed-form and quadrature oracles for the routed actor.

Everything here is computed without touching the learned components:
interval-mixture distortion by composite midpoint quadrature, optimal
prototype allocations from per-interval closed forms, the resting point
of the fixed-target baseline under a quadratic critic, and mode
coverage bounds with a Monte Carlo cross-check.
"""

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .validation import as_float_array, check_positive, check_rng


@dataclass
class QuantizerConfig:
    """Interval mixture: M intervals of half-width radius around centers.

    The mixture weights each interval equally and is uniform inside it.
    Centers must keep neighboring intervals separated by more than one
    interval diameter on each side (gap > 4 * radius).
    """

    centers: tuple
    radius: float
    k: int
    nodes_per_interval: int = 10000

    def __post_init__(self):
        self.centers = tuple(float(c) for c in self.centers)
        if len(self.centers) < 1:
            raise ValueError("need at least one interval")
        check_positive(self.radius, "radius")
        if sorted(self.centers) != list(self.centers):
            raise ValueError("centers must be sorted ascending")
        gaps = np.diff(self.centers)
        if len(gaps) and not np.all(gaps > 4.0 * self.radius):
            raise ValueError(
                f"intervals must be separated by gap > 4 * radius, "
                f"got min gap {gaps.min()} with radius {self.radius}"
            )
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")
        if self.nodes_per_interval < 2:
            raise ValueError("nodes_per_interval must be >= 2")

    @property
    def n_intervals(self):
        return len(self.centers)


def interval_distortion(q, radius):
    """Mean squared error of the best q-point quantizer of one interval.

    For Unif[c - r, c + r] split into q equal cells with midpoint
    prototypes: r^2 / (3 q^2).
    """
    q = int(q)
    check_positive(q, "q")
    check_positive(radius, "radius")
    return radius**2 / (3.0 * q**2)


def routed_distortion(prototypes, config):
    """Quadrature estimate of E_rho[ min_k (a - prototype_k)^2 ].

    Composite midpoint rule with config.nodes_per_interval nodes per
    interval; the integrand is piecewise quadratic so the default grid
    is far inside 1e-6 relative error.
    """
    prototypes = np.atleast_1d(as_float_array(prototypes, "prototypes"))
    if prototypes.ndim != 1 or len(prototypes) == 0:
        raise ValueError("prototypes must be a non-empty 1-d array")
    n = config.nodes_per_interval
    per_interval = np.empty(config.n_intervals)
    offsets = (np.arange(n) + 0.5) / n * (2.0 * config.radius) - config.radius
    for i, c in enumerate(config.centers):
        nodes = c + offsets
        sq = (nodes[:, None] - prototypes[None, :]) ** 2
        per_interval[i] = sq.min(axis=1).mean()
    return float(per_interval.mean())


def _compositions(total, parts):
    """All ways to write total as an ordered sum of `parts` positive ints."""
    for cut in combinations(range(1, total), parts - 1):
        bounds = (0,) + cut + (total,)
        yield tuple(b - a for a, b in zip(bounds[:-1], bounds[1:]))


@dataclass
class BruteForceResult:
    prototypes: np.ndarray
    distortion: float
    allocation: tuple


def optimal_quantizer_bruteforce(config, max_allocations=200000):
    """Exact optimum over prototype counts per interval.

    Enumerates every allocation giving each interval at least one
    prototype (k >= M required; allocations that starve an interval are
    dominated because any outside prototype pays at least (2r)^2 there
    while one inside pays at most r^2 / 3). Each interval's contribution
    uses the closed-form optimum r^2 / (3 q^2) with equal-cell midpoint
    prototypes.
    """
    m = config.n_intervals
    if config.k < m:
        raise ValueError(
            f"brute force requires k >= number of intervals ({config.k} < {m})"
        )
    n_alloc = comb(config.k - 1, m - 1)
    if n_alloc > max_allocations:
        raise ValueError(
            f"{n_alloc} allocations exceed the enumeration budget {max_allocations}"
        )
    best = None
    for alloc in _compositions(config.k, m):
        j = float(
            np.mean([interval_distortion(q, config.radius) for q in alloc])
        )
        if best is None or j < best[0]:
            best = (j, alloc)
    j_star, alloc = best
    prototypes = []
    for c, q in zip(config.centers, alloc):
        cell = 2.0 * config.radius / q
        for i in range(q):
            prototypes.append(c - config.radius + (i + 0.5) * cell)
    return BruteForceResult(
        prototypes=np.array(prototypes), distortion=j_star, allocation=alloc
    )


def collapse_penalty(config):
    """Guaranteed extra distortion of any collapsed configuration.

    When k = M, parking every prototype inside one interval costs at
    least 3 r^2 / (4 M) more than the one-prototype-per-interval
    optimum: the starved intervals pay (x - c)^2 + r^2 / 3 >= 4 r^2 / 3
    each, against r^2 / 3 at the optimum.
    """
    return 3.0 * config.radius**2 / (4.0 * config.n_intervals)


def fixed_tether_minimizer(action, q_peak, alpha, concavity):
    """Resting point of ||x - a||^2 - alpha * Q(x) for quadratic Q.

    With Q(x) = -(m/2) ||x - x_q||^2 the unique minimizer is
    (2 a + alpha m x_q) / (2 + alpha m): a convex blend that leaves the
    data action only when alpha m > 0 and reaches x_q only in the limit.
    """
    action = np.atleast_1d(as_float_array(action, "action"))
    q_peak = np.atleast_1d(as_float_array(q_peak, "q_peak"))
    if action.shape != q_peak.shape:
        raise ValueError(
            f"action shape {action.shape} != q_peak shape {q_peak.shape}"
        )
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    check_positive(concavity, "concavity")
    am = alpha * concavity
    return (2.0 * action + am * q_peak) / (2.0 + am)


def tether_bias_ratio(alpha, concavity):
    """||x_fix - x_q|| / ||a - x_q|| for the quadratic case: 2 / (2 + alpha m)."""
    if alpha < 0:
        raise ValueError(f"alpha must be >= 0, got {alpha}")
    check_positive(concavity, "concavity")
    return 2.0 / (2.0 + alpha * concavity)


def _check_mode_probs(mode_probs):
    p = np.atleast_1d(as_float_array(mode_probs, "mode_probs"))
    if np.any(p <= 0.0) or np.any(p > 1.0):
        raise ValueError(f"mode probabilities must lie in (0, 1], got {p}")
    if p.sum() > 1.0 + 1e-12:
        raise ValueError(
            f"mode probabilities describe disjoint neighborhoods and must "
            f"sum to <= 1, got sum {p.sum()}"
        )
    return p


def coverage_bound(mode_probs, k):
    """Union lower bound on P(every mode receives a candidate):
    1 - sum_m (1 - p_m)^k."""
    p = _check_mode_probs(mode_probs)
    k = int(k)
    check_positive(k, "k")
    return float(1.0 - np.sum((1.0 - p) ** k))


def coverage_exponential_bound(mode_probs, k):
    """Weaker closed form 1 - M * exp(-k * min_m p_m)."""
    p = _check_mode_probs(mode_probs)
    k = int(k)
    check_positive(k, "k")
    return float(1.0 - len(p) * np.exp(-k * p.min()))


def coverage_montecarlo(mode_probs, k, trials=1000000, seed=0, chunk=100000):
    """Empirical all-modes-hit frequency under categorical-or-miss draws.

    Each of the k draws lands in mode m with probability p_m or misses
    all modes with the leftover mass. Returns (estimate, standard_error).
    """
    p = _check_mode_probs(mode_probs)
    k = int(k)
    trials = int(trials)
    check_positive(k, "k")
    check_positive(trials, "trials")
    rng = check_rng(np.random.SeedSequence(seed))
    cum = np.cumsum(p)
    n_modes = len(p)
    hits = 0
    remaining = trials
    while remaining > 0:
        block = min(chunk, remaining)
        u = rng.random((block, k))
        idx = np.searchsorted(cum, u, side="right")
        covered = np.ones(block, dtype=bool)
        for m in range(n_modes):
            covered &= (idx == m).any(axis=1)
        hits += int(covered.sum())
        remaining -= block
    estimate = hits / trials
    std_err = float(np.sqrt(max(estimate * (1.0 - estimate), 1e-12) / trials))
    return estimate, std_err
