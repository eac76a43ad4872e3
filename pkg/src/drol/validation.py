"""Small input-validation helpers shared across the package."""

import numpy as np


def as_float_array(x, name, ndim=None, shape=None):
    """Coerce to a float64 array and check rank / shape.

    Raises ValueError with the offending name so callers get a usable
    message instead of a broadcast error deep inside a matmul.
    """
    arr = np.asarray(x, dtype=np.float64)
    if ndim is not None and arr.ndim != ndim:
        raise ValueError(f"{name}: expected {ndim}-d array, got shape {arr.shape}")
    if shape is not None:
        for axis, want in enumerate(shape):
            if want is not None and arr.shape[axis] != want:
                raise ValueError(f"{name}: expected shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: contains non-finite values")
    return arr


def check_positive(value, name, strict=True):
    if strict and not value > 0:
        raise ValueError(f"{name} must be > 0, got {value}")
    if not strict and value < 0:
        raise ValueError(f"{name} must be >= 0, got {value}")
    return value


def check_in_range(value, name, low, high, include_low=False, include_high=False):
    lo_ok = value >= low if include_low else value > low
    hi_ok = value <= high if include_high else value < high
    if not (lo_ok and hi_ok):
        lo_b = "[" if include_low else "("
        hi_b = "]" if include_high else ")"
        raise ValueError(f"{name} must lie in {lo_b}{low}, {high}{hi_b}, got {value}")
    return value


def check_choice(value, name, choices):
    if value not in choices:
        raise ValueError(f"{name} must be one of {sorted(choices)}, got {value!r}")
    return value


def check_rng(rng_or_seed):
    """Accept a Generator, a SeedSequence, an int seed, or None."""
    if isinstance(rng_or_seed, np.random.Generator):
        return rng_or_seed
    if isinstance(rng_or_seed, np.random.SeedSequence):
        return np.random.Generator(np.random.PCG64(rng_or_seed))
    return np.random.Generator(np.random.PCG64(rng_or_seed))
