"""Pseudo-random and low-discrepancy samplers on hyperrectangles."""

from __future__ import annotations

import enum
import logging
import warnings

import numpy as np
from scipy.stats import qmc

log = logging.getLogger(__name__)

SOBOL_MAX_DIM = 64


class SequenceKind(str, enum.Enum):
    UNIFORM = "uniform-pseudo"
    GAUSSIAN = "gaussian-pseudo"
    HALTON = "halton"
    SOBOL = "sobol"


class UnsupportedDimensionError(ValueError):
    pass


def first_primes(count: int) -> list[int]:
    primes: list[int] = []
    candidate = 2
    while len(primes) < count:
        if all(candidate % p for p in primes if p * p <= candidate):
            primes.append(candidate)
        candidate += 1
    return primes


def radical_inverse(indices: np.ndarray, base: int) -> np.ndarray:
    """Van der Corput radical inverse of non-negative integers in ``base``."""
    idx = np.asarray(indices, dtype=np.int64).copy()
    out = np.zeros(idx.shape, dtype=float)
    scale = 1.0 / base
    while np.any(idx > 0):
        out += (idx % base) * scale
        idx //= base
        scale /= base
    return out


def halton(N: int, n: int, offset: int = 1) -> np.ndarray:
    """Unscrambled Halton points with indices ``offset .. offset+N-1`` in [0,1)^n."""
    if offset < 0:
        raise ValueError("offset must be non-negative")
    idx = np.arange(offset, offset + N)
    return np.column_stack([radical_inverse(idx, b) for b in first_primes(n)])


def sobol(N: int, n: int, seed: int = 0) -> np.ndarray:
    if n > SOBOL_MAX_DIM:
        raise UnsupportedDimensionError(f"sobol supports n <= {SOBOL_MAX_DIM}, got {n}")
    # seed acts as a start-index skip so the sequence stays unscrambled
    engine = qmc.Sobol(d=n, scramble=False)
    if seed > 0:
        engine.fast_forward(int(seed))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)  # balance warning for non power-of-two N
        return engine.random(N)


def _check_sizes(N: int, n: int) -> None:
    if N < 1 or n < 1:
        raise ValueError("N and n must be >= 1")


def sample_hypercube(kind, N: int, n: int, bounds=None, seed: int = 0,
                     fallback: bool = False) -> np.ndarray:
    """Draw ``N`` points in the box ``bounds`` (default ``[-1, 1]^n``).

    For Halton ``seed`` is the start-index offset (0 is mapped to 1 so the
    origin is skipped); for Sobol it is the number of skipped points. With
    ``fallback=True`` a Sobol request beyond the direction-number table
    degrades to Halton with a warning instead of raising.
    """
    kind = SequenceKind(kind)
    _check_sizes(N, n)
    if kind is SequenceKind.GAUSSIAN:
        raise ValueError("use sample_gaussian for Gaussian inputs")
    bounds = np.tile([-1.0, 1.0], (n, 1)) if bounds is None else np.asarray(bounds, float).reshape(n, 2)
    if kind is SequenceKind.UNIFORM:
        U = np.random.default_rng(seed).random((N, n))
    elif kind is SequenceKind.HALTON:
        U = halton(N, n, offset=max(int(seed), 1))
    else:
        try:
            U = sobol(N, n, seed)
        except UnsupportedDimensionError:
            if not fallback:
                raise
            warnings.warn(f"sobol unavailable for n={n}; falling back to halton", RuntimeWarning)
            U = halton(N, n, offset=max(int(seed), 1))
    lo, hi = bounds[:, 0], bounds[:, 1]
    return lo + U * (hi - lo)


def sample_gaussian(N: int, n: int, seed: int = 0) -> np.ndarray:
    _check_sizes(N, n)
    return np.random.default_rng(seed).standard_normal((N, n))


def fill_distance(points: np.ndarray, n_probe: int = 4096, seed: int = 0) -> float:
    """Largest distance from a probe point in the unit box to its nearest sample."""
    from scipy.spatial import cKDTree

    points = np.asarray(points, dtype=float)
    probes = halton(n_probe, points.shape[1], offset=max(seed, 1) + 10_007)
    probes = np.vstack([probes, np.array(np.meshgrid(*[[0.0, 1.0]] * points.shape[1])).reshape(points.shape[1], -1).T])
    dist, _ = cKDTree(points).query(probes)
    return float(dist.max())
