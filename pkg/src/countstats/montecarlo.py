"""
Monte Carlo samplers for label counts.

These draw realizations of the pixel labels behind a probability map and
record the resulting count c_l, so the closed-form moments in
`src.countstats.stats` can be checked against sampled ones.
"""
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
from loguru import logger

from src.countstats.stats import block_count_stats
from src.utils.errors import ConfigError, DataError

ArrayLike = Union[np.ndarray, Sequence[float]]

DEFAULT_CHUNK = 50_000


@dataclass(frozen=True)
class MonteCarloMoments:
    """Sample mean and variance of counts with their standard errors."""

    mean: float
    var: float
    mean_se: float
    var_se: float
    n_draws: int

    def mean_within(self, expected: float, n_se: float = 3.0) -> bool:
        return abs(self.mean - expected) <= n_se * self.mean_se

    def var_within(self, expected: float, n_se: float = 3.0) -> bool:
        return abs(self.var - expected) <= n_se * self.var_se


def _flat_probs(prob_map: ArrayLike) -> np.ndarray:
    p = np.asarray(prob_map, dtype=np.float64).reshape(-1)
    if p.size == 0:
        raise DataError("empty probability map")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise DataError("probabilities must lie in [0, 1]")
    return p


def _check_draws(n_draws: int) -> None:
    if n_draws < 2:
        raise ConfigError(f"n_draws must be >= 2, got {n_draws}")


def sample_block_counts(
    prob_map: ArrayLike,
    n_draws: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """
    Counts c_l from independent Bernoulli pixel labels.

    Args:
        prob_map: Per-pixel probabilities of one class, any shape.
        n_draws: Number of realizations.
        seed: Generator seed.
        chunk_size: Realizations drawn per vectorized batch.

    Returns:
        Array of n_draws count fractions.
    """
    _check_draws(n_draws)
    p = _flat_probs(prob_map)
    rng = np.random.default_rng(seed)
    counts = np.empty(n_draws)
    for start in range(0, n_draws, chunk_size):
        stop = min(start + chunk_size, n_draws)
        counts[start:stop] = (rng.random((stop - start, p.size)) < p).mean(axis=1)
    return counts


def sample_group_counts(
    prob_maps: Sequence[ArrayLike],
    n_draws: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """
    Two-stage counts: pick a block uniformly, then sample its pixel labels.

    Args:
        prob_maps: Per-pixel probability maps of the group's blocks, equal sizes.
        n_draws: Number of realizations.
        seed: Generator seed.
        chunk_size: Realizations drawn per vectorized batch.

    Returns:
        Array of n_draws count fractions.
    """
    _check_draws(n_draws)
    if not prob_maps:
        raise DataError("sample_group_counts: empty group")
    blocks = np.stack([_flat_probs(p) for p in prob_maps])
    rng = np.random.default_rng(seed)
    counts = np.empty(n_draws)
    for start in range(0, n_draws, chunk_size):
        stop = min(start + chunk_size, n_draws)
        picks = rng.integers(0, len(blocks), size=stop - start)
        counts[start:stop] = (rng.random((stop - start, blocks.shape[1])) < blocks[picks]).mean(axis=1)
    return counts


def sample_coupled_counts(
    prob_map: ArrayLike,
    coupling: float,
    n_draws: int,
    seed: int,
    chunk_size: int = DEFAULT_CHUNK,
) -> np.ndarray:
    """
    Counts from pixel labels that share a latent uniform.

    With probability `coupling` a realization thresholds one shared uniform u
    against every pixel (x_i = u < p_i); otherwise each pixel gets its own
    uniform. Each pixel keeps its marginal p_i, while pairs get covariance
    coupling * (min(p_i, p_j) - p_i p_j) >= 0.

    Args:
        prob_map: Per-pixel probabilities of one class.
        coupling: Mixing weight in [0, 1]; 0 is the independent case.
        n_draws: Number of realizations.
        seed: Generator seed.
        chunk_size: Realizations drawn per vectorized batch.

    Returns:
        Array of n_draws count fractions.
    """
    _check_draws(n_draws)
    if not 0.0 <= coupling <= 1.0:
        raise ConfigError(f"coupling must lie in [0, 1], got {coupling}")
    p = _flat_probs(prob_map)
    rng = np.random.default_rng(seed)
    counts = np.empty(n_draws)
    for start in range(0, n_draws, chunk_size):
        stop = min(start + chunk_size, n_draws)
        size = stop - start
        independent = rng.random((size, p.size))
        shared = np.broadcast_to(rng.random((size, 1)), (size, p.size))
        coupled = rng.random(size) < coupling
        uniforms = np.where(coupled[:, None], shared, independent)
        counts[start:stop] = (uniforms < p).mean(axis=1)
    return counts


def empirical_moments(samples: ArrayLike) -> MonteCarloMoments:
    """
    Sample mean and (population) variance of draws, with standard errors.

    The variance's standard error uses the fourth central moment:
    se(var) = sqrt((m4 - var^2) / n).
    """
    x = np.asarray(samples, dtype=np.float64).reshape(-1)
    if x.size < 2:
        raise DataError("empirical_moments: need at least two samples")
    n = x.size
    mean = float(x.mean())
    centered = x - mean
    var = float(np.mean(centered ** 2))
    m4 = float(np.mean(centered ** 4))
    return MonteCarloMoments(
        mean=mean,
        var=var,
        mean_se=float(np.sqrt(var / n)),
        var_se=float(np.sqrt(max(m4 - var * var, 0.0) / n)),
        n_draws=n,
    )


def variance_ratio(prob_map: ArrayLike, coupling: float, n_draws: int, seed: int) -> float:
    """
    Closed-form (independent-pixel) variance divided by the sampled variance
    of coupled pixel labels; below 1 whenever the coupling adds covariance.
    Its square root is the rho scale a matching target would need.
    """
    p = _flat_probs(prob_map)
    formula = block_count_stats(p, class_id=1).var.item()
    sampled = empirical_moments(sample_coupled_counts(p, coupling, n_draws, seed)).var
    if sampled == 0.0:
        raise DataError("variance_ratio: sampled variance is zero, the map is deterministic")
    ratio = formula / sampled
    logger.debug(f"variance_ratio: formula {formula:.6g}, sampled {sampled:.6g}, ratio {ratio:.4f}")
    return ratio
