"""
Count-statistics package: Bernoulli-sum moments of label counts, their
aggregation across blocks, alpha-scaled targets, the matching loss and
Monte Carlo samplers.
"""
from src.countstats.montecarlo import (
    MonteCarloMoments,
    empirical_moments,
    sample_block_counts,
    sample_coupled_counts,
    sample_group_counts,
    variance_ratio,
)
from src.countstats.stats import (
    VAR_FLOOR,
    BatchCountStats,
    BlockCountStats,
    CountTarget,
    block_count_stats,
    gaussian_match_loss,
    inter_instance_stats,
    scale_target,
    total_variance_stats,
)

__all__ = [
    "VAR_FLOOR",
    "BatchCountStats",
    "BlockCountStats",
    "CountTarget",
    "MonteCarloMoments",
    "block_count_stats",
    "empirical_moments",
    "gaussian_match_loss",
    "inter_instance_stats",
    "sample_block_counts",
    "sample_coupled_counts",
    "sample_group_counts",
    "scale_target",
    "total_variance_stats",
    "variance_ratio",
]
