"""
Surrogate low-resolution classifier and its probability bins.
"""
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import expit

DEFAULT_EDGES = (0.0, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 1.0)

# Keeps the labeler's noise stream apart from the generator's for the same block seed
LABEL_STREAM = 0x4C41424C


class LabelerConfig(BaseModel):
    """q = logistic(slope * fraction + intercept + N(0, noise_std))."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    slope: float = 8.0
    intercept: float = -4.0
    noise_std: float = Field(1.0, ge=0.0)
    sub_patches: int = Field(1, ge=1)

    @field_validator("sub_patches")
    @classmethod
    def _square(cls, value: int) -> int:
        s = int(round(np.sqrt(value)))
        if s * s != value:
            raise ValueError(f"sub_patches must be a perfect square, got {value}")
        return value


class BinScheme(BaseModel):
    """Edges of the low-resolution bins over classifier probability."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    edges: Tuple[float, ...] = DEFAULT_EDGES

    @field_validator("edges")
    @classmethod
    def _valid_edges(cls, value):
        edges = tuple(float(e) for e in value)
        if len(edges) < 2:
            raise ValueError("need at least two bin edges")
        if edges[0] != 0.0 or edges[-1] != 1.0:
            raise ValueError("bin edges must start at 0 and end at 1")
        if any(b <= a for a, b in zip(edges, edges[1:])):
            raise ValueError("bin edges must be strictly increasing")
        return edges

    @property
    def num_bins(self) -> int:
        return len(self.edges) - 1

    def bin_of(self, q: float) -> int:
        """Index of the bin holding q; q = 1 falls in the last bin."""
        index = int(np.searchsorted(self.edges, q, side="right")) - 1
        return min(max(index, 0), self.num_bins - 1)

    def bounds(self, z: int) -> Tuple[float, float]:
        return self.edges[z], self.edges[z + 1]

    def names(self) -> List[str]:
        """Percent ranges such as '0-20' and '95-100'."""
        return [f"{lo * 100:g}-{hi * 100:g}" for lo, hi in zip(self.edges, self.edges[1:])]


def classifier_probability(
    fraction: float,
    cfg: LabelerConfig,
    rng: np.random.Generator,
) -> float:
    fraction = min(max(float(fraction), 0.0), 1.0)
    noise = rng.normal(0.0, cfg.noise_std) if cfg.noise_std > 0 else 0.0
    return float(expit(cfg.slope * fraction + cfg.intercept + noise))


def simulate_low_res_label(
    true_fraction: float,
    bins: BinScheme,
    cfg: LabelerConfig,
    seed: int,
    sub_fractions: Optional[Sequence[float]] = None,
) -> int:
    """
    Bin of the surrogate classifier's probability for a block.

    With `sub_fractions`, the block probability is the maximum of the
    per-sub-patch probabilities. When `cfg.sub_patches` > 1 and no sub-patch
    fractions are given, the maximum is taken over that many independent
    draws at the block fraction.

    Args:
        true_fraction: Positive fraction of the block, clamped to [0, 1].
        bins: Bin scheme.
        cfg: Labeler configuration.
        seed: Block seed; equal (fraction, seed) give equal labels.
        sub_fractions: Positive fractions of the block's sub-patches.

    Returns:
        Bin index z in [0, bins.num_bins).
    """
    rng = np.random.default_rng([int(seed), LABEL_STREAM])
    if sub_fractions is None and cfg.sub_patches > 1:
        sub_fractions = [true_fraction] * cfg.sub_patches
    if sub_fractions:
        q = max(classifier_probability(f, cfg, rng) for f in sub_fractions)
    else:
        q = classifier_probability(true_fraction, cfg, rng)
    return bins.bin_of(q)
