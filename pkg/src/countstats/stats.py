"""
Label-count moments and the Gaussian statistics-matching loss.

A block's predicted label count c_l is the fraction of pixels of class l when
every pixel is drawn independently from the network's Bernoulli prediction.
Its mean and variance are matched against the target distribution of c_l for
the block's low-resolution label.
"""
import math
from dataclasses import dataclass, replace
from typing import Literal, Optional, Sequence, Union

import numpy as np
from loguru import logger

from src.diffcore import Tensor, as_tensor, ops
from src.utils.errors import ConfigError, DataError, MixedGroupError, NonFiniteError, ShapeError

Scalar = Union[Tensor, float]
Normalization = Literal["fraction", "per_pixel"]
# variance_weighted: the variance-weighted mismatch plus log(2 pi v)
# convolved: -log N(eta; mu, rho^2 + v), the target and prediction Gaussians convolved
LossForm = Literal["variance_weighted", "convolved"]

VAR_FLOOR = 1e-8
LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class BlockCountStats:
    """Gaussian moments of c_l for one block."""

    mu: Tensor
    var: Tensor
    block_size: int
    class_id: int
    low_res_label: Optional[int] = None


@dataclass(frozen=True)
class BatchCountStats:
    """Across-block moments of c_l for a group sharing one low-resolution label."""

    mu: Tensor
    var: Tensor
    n_blocks: int
    mode: Literal["inter", "total_variance"]
    single_block: bool = False


@dataclass(frozen=True)
class CountTarget:
    """Target moments (eta, rho) of c_l, with the scale alpha applied to rho."""

    eta: float
    rho: float
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise DataError(f"target eta must lie in [0, 1], got {self.eta}")
        if self.rho < 0.0:
            raise DataError(f"target rho must be >= 0, got {self.rho}")
        if not 0.0 < self.alpha <= 1.0:
            raise ConfigError(f"alpha must lie in (0, 1], got {self.alpha}")


def block_count_stats(
    prob_map: Tensor,
    class_id: int,
    low_res_label: Optional[int] = None,
    normalization: Normalization = "fraction",
) -> BlockCountStats:
    """
    Mean and variance of the label count of one block.

    mu  = (1/|X|) * sum p
    var = sum p (1 - p) / |X|^2      (normalization="fraction")
    var = sum p (1 - p) / |X|        (normalization="per_pixel")

    Args:
        prob_map: Class probabilities (L, H, W), or the (H, W) map of class `class_id`.
        class_id: Class l.
        low_res_label: Label z of the block, carried along for grouping checks.
        normalization: Variance normalization.

    Returns:
        BlockCountStats with differentiable mu and var.

    Raises:
        DataError: If the map is empty or holds values outside [0, 1].
    """
    prob_map = as_tensor(prob_map)
    p = prob_map[class_id] if prob_map.ndim == 3 else prob_map
    if p.size == 0:
        raise DataError("block_count_stats: empty probability map")
    if np.any(p.values < 0.0) or np.any(p.values > 1.0):
        raise DataError("block_count_stats: probabilities must lie in [0, 1]")

    n = p.size
    mu = p.mean()
    spread = (p * (1.0 - p)).sum()
    var = spread / float(n * n) if normalization == "fraction" else spread / float(n)
    return BlockCountStats(mu=mu, var=var, block_size=n, class_id=class_id, low_res_label=low_res_label)


def inter_instance_stats(mus: Union[Sequence[Scalar], Tensor]) -> BatchCountStats:
    """
    Empirical moments of per-block mean counts, each block's count taken as constant.

    mu = mean_k mu_k,  var = (1/N) sum_k (mu_k - mu)^2

    Args:
        mus: Per-block mean counts.

    Returns:
        BatchCountStats in "inter" mode; a single block gives var = 0 and sets `single_block`.

    Raises:
        DataError: If the sequence is empty or holds values outside [0, 1].
    """
    values = mus if isinstance(mus, Tensor) else (ops.stack_scalars(mus) if len(mus) else None)
    if values is None or values.size == 0:
        raise DataError("inter_instance_stats: empty sequence")
    values = values.reshape(values.size)
    if np.any(values.values < 0.0) or np.any(values.values > 1.0):
        raise DataError("inter_instance_stats: mean counts must lie in [0, 1]")

    n = values.size
    mu = values.mean()
    centered = values - mu
    var = (centered * centered).mean()
    if n == 1:
        logger.warning("inter_instance_stats: single block, variance is 0 by construction")
    return BatchCountStats(mu=mu, var=var, n_blocks=n, mode="inter", single_block=n == 1)


def total_variance_stats(stats: Sequence[BlockCountStats]) -> BatchCountStats:
    """
    Across-block moments when each block's count is itself Bernoulli-random.

    mu  = mean_k mu_k
    var = mean_k var_k + (1/N) sum_k (mu_k - mu)^2       (law of total variance)

    Args:
        stats: Per-block statistics sharing one class and one low-resolution label.

    Returns:
        BatchCountStats in "total_variance" mode.

    Raises:
        DataError: If empty.
        MixedGroupError: If the blocks disagree on class or label.
    """
    if not stats:
        raise DataError("total_variance_stats: empty group")
    classes = {s.class_id for s in stats}
    labels = {s.low_res_label for s in stats}
    if len(classes) > 1 or len(labels) > 1:
        raise MixedGroupError(f"total_variance_stats: mixed classes {sorted(classes)} or labels {sorted(labels, key=str)}")

    between = inter_instance_stats(ops.stack_scalars([s.mu for s in stats]))
    within = ops.stack_scalars([s.var for s in stats]).mean()
    return BatchCountStats(
        mu=between.mu,
        var=within + between.var,
        n_blocks=len(stats),
        mode="total_variance",
        single_block=len(stats) == 1,
    )


def scale_target(target: CountTarget) -> CountTarget:
    """
    Replace rho by alpha * rho, compensating for the independence assumption
    that makes the model-side variance too small.

    Args:
        target: Unscaled target carrying the alpha to apply.

    Returns:
        Target with eta unchanged and rho' = alpha * rho; alpha stays recorded.
    """
    if not 0.0 < target.alpha <= 1.0:
        raise ConfigError(f"alpha must lie in (0, 1], got {target.alpha}")
    return replace(target, rho=target.alpha * target.rho)


def gaussian_match_loss(
    mu: Scalar,
    var: Scalar,
    eta: float,
    rho: float,
    var_floor: float = VAR_FLOOR,
    form: LossForm = "variance_weighted",
) -> Tensor:
    """
    Distance between the predicted count Gaussian (mu, var) and the target (eta, rho^2).

    With v = var + var_floor:

        variance_weighted:  1/2 * v (eta - mu)^2 / (rho^2 + v)^2 + 1/2 * log(2 pi v)
        convolved:          1/2 * (eta - mu)^2 / (rho^2 + v) + 1/2 * log(2 pi (rho^2 + v))

    The variance-weighted form is not a negative log-likelihood: it decreases
    without bound as v goes to 0 whatever mu is, so a saturated network
    minimises it. The convolved form keeps the mean mismatch weighted by at
    least 1 / (rho^2 + v) and is the one training uses by default.

    Args:
        mu: Predicted mean count.
        var: Predicted count variance.
        eta: Target mean count.
        rho: Target standard deviation.
        var_floor: Added to var so the log and the denominator stay finite.
        form: Which of the two distances to compute.

    Returns:
        Scalar tensor.

    Raises:
        NonFiniteError: If an input is NaN or infinite.
        DataError: If the floored variance is not positive or rho is negative.
    """
    mu, var = as_tensor(mu), as_tensor(var)
    for name, value in (("mu", mu.values), ("var", var.values), ("eta", eta), ("rho", rho)):
        if not np.all(np.isfinite(value)):
            raise NonFiniteError(f"gaussian_match_loss: {name} is not finite")
    if mu.size != 1 or var.size != 1:
        raise ShapeError("gaussian_match_loss", mu.shape, var.shape)
    if rho < 0.0:
        raise DataError(f"gaussian_match_loss: rho must be >= 0, got {rho}")
    if form not in ("variance_weighted", "convolved"):
        raise ConfigError(f"gaussian_match_loss: unknown form {form!r}")

    v = var + var_floor
    if v.item() <= 0.0:
        raise DataError(f"gaussian_match_loss: variance {var.item()} is below the floor")
    gap = eta - mu
    spread = rho * rho + v
    if form == "convolved":
        return 0.5 * gap * gap / spread + 0.5 * (ops.log(spread) + LOG_2PI)
    mismatch = 0.5 * v * gap * gap / (spread * spread)
    return mismatch + 0.5 * (ops.log(v) + LOG_2PI)
