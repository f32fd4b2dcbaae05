"""
Intra-instance, inter-instance and combined label-super-resolution losses.

Every loss compares count statistics of the network's predictions with the
table entry (eta, rho) of the blocks' low-resolution label and averages the
Gaussian matching loss over classes.
"""
from dataclasses import dataclass, field, replace
from typing import Iterable, List, Literal, Optional, Sequence, Tuple

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.countstats import (
    VAR_FLOOR,
    CountTarget,
    block_count_stats,
    gaussian_match_loss,
    inter_instance_stats,
    scale_target,
    total_variance_stats,
)
from src.countstats.stats import LossForm, Normalization
from src.diffcore import Tensor, as_tensor, ops
from src.synthdata.tables import CountDistributionTable
from src.utils.errors import ConfigError, DataError, MixedGroupError

ModeName = Literal["intra", "inter", "intra_inter"]
Member = Tuple[Tensor, int]


class LossMode(BaseModel):
    """Which loss to train with, and the rho scale alpha (ignored by inter)."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    name: ModeName = "intra_inter"
    alpha: float = Field(1.0, gt=0.0, le=1.0)

    @property
    def needs_groups(self) -> bool:
        return self.name != "intra"


@dataclass(frozen=True)
class LossOptions:
    """Knobs shared by all three losses."""

    positive_only: bool = False
    normalization: Normalization = "fraction"
    var_floor: float = VAR_FLOOR
    form: LossForm = "variance_weighted"


@dataclass
class Group:
    """Probability maps (L, H, W) of blocks that share one low-resolution label."""

    members: List[Member] = field(default_factory=list)

    def __post_init__(self):
        self.members = [(as_tensor(p), int(z)) for p, z in self.members]
        labels = {z for _, z in self.members}
        if len(labels) > 1:
            raise MixedGroupError(f"group mixes low-resolution labels {sorted(labels)}")

    @property
    def z(self) -> int:
        if not self.members:
            raise DataError("empty group has no label")
        return self.members[0][1]

    @property
    def size(self) -> int:
        return len(self.members)

    @property
    def prob_maps(self) -> List[Tensor]:
        return [p for p, _ in self.members]


def _classes(prob_map: Tensor, options: LossOptions) -> List[int]:
    return [1] if options.positive_only else list(range(prob_map.shape[0]))


def _target(table: CountDistributionTable, z: int, class_id: int, alpha: Optional[float]) -> CountTarget:
    target = table.target(z, class_id)
    if alpha is None:
        return target
    return scale_target(replace(target, alpha=alpha))


def matched_target(table: CountDistributionTable, z: int, class_id: int, mode: LossMode) -> CountTarget:
    """The (eta, rho) a loss of this mode matches class `class_id` of label z against."""
    return _target(table, z, class_id, None if mode.name == "inter" else mode.alpha)


def _require_group(group: Group, name: str) -> None:
    if group.size < 2:
        raise DataError(f"{name}: group size must be >= 2, got {group.size}")


def _mean(losses: Sequence[Tensor]) -> Tensor:
    return ops.stack_scalars(losses).mean()


def intra_loss(
    batch: Iterable[Member],
    table: CountDistributionTable,
    alpha: float = 1.0,
    options: LossOptions = LossOptions(),
) -> Tensor:
    """
    Per-block matching: each block's own count moments against the alpha-scaled
    target of its label, averaged over blocks and classes. Labels may differ
    across the batch.

    Raises:
        UnknownLabelError: If a label is not in the table.
        ConfigError: If alpha is outside (0, 1].
    """
    losses = []
    for prob_map, z in batch:
        prob_map = as_tensor(prob_map)
        for class_id in _classes(prob_map, options):
            stats = block_count_stats(prob_map, class_id, z, options.normalization)
            target = _target(table, z, class_id, alpha)
            losses.append(gaussian_match_loss(stats.mu, stats.var, target.eta, target.rho, options.var_floor, options.form))
    if not losses:
        raise DataError("intra_loss: empty batch")
    return _mean(losses)


def inter_loss(
    group: Group,
    table: CountDistributionTable,
    alpha: Optional[float] = None,
    options: LossOptions = LossOptions(),
) -> Tensor:
    """
    Across-block matching: the empirical mean and population variance of the
    blocks' mean counts against the unscaled target. `alpha` is accepted for a
    uniform call signature and ignored.
    """
    _require_group(group, "inter_loss")
    losses = []
    for class_id in _classes(group.prob_maps[0], options):
        mus = [block_count_stats(p, class_id, group.z, options.normalization).mu for p in group.prob_maps]
        stats = inter_instance_stats(mus)
        target = _target(table, group.z, class_id, None)
        losses.append(gaussian_match_loss(stats.mu, stats.var, target.eta, target.rho, options.var_floor, options.form))
    return _mean(losses)


def intra_inter_loss(
    group: Group,
    table: CountDistributionTable,
    alpha: float = 1.0,
    options: LossOptions = LossOptions(),
) -> Tensor:
    """
    Across-block matching with the law of total variance: mean within-block
    variance plus the spread of block means, against the alpha-scaled target.
    """
    _require_group(group, "intra_inter_loss")
    losses = []
    for class_id in _classes(group.prob_maps[0], options):
        per_block = [block_count_stats(p, class_id, group.z, options.normalization) for p in group.prob_maps]
        stats = total_variance_stats(per_block)
        target = _target(table, group.z, class_id, alpha)
        losses.append(gaussian_match_loss(stats.mu, stats.var, target.eta, target.rho, options.var_floor, options.form))
    return _mean(losses)


def batch_loss(
    groups: Sequence[Group],
    mode: LossMode,
    table: CountDistributionTable,
    options: LossOptions = LossOptions(),
) -> Tensor:
    """
    Loss of one training batch.

    Group losses are averaged in the given order; in intra mode the groups are
    flattened into a single pool of blocks.
    """
    if not groups:
        raise DataError("batch_loss: no groups")
    if mode.name == "intra":
        return intra_loss([m for g in groups for m in g.members], table, mode.alpha, options)
    if mode.name == "inter":
        losses = [inter_loss(g, table, None, options) for g in groups]
    elif mode.name == "intra_inter":
        losses = [intra_inter_loss(g, table, mode.alpha, options) for g in groups]
    else:
        raise ConfigError(f"unknown loss mode {mode.name!r}")
    logger.trace(f"batch_loss[{mode.name}] over {len(groups)} group(s)")
    return _mean(losses)
