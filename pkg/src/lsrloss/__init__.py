"""
Training losses built from count statistics over blocks and groups of blocks.
"""
from src.lsrloss.losses import (
    Group,
    LossMode,
    LossOptions,
    batch_loss,
    inter_loss,
    intra_inter_loss,
    intra_loss,
    matched_target,
)

__all__ = [
    "Group",
    "LossMode",
    "LossOptions",
    "batch_loss",
    "inter_loss",
    "intra_inter_loss",
    "intra_loss",
    "matched_target",
]
