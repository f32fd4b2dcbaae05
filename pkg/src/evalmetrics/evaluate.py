"""
Split-level evaluation of predicted masks.
"""
from dataclasses import asdict, dataclass
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from src.evalmetrics.metrics import Distance, OverlapAccumulator, boundary_band
from src.segmodel import ModelParams, predict
from src.synthdata.generator import DatasetBlock
from src.utils.errors import DataError, EmptyBandError, ShapeError


class EvalConfig(BaseModel):
    """How predictions are thresholded and where masked metrics look."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    band_radius: Optional[float] = Field(None, ge=0.0)
    distance: Distance = "euclidean"
    uniform_blocks: Literal["unmasked", "skip"] = "unmasked"
    threshold: float = Field(0.5, gt=0.0, lt=1.0)
    overlay_tiles: int = Field(4, ge=1)

    def radius_for(self, side: int) -> float:
        """Configured radius, or the block side when unset."""
        return float(side) if self.band_radius is None else self.band_radius


@dataclass
class SplitMetrics:
    """Pooled metrics of one split; masked scores use boundary bands."""

    masked_iou: float
    masked_dice: float
    iou: float
    dice: float
    n_blocks: int
    n_uniform: int
    n_skipped: int

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def predict_masks(
    params: ModelParams,
    blocks: Sequence[DatasetBlock],
    threshold: float = 0.5,
    batch_size: int = 32,
) -> List[np.ndarray]:
    """Positive-class probability of each block thresholded at `threshold`."""
    masks: List[np.ndarray] = []
    for start in range(0, len(blocks), batch_size):
        chunk = blocks[start:start + batch_size]
        images = np.stack([b.channels_first() for b in chunk])
        probs = predict(params, images).values[:, 1]
        masks.extend((p > threshold).astype(np.uint8) for p in probs)
    return masks


def evaluate_split(
    blocks: Sequence[DatasetBlock],
    pred_masks: Sequence[np.ndarray],
    cfg: EvalConfig = EvalConfig(),
) -> SplitMetrics:
    """
    Pooled (micro-averaged) IoU and DICE over a split, unmasked and within the
    boundary band of each block's ground truth.

    Blocks whose ground truth holds one class have no band. They enter the
    masked scores with all their pixels (`uniform_blocks="unmasked"`) or are
    left out of them (`"skip"`); unmasked scores always include them.
    """
    if len(blocks) != len(pred_masks):
        raise ShapeError("evaluate_split", (len(blocks),), (len(pred_masks),))
    if not blocks:
        raise DataError("evaluate_split: no blocks")

    masked = OverlapAccumulator()
    plain = OverlapAccumulator()
    n_uniform = n_skipped = 0
    for block, pred in zip(blocks, pred_masks):
        gt = block.gt_mask
        plain.add(pred, gt)
        try:
            band = boundary_band(gt, cfg.radius_for(block.side), cfg.distance)
        except EmptyBandError:
            n_uniform += 1
            if cfg.uniform_blocks == "skip":
                n_skipped += 1
                continue
            masked.add(pred, gt)
            continue
        masked.add(pred, gt, band.mask)

    if n_uniform:
        logger.debug(f"evaluate_split: {n_uniform} uniform block(s), policy {cfg.uniform_blocks}")
    masked_iou, masked_dice = masked.scores()
    iou, dice = plain.scores()
    return SplitMetrics(
        masked_iou=masked_iou,
        masked_dice=masked_dice,
        iou=iou,
        dice=dice,
        n_blocks=len(blocks),
        n_uniform=n_uniform,
        n_skipped=n_skipped,
    )


def evaluate_model(
    params: ModelParams,
    blocks: Sequence[DatasetBlock],
    cfg: EvalConfig = EvalConfig(),
) -> SplitMetrics:
    return evaluate_split(blocks, predict_masks(params, blocks, cfg.threshold), cfg)
