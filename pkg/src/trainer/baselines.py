"""
Reference models: the low-resolution prediction and a model trained with
pixel labels on a small annotated subset.
"""
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from src.diffcore import Tensor
from src.evalmetrics.evaluate import EvalConfig
from src.segmodel import ModelParams, SegModelConfig, init_params, predict
from src.synthdata.generator import DatasetBlock
from src.synthdata.tables import CountDistributionTable
from src.trainer.runlog import RunLog
from src.trainer.sampling import Batch, BatchConfig, GroupSampler
from src.trainer.trainer import SAMPLER_STREAM, TrainConfig, batch_images, fit
from src.utils.errors import DataError, UnknownLabelError
from src.utils.json_utils import config_hash, header_fields

LOG_EPS = 1e-12


def lowres_baseline_masks(
    blocks: Sequence[DatasetBlock],
    table: CountDistributionTable,
    threshold: float = 0.5,
) -> List[np.ndarray]:
    """Each block filled with its label's positive-class eta, thresholded."""
    eta = table.positive_eta()
    masks = []
    for block in blocks:
        z = block.low_res_label
        if z is None or not table.covers(z):
            raise UnknownLabelError(f"block {block.block_id}: label {z} is not in the table")
        masks.append(np.full(block.gt_mask.shape, 1 if eta[z] > threshold else 0, dtype=np.uint8))
    return masks


def pixel_nll(params: ModelParams, blocks: Sequence[DatasetBlock], indices: Sequence[int]) -> Tensor:
    """Mean per-pixel negative log-likelihood of the ground-truth masks."""
    probs = predict(params, batch_images(blocks, indices))
    target = np.stack([blocks[i].gt_mask for i in indices]).astype(np.float64)
    positive = probs[:, 1] + LOG_EPS
    negative = probs[:, 0] + LOG_EPS
    return -(target * positive.log() + (1.0 - target) * negative.log()).mean()


def train_supervised_baseline(
    config: TrainConfig,
    blocks: Sequence[DatasetBlock],
    model_cfg: SegModelConfig = SegModelConfig(),
    eval_cfg: EvalConfig = EvalConfig(),
    val_blocks: Sequence[DatasetBlock] = (),
    test_blocks: Sequence[DatasetBlock] = (),
    out_dir: Optional[Path] = None,
) -> Tuple[ModelParams, RunLog]:
    """
    Per-pixel supervised training on a small labelled subset.

    Uses `config.supervised_learning_rate` and batches of `config.batch_size`
    distinct blocks; everything else follows the main training loop.

    Raises:
        DataError: If the subset is empty.
    """
    if not blocks:
        raise DataError("supervised baseline needs at least one labelled block")
    config = config.model_copy(update={"mode": "supervised"})
    cfg_hash = config_hash({
        "train": config,
        "model": model_cfg,
        "eval": eval_cfg,
        "subset": [b.block_id for b in blocks],
    })
    log = RunLog(
        header=header_fields(cfg_hash, config.seed, kind="supervised"),
        config={"train": config.model_dump(mode="json"), "model": model_cfg.model_dump(), "eval": eval_cfg.model_dump()},
    )
    rng = np.random.default_rng([config.seed, SAMPLER_STREAM])
    sampler = GroupSampler([0] * len(blocks), False, BatchConfig(batch_size=config.batch_size), rng)
    steps = config.steps_per_epoch(len(blocks))
    logger.info(f"Training supervised baseline on {len(blocks)} blocks for {config.epochs} epoch(s)")

    def loss_fn(current: ModelParams, batch: Batch) -> Tensor:
        return pixel_nll(current, blocks, [i for group in batch for i in group])

    best = fit(
        config,
        init_params(model_cfg, config.seed),
        loss_fn,
        sampler,
        steps,
        log,
        val_blocks=val_blocks,
        test_blocks=test_blocks,
        eval_cfg=eval_cfg,
        out_dir=out_dir,
    )
    return best, log
