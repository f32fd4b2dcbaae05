"""
Training loop for the label-super-resolution losses.
"""
import math
import time
from pathlib import Path
from typing import Callable, List, Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from tqdm import tqdm

from src.countstats.stats import LossForm, Normalization
from src.diffcore import Tensor
from src.evalmetrics.evaluate import EvalConfig, evaluate_model
from src.lsrloss import Group, LossMode, LossOptions, batch_loss
from src.segmodel import ModelParams, SegModelConfig, init_params, predict, save_checkpoint
from src.synthdata.dataset import Dataset
from src.synthdata.generator import DatasetBlock
from src.synthdata.tables import CountDistributionTable
from src.trainer.optimizer import RMSpropState, gradients_of, rmsprop_step
from src.trainer.runlog import RunLog
from src.trainer.sampling import Batch, BatchConfig, GroupSampler
from src.utils.errors import ConfigError, DivergenceError, NonFiniteError, UnknownLabelError
from src.utils.json_utils import config_hash, header_fields
from src.utils.logging import show_progress

TrainMode = Literal["intra", "inter", "intra_inter", "supervised"]

DEFAULT_LEARNING_RATES = {"intra": 3e-4, "inter": 1e-3, "intra_inter": 1e-3}
# Sampler draws come from their own stream so model init and batches stay independent
SAMPLER_STREAM = 0x53414D50
CHECKPOINT_NAME = "best.ckpt"
RUN_LOG_NAME = "run.jsonl"

BatchLossFn = Callable[[ModelParams, Batch], Tensor]


class TrainConfig(BaseModel):
    """Optimisation and batch-composition settings of one run."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    mode: TrainMode = "intra_inter"
    alpha: float = Field(1.0, gt=0.0, le=1.0)
    learning_rate: Optional[float] = Field(None, gt=0.0)
    supervised_learning_rate: float = Field(1e-3, gt=0.0)
    rmsprop_decay: float = Field(0.9, gt=0.0, lt=1.0)
    rmsprop_eps: float = Field(1e-8, gt=0.0)
    batch_size: int = Field(30, ge=1)
    group_size: int = Field(15, ge=1)
    groups_per_batch: int = Field(2, ge=1)
    min_group_size: int = Field(2, ge=1)
    epochs: int = Field(5, ge=0)
    eval_every: int = Field(1, ge=1)
    positive_only: bool = False
    normalization: Normalization = "fraction"
    var_floor: float = Field(1e-8, ge=0.0)
    loss_form: LossForm = "convolved"
    seed: int = 0

    @model_validator(mode="after")
    def _group_size(self) -> "TrainConfig":
        if self.group_size < self.min_group_size:
            raise ValueError(f"group_size ({self.group_size}) must be >= min_group_size ({self.min_group_size})")
        return self

    @property
    def grouped(self) -> bool:
        return self.mode in ("inter", "intra_inter")

    @property
    def effective_learning_rate(self) -> float:
        if self.mode == "supervised":
            return self.supervised_learning_rate
        return self.learning_rate if self.learning_rate is not None else DEFAULT_LEARNING_RATES[self.mode]

    @property
    def loss_mode(self) -> LossMode:
        if self.mode == "supervised":
            raise ConfigError("supervised mode has no label-super-resolution loss")
        return LossMode(name=self.mode, alpha=self.alpha)

    @property
    def loss_options(self) -> LossOptions:
        return LossOptions(
            positive_only=self.positive_only,
            normalization=self.normalization,
            var_floor=self.var_floor,
            form=self.loss_form,
        )

    @property
    def batch_config(self) -> BatchConfig:
        return BatchConfig(batch_size=self.batch_size, group_size=self.group_size, groups_per_batch=self.groups_per_batch)

    def blocks_per_batch(self) -> int:
        return self.group_size * self.groups_per_batch if self.grouped else self.batch_size

    def steps_per_epoch(self, n_blocks: int) -> int:
        return max(1, math.ceil(n_blocks / self.blocks_per_batch()))


def table_hash(table: CountDistributionTable) -> str:
    return config_hash({"edges": table.edges, "eta": table.eta, "rho": table.rho, "n": table.n, "provenance": table.provenance})


def build_sampler(config: TrainConfig, blocks: Sequence[DatasetBlock]) -> GroupSampler:
    """Sampler with the run's dedicated random stream."""
    rng = np.random.default_rng([config.seed, SAMPLER_STREAM])
    grouped = config.grouped
    return GroupSampler([b.low_res_label for b in blocks], grouped, config.batch_config, rng)


def batch_images(blocks: Sequence[DatasetBlock], indices: Sequence[int]) -> np.ndarray:
    return np.stack([blocks[i].channels_first() for i in indices])


def make_groups(params: ModelParams, blocks: Sequence[DatasetBlock], batch: Batch) -> List[Group]:
    """One forward pass over every block of the batch, regrouped as sampled."""
    flat = [i for group in batch for i in group]
    probs = predict(params, batch_images(blocks, flat))
    groups = []
    position = 0
    for group in batch:
        members = []
        for i in group:
            members.append((probs[position], blocks[i].low_res_label))
            position += 1
        groups.append(Group(members))
    return groups


def check_compatible(model_cfg: SegModelConfig, dataset: Dataset) -> None:
    if (model_cfg.input_side, model_cfg.input_channels) != (dataset.generator.side, dataset.generator.channels):
        raise ConfigError(
            f"model input {model_cfg.input_side}x{model_cfg.input_side}x{model_cfg.input_channels} does not match "
            f"blocks of {dataset.generator.side}x{dataset.generator.side}x{dataset.generator.channels}"
        )


def fit(
    config: TrainConfig,
    params: ModelParams,
    loss_fn: BatchLossFn,
    sampler: GroupSampler,
    steps_per_epoch: int,
    log: RunLog,
    val_blocks: Sequence[DatasetBlock] = (),
    test_blocks: Sequence[DatasetBlock] = (),
    eval_cfg: EvalConfig = EvalConfig(),
    out_dir: Optional[Path] = None,
) -> ModelParams:
    """
    RMSprop loop shared by every training mode.

    Validation runs every `eval_every` epochs and after the last one; the
    parameters with the best validation masked IoU are kept (and saved when
    `out_dir` is set). Test metrics of the kept parameters go to `log.final`.

    Raises:
        DivergenceError: If a loss or an update is not finite.
    """
    lr = config.effective_learning_rate
    state = RMSpropState.zeros_like(params)
    best, best_score, best_epoch = params, -math.inf, 0
    global_step = 0
    started = time.perf_counter()

    for epoch in tqdm(range(1, config.epochs + 1), desc=f"Training [{config.mode}]", disable=not show_progress()):
        for _ in range(steps_per_epoch):
            batch = sampler.sample()
            try:
                loss = loss_fn(params, batch)
                value = loss.item()
                if not math.isfinite(value):
                    raise NonFiniteError(f"loss is {value}")
                loss.backward()
                params, state = rmsprop_step(
                    params, gradients_of(params), state, lr, config.rmsprop_decay, config.rmsprop_eps
                )
            except NonFiniteError as e:
                logger.error(f"Diverged at epoch {epoch}, step {global_step}: {e}")
                raise DivergenceError(f"training diverged at epoch {epoch}, step {global_step}: {e}") from e
            log.log_step(epoch, global_step, value)
            logger.debug(f"epoch {epoch} step {global_step} loss {value:.6f}")
            global_step += 1

        if val_blocks and (epoch % config.eval_every == 0 or epoch == config.epochs):
            metrics = evaluate_model(params, val_blocks, eval_cfg)
            log.log_eval(epoch, "val", metrics.to_dict())
            logger.info(f"epoch {epoch}: val masked IoU {metrics.masked_iou:.4f}, masked DICE {metrics.masked_dice:.4f}")
            if metrics.masked_iou > best_score:
                best, best_score, best_epoch = params, metrics.masked_iou, epoch

    if not log.evals:
        best, best_epoch = params, config.epochs
    if out_dir is not None:
        save_checkpoint(
            best,
            Path(out_dir) / CHECKPOINT_NAME,
            seed=config.seed,
            cfg_hash=log.header.get("config_hash"),
            epoch=best_epoch,
            mode=config.mode,
        )
    if test_blocks:
        metrics = evaluate_model(best, test_blocks, eval_cfg)
        log.final = {"split": "test", "epoch": best_epoch, **metrics.to_dict()}
        logger.info(f"test masked IoU {metrics.masked_iou:.4f}, masked DICE {metrics.masked_dice:.4f}")

    log.wall_clock_seconds = time.perf_counter() - started
    if out_dir is not None:
        log.to_jsonl(Path(out_dir) / RUN_LOG_NAME)
    return best


def train(
    config: TrainConfig,
    dataset: Dataset,
    table: CountDistributionTable,
    model_cfg: SegModelConfig = SegModelConfig(),
    eval_cfg: EvalConfig = EvalConfig(),
    out_dir: Optional[Path] = None,
) -> Tuple[ModelParams, RunLog]:
    """
    Train a segmentation model from low-resolution labels and a count table.

    Everything (init, sampling, updates, evaluation) is a function of the
    config and its seed.

    Args:
        config: Run settings; mode must be intra, inter or intra_inter.
        dataset: Blocks with train and optionally val and test splits.
        table: Count distribution covering every training label.
        model_cfg: Architecture.
        eval_cfg: Validation and test metric settings.
        out_dir: Where the best checkpoint and the run log go.

    Returns:
        (parameters with the best validation masked IoU, run log).
    """
    mode = config.loss_mode
    options = config.loss_options
    check_compatible(model_cfg, dataset)
    blocks = dataset.split("train")
    missing = sorted({b.low_res_label for b in blocks if not table.covers(b.low_res_label)})
    if missing:
        raise UnknownLabelError(f"table does not cover training labels {missing}")

    cfg_hash = config_hash({
        "train": config,
        "model": model_cfg,
        "eval": eval_cfg,
        "dataset": dataset.config_hash(),
        "table": table_hash(table),
    })
    log = RunLog(
        header=header_fields(cfg_hash, config.seed, kind=config.mode),
        config={"train": config.model_dump(mode="json"), "model": model_cfg.model_dump(), "eval": eval_cfg.model_dump()},
    )
    params = init_params(model_cfg, config.seed)
    sampler = build_sampler(config, blocks)
    steps = config.steps_per_epoch(len(blocks))
    logger.info(
        f"Training {config.mode} (alpha {config.alpha}, lr {config.effective_learning_rate:g}) "
        f"for {config.epochs} epoch(s) of {steps} step(s)"
    )

    def loss_fn(current: ModelParams, batch: Batch) -> Tensor:
        return batch_loss(make_groups(current, blocks, batch), mode, table, options)

    best = fit(
        config,
        params,
        loss_fn,
        sampler,
        steps,
        log,
        val_blocks=dataset.splits.get("val", []),
        test_blocks=dataset.splits.get("test", []),
        eval_cfg=eval_cfg,
        out_dir=out_dir,
    )
    return best, log
